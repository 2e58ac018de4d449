//! Experiment configuration and the named presets.

use serde::{Deserialize, Serialize};

use demix::scenario::{MessageMode, SensingMode};
use demix::{Error, GenConfig, LocalizeOptions, Result, SolverOptions};

use demix::recover::DEFAULT_CERT_TOL;

pub const PRESETS: &[&str] = &["fig2", "fig3a", "fig3b-text", "fig3b-caption", "fig3c", "fig4"];

/// A preset's scenario plus its default sweep grid and repetition count.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub gen: GenConfig,
    pub n_values: Vec<usize>,
    pub repetitions: usize,
}

pub fn preset(name: &str, paper_scale: bool) -> Result<Preset> {
    let pick = |desk: usize, paper: usize| if paper_scale { paper } else { desk };
    let (gen, n_values, repetitions) = match name {
        "fig2" => (GenConfig::new(64, vec![2, 1], vec![5, 5]), vec![], 1),
        "fig3a" => (GenConfig::new(pick(100, 200), vec![3; 4], vec![5; 4]), vec![], 1),
        "fig3b-text" => (GenConfig::new(pick(64, 128), vec![3; 3], vec![3, 2, 1]), vec![], 1),
        "fig3b-caption" => (GenConfig::new(pick(64, 128), vec![3, 2, 1], vec![5; 3]), vec![], 1),
        "fig3c" => {
            let n = pick(64, 128);
            let mut g = GenConfig::new(n, vec![1, 1], vec![16, 16]);
            g.sensing = SensingMode::UniformSubsample(n / 2);
            (g, vec![], 1)
        }
        "fig4" => {
            let mut g = GenConfig::new(64, vec![5, 5], vec![4, 4]);
            g.messages = MessageMode::UnitSpherePositive;
            (g, vec![16, 32, 64], 10)
        }
        other => {
            return Err(Error::Domain(format!(
                "unknown preset `{other}` (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(Preset {
        gen,
        n_values,
        repetitions,
    })
}

fn default_cert_tol() -> f64 {
    DEFAULT_CERT_TOL
}

/// What a config file holds. Everything is optional; a preset or an inline
/// scenario must be supplied by the file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub paper_scale: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<GenConfig>,
    pub solver: SolverOptions,
    pub localize: LocalizeOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cert_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            key: e.path().to_string(),
            msg: e.inner().to_string(),
        })
    }

    /// Fill in the preset and defaults.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let base = match &self.preset {
            Some(name) => Some(preset(name, self.paper_scale)?),
            None => None,
        };
        let gen = match (&self.scenario, &base) {
            (Some(g), _) => g.clone(),
            (None, Some(p)) => p.gen.clone(),
            (None, None) => {
                return Err(Error::Domain(
                    "no scenario: give a preset or an inline scenario".into(),
                ))
            }
        };
        let repetitions = self
            .repetitions
            .or(base.as_ref().map(|p| p.repetitions))
            .unwrap_or(1);
        if repetitions == 0 {
            return Err(Error::Domain("repetitions must be at least 1".into()));
        }
        let seeds = match &self.seeds {
            Some(s) if s.is_empty() => return Err(Error::Domain("seed list is empty".into())),
            Some(s) => s.clone(),
            None => {
                let first = self.seed.unwrap_or(gen.seed);
                (0..repetitions as u64).map(|r| first.wrapping_add(r)).collect()
            }
        };
        let n_values = self
            .n_values
            .clone()
            .or_else(|| base.as_ref().map(|p| p.n_values.clone()).filter(|v| !v.is_empty()))
            .unwrap_or_else(|| vec![gen.n_samples]);
        self.solver.check()?;
        if !(self.localize.threshold > 0.0) {
            return Err(Error::Domain("peak threshold must be positive".into()));
        }
        let cert_tol = self.cert_tol.unwrap_or_else(default_cert_tol);
        if !(cert_tol > 0.0) {
            return Err(Error::Domain("cert_tol must be positive".into()));
        }
        let resolved = ResolvedConfig {
            preset: self.preset.clone(),
            paper_scale: self.paper_scale,
            scenario: gen,
            solver: self.solver.clone(),
            localize: self.localize.clone(),
            cert_tol,
            seeds,
            n_values,
        };
        resolved.scenario_for(resolved.scenario.n_samples, resolved.seeds[0])?.check()?;
        Ok(resolved)
    }
}

/// The fully resolved configuration, written into every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub paper_scale: bool,
    pub scenario: GenConfig,
    pub solver: SolverOptions,
    pub localize: LocalizeOptions,
    pub cert_tol: f64,
    /// One per repetition; reused at every `N` of a sweep.
    pub seeds: Vec<u64>,
    pub n_values: Vec<usize>,
}

impl ResolvedConfig {
    /// The scenario config at sample count `n` and seed `seed`. A uniform
    /// subsampling keeps its ratio `M / N`.
    pub fn scenario_for(&self, n: usize, seed: u64) -> Result<GenConfig> {
        let mut g = self.scenario.clone();
        let n0 = g.n_samples;
        g.n_samples = n;
        g.seed = seed;
        if let SensingMode::UniformSubsample(m) = g.sensing {
            if n != n0 {
                g.sensing = SensingMode::UniformSubsample((m * n / n0.max(1)).max(1));
            }
        }
        g.check()?;
        Ok(g)
    }

    pub fn to_compact_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Apply a `key=value` override.
pub fn apply_override(cfg: &mut ExperimentConfig, kv: &str) -> std::result::Result<(), String> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| format!("override `{kv}` is not key=value"))?;
    let num = || {
        value
            .parse::<f64>()
            .map_err(|_| format!("override `{key}` needs a number, got `{value}`"))
    };
    let int = || {
        value
            .parse::<usize>()
            .map_err(|_| format!("override `{key}` needs an integer, got `{value}`"))
    };
    match key {
        "eps_abs" => cfg.solver.eps_abs = num()?,
        "eps_rel" => cfg.solver.eps_rel = num()?,
        "rho" => cfg.solver.rho = num()?,
        "alpha" => cfg.solver.alpha = num()?,
        "max_iters" => cfg.solver.max_iters = int()?,
        "threshold" => cfg.localize.threshold = num()?,
        "grid_factor" => cfg.localize.grid_factor = int()?,
        "merge_radius" => cfg.localize.merge_radius = Some(num()?),
        "cert_tol" => cfg.cert_tol = Some(num()?),
        _ => {
            return Err(format!(
                "unknown override `{key}` (known: eps_abs, eps_rel, rho, alpha, max_iters, threshold, grid_factor, merge_radius, cert_tol)"
            ))
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            for paper in [false, true] {
                let cfg = ExperimentConfig {
                    preset: Some(name.to_string()),
                    paper_scale: paper,
                    ..Default::default()
                };
                let r = cfg.resolve().unwrap();
                assert!(!r.seeds.is_empty());
            }
        }
        assert!(preset("fig9", false).is_err());
    }

    #[test]
    fn preset_sizes() {
        let p = preset("fig3a", true).unwrap();
        assert_eq!((p.gen.n_samples, p.gen.user_count()), (200, 4));
        assert_eq!(preset("fig3a", false).unwrap().gen.n_samples, 100);
        let p = preset("fig2", false).unwrap();
        assert_eq!(p.gen.path_counts, vec![2, 1]);
        assert_eq!(p.gen.message_sizes, vec![5, 5]);
        let p = preset("fig3c", true).unwrap();
        assert_eq!(p.gen.sensing, SensingMode::UniformSubsample(64));
        assert_eq!(p.gen.message_sizes, vec![16, 16]);
        let p = preset("fig4", false).unwrap();
        assert_eq!(p.n_values, vec![16, 32, 64]);
        assert_eq!(p.repetitions, 10);
        assert_eq!(p.gen.messages, MessageMode::UnitSpherePositive);
    }

    #[test]
    fn seeds_and_overrides() {
        let mut cfg = ExperimentConfig {
            preset: Some("fig4".into()),
            seed: Some(100),
            ..Default::default()
        };
        let r = cfg.resolve().unwrap();
        assert_eq!(r.seeds, (100..110).collect::<Vec<u64>>());
        apply_override(&mut cfg, "eps_abs=1e-9").unwrap();
        apply_override(&mut cfg, "cert_tol=0.05").unwrap();
        assert_eq!(cfg.solver.eps_abs, 1e-9);
        assert_eq!(cfg.cert_tol, Some(0.05));
        assert!(apply_override(&mut cfg, "bogus=1").is_err());
        assert!(apply_override(&mut cfg, "eps_abs").is_err());
        cfg.repetitions = Some(0);
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn subsample_ratio_follows_n() {
        let r = ExperimentConfig {
            preset: Some("fig3c".into()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        let g = r.scenario_for(32, 1).unwrap();
        assert_eq!(g.sensing, SensingMode::UniformSubsample(16));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig {
            preset: Some("fig2".into()),
            seeds: Some(vec![3, 4]),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_json("{\"presett\": \"fig2\"}").is_err());
    }
}
