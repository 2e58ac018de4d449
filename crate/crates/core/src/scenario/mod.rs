//! Seeded scenario generation, direct measurement synthesis and persistence.

pub mod io;
pub mod rng;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{
    steering_vector, wrap_distance, CMatrix, CVector, ChannelSpec, Codebook, Message, Path,
    Scenario, SensingMatrix, C64,
};
use rng::SeededRng;

pub use io::{load_scenario, save_scenario, scenario_from_json, scenario_to_json};

/// Upper bound on delay draws before generation gives up.
pub const MAX_REJECTION_ROUNDS: usize = 1_000_000;
/// Failed draws for a single delay before the whole delay set is restarted.
const RESTART_AFTER: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    #[default]
    Identity,
    UniformSubsample(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeDist {
    #[default]
    ComplexGaussian,
    UnitModulusRandomPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageMode {
    #[default]
    UnitSphereComplex,
    UnitSpherePositive,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_samples: usize,
    /// `P_k` per user; its length is the user count.
    pub path_counts: Vec<usize>,
    /// `M_k` per user.
    pub message_sizes: Vec<usize>,
    #[serde(default)]
    pub sensing: SensingMode,
    #[serde(default)]
    pub amplitudes: AmplitudeDist,
    #[serde(default)]
    pub messages: MessageMode,
    /// Minimum wrap-around distance between delays; `1/N` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_separation: Option<f64>,
    /// Enforce the separation across users as well as within each user.
    #[serde(default = "default_true")]
    pub cross_user_separation: bool,
    #[serde(default)]
    pub seed: u64,
}

impl GenConfig {
    pub fn new(n_samples: usize, path_counts: Vec<usize>, message_sizes: Vec<usize>) -> Self {
        Self {
            n_samples,
            path_counts,
            message_sizes,
            sensing: SensingMode::Identity,
            amplitudes: AmplitudeDist::ComplexGaussian,
            messages: MessageMode::UnitSphereComplex,
            min_separation: None,
            cross_user_separation: true,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn user_count(&self) -> usize {
        self.path_counts.len()
    }

    pub fn separation(&self) -> f64 {
        self.min_separation
            .unwrap_or(1.0 / self.n_samples.max(1) as f64)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.n_samples;
        if n == 0 {
            return domain("n_samples must be at least 1");
        }
        if self.path_counts.is_empty() {
            return domain("at least one user is required");
        }
        if self.path_counts.len() != self.message_sizes.len() {
            return domain(format!(
                "{} path counts but {} message sizes",
                self.path_counts.len(),
                self.message_sizes.len()
            ));
        }
        if self.path_counts.iter().any(|&p| p == 0) {
            return domain("every user needs at least one path");
        }
        if let Some(&m) = self.message_sizes.iter().find(|&&m| m == 0 || m > n) {
            return domain(format!("message size {m} outside [1, {n}]"));
        }
        if let SensingMode::UniformSubsample(m) = self.sensing {
            if m == 0 || m > n {
                return domain(format!("cannot subsample {m} of {n} samples"));
            }
        }
        let sep = self.separation();
        let max_p = *self.path_counts.iter().max().unwrap();
        if !(sep > 0.0 && sep <= 1.0 / max_p.max(2) as f64) {
            return domain(format!(
                "min_separation {sep} outside (0, 1/max(P_k, 2)]"
            ));
        }
        let crowd = if self.cross_user_separation {
            self.path_counts.iter().sum::<usize>()
        } else {
            max_p
        };
        if crowd as f64 * sep >= 1.0 {
            return Err(Error::Generation(format!(
                "{crowd} delays cannot be separated by {sep} on the unit circle"
            )));
        }
        Ok(())
    }
}

/// Draw a scenario. Everything is a function of `cfg`, the seed included.
///
/// Draw order: codebooks (user-major, row-major, real standard normals),
/// delays, amplitudes, messages.
pub fn generate_scenario(cfg: &GenConfig) -> Result<Scenario> {
    cfg.check()?;
    let n = cfg.n_samples;
    let mut rng = SeededRng::new(cfg.seed);

    let codebooks: Vec<Codebook> = cfg
        .message_sizes
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let mut entries = CMatrix::zeros(n, m);
            for i in 0..n {
                for j in 0..m {
                    entries[(i, j)] = C64::new(rng.normal(), 0.0);
                }
            }
            Codebook::new(k, entries)
        })
        .collect();

    let delays = draw_delays(cfg, &mut rng)?;

    let channels: Vec<ChannelSpec> = delays
        .into_iter()
        .map(|taus| {
            ChannelSpec::new(
                taus.into_iter()
                    .map(|tau| {
                        let gain = match cfg.amplitudes {
                            AmplitudeDist::ComplexGaussian => loop {
                                let g = rng.complex_normal();
                                if g.norm() > 0.0 {
                                    break g;
                                }
                            },
                            AmplitudeDist::UnitModulusRandomPhase => rng.unit_phase(),
                        };
                        Path { tau, gain }
                    })
                    .collect(),
            )
        })
        .collect();

    let messages = cfg
        .message_sizes
        .iter()
        .map(|&m| draw_message(m, cfg.messages, &mut rng))
        .collect();

    let sensing = match cfg.sensing {
        SensingMode::Identity => SensingMatrix::identity(n),
        SensingMode::UniformSubsample(m) => SensingMatrix::uniform_subsample(n, m)?,
    };

    let s = Scenario {
        n_samples: n,
        codebooks,
        channels,
        messages,
        sensing,
        seed: cfg.seed,
    };
    let achieved = if cfg.cross_user_separation {
        s.min_separation_all_users()
    } else {
        s.min_separation()
    };
    if let Some(d) = achieved {
        if d < cfg.separation() {
            return Err(Error::Generation(format!(
                "separation {d} below requested {}",
                cfg.separation()
            )));
        }
    }
    Ok(s)
}

fn draw_delays(cfg: &GenConfig, rng: &mut SeededRng) -> Result<Vec<Vec<f64>>> {
    let sep = cfg.separation();
    let mut rounds = 0usize;
    'restart: loop {
        let mut per_user: Vec<Vec<f64>> = Vec::with_capacity(cfg.user_count());
        for &p in &cfg.path_counts {
            let mut mine: Vec<f64> = Vec::with_capacity(p);
            for _ in 0..p {
                let mut misses = 0;
                loop {
                    rounds += 1;
                    if rounds > MAX_REJECTION_ROUNDS {
                        return Err(Error::Generation(format!(
                            "no separated delay set found after {MAX_REJECTION_ROUNDS} draws"
                        )));
                    }
                    let tau = rng.uniform();
                    let clashes = |others: &[f64]| others.iter().any(|&o| wrap_distance(o, tau) < sep);
                    let blocked = clashes(&mine)
                        || (cfg.cross_user_separation && per_user.iter().any(|u| clashes(u)));
                    if !blocked {
                        mine.push(tau);
                        break;
                    }
                    misses += 1;
                    if misses >= RESTART_AFTER {
                        continue 'restart;
                    }
                }
            }
            mine.sort_by(f64::total_cmp);
            per_user.push(mine);
        }
        return Ok(per_user);
    }
}

fn draw_message(m: usize, mode: MessageMode, rng: &mut SeededRng) -> Message {
    loop {
        let v = CVector::from_fn(m, |_, _| rng.complex_normal());
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        return match mode {
            MessageMode::UnitSphereComplex => Message::new(v / C64::new(norm, 0.0), false),
            MessageMode::UnitSpherePositive => {
                let mags = v.map(|z| C64::new(z.norm(), 0.0));
                let scale = mags.norm();
                Message::new(mags.map(|z| C64::new(z.re / scale, 0.0)), true)
            }
        };
    }
}

/// `y = D sum_k sum_l g_l^k a(tau_l^k) .* (conj(C_k) x_k)`, evaluated directly
/// rather than through the lifted operator.
///
/// Codebooks are read in the same conjugated convention as the lifted map, so
/// this agrees with `forward(lift_ground_truth(s))`; for real codebooks the
/// conjugate is a no-op.
pub fn synthesize_measurements(s: &Scenario) -> Result<CVector> {
    let report = s.validate();
    if !report.is_valid() {
        return domain(format!("invalid scenario: {}", report.violations.join("; ")));
    }
    let n = s.n_samples;
    let mut v = CVector::zeros(n);
    for ((cb, ch), msg) in s.codebooks.iter().zip(&s.channels).zip(&s.messages) {
        let encoded = cb.entries.map(|z| z.conj()) * &msg.coords;
        for p in &ch.paths {
            let a = steering_vector(p.tau, n)?;
            v += a.component_mul(&encoded) * p.gain;
        }
    }
    Ok(s.sensing.apply(&v))
}

/// Per-user contribution to `y`, before summation.
pub fn user_contribution(s: &Scenario, k: usize) -> Result<CVector> {
    let n = s.n_samples;
    let encoded = s.codebooks[k].entries.map(|z| z.conj()) * &s.messages[k].coords;
    let mut v = CVector::zeros(n);
    for p in &s.channels[k].paths {
        v += steering_vector(p.tau, n)?.component_mul(&encoded) * p.gain;
    }
    Ok(s.sensing.apply(&v))
}
