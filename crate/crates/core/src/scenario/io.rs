//! Scenario JSON.
//!
//! ```json
//! {
//!   "n_samples": 4,
//!   "users": [
//!     {"codebook": [[[1.0, 0.0]], ...], "paths": [{"tau": 0.25, "g": [1.0, 0.0]}],
//!      "message": [[1.0, 0.0]], "positivity": false}
//!   ],
//!   "sensing": {"identity": true},
//!   "seed": 0
//! }
//! ```
//!
//! Doubles are written in shortest round-trip form and parsed with correct
//! rounding, so save/load is bit-exact for finite values.

use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::codec::{
    complex_from_wire, complex_to_wire, matrix_from_wire, matrix_to_wire, vector_from_wire,
    vector_to_wire, WireComplex, WireMatrix, WireVector,
};
use crate::error::{Error, Result};
use crate::model::{ChannelSpec, Codebook, Message, Path, Scenario, SensingMatrix, ValidationReport};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    n_samples: usize,
    users: Vec<UserFile>,
    sensing: SensingFile,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserFile {
    codebook: WireMatrix,
    paths: Vec<PathFile>,
    message: WireVector,
    positivity: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathFile {
    tau: f64,
    g: WireComplex,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensingFile {
    identity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entries: Option<WireMatrix>,
}

fn to_file(s: &Scenario) -> ScenarioFile {
    ScenarioFile {
        n_samples: s.n_samples,
        users: s
            .codebooks
            .iter()
            .zip(&s.channels)
            .zip(&s.messages)
            .map(|((cb, ch), msg)| UserFile {
                codebook: matrix_to_wire(&cb.entries),
                paths: ch
                    .paths
                    .iter()
                    .map(|p| PathFile {
                        tau: p.tau,
                        g: complex_to_wire(p.gain),
                    })
                    .collect(),
                message: vector_to_wire(&msg.coords),
                positivity: msg.positive,
            })
            .collect(),
        sensing: SensingFile {
            identity: s.sensing.is_identity(),
            entries: (!s.sensing.is_identity()).then(|| matrix_to_wire(s.sensing.entries())),
        },
        seed: s.seed,
    }
}

fn from_file(f: ScenarioFile) -> Result<Scenario> {
    let n = f.n_samples;
    let mut codebooks = Vec::with_capacity(f.users.len());
    let mut channels = Vec::with_capacity(f.users.len());
    let mut messages = Vec::with_capacity(f.users.len());
    for (k, u) in f.users.into_iter().enumerate() {
        let key = format!("users[{k}].codebook");
        let entries = matrix_from_wire(&u.codebook, &key)?;
        if entries.nrows() != n {
            return Err(Error::Parse {
                key,
                msg: format!("{} rows, expected n_samples = {n}", entries.nrows()),
            });
        }
        if u.message.len() != entries.ncols() {
            return Err(Error::Parse {
                key: format!("users[{k}].message"),
                msg: format!(
                    "length {} does not match codebook columns {}",
                    u.message.len(),
                    entries.ncols()
                ),
            });
        }
        codebooks.push(Codebook::new(k, entries));
        channels.push(ChannelSpec::new(
            u.paths
                .iter()
                .map(|p| Path {
                    tau: p.tau,
                    gain: complex_from_wire(p.g),
                })
                .collect(),
        ));
        messages.push(Message::new(vector_from_wire(&u.message), u.positivity));
    }
    let sensing = match (f.sensing.identity, f.sensing.entries) {
        (true, None) => SensingMatrix::identity(n),
        (_, Some(rows)) => {
            let d = SensingMatrix::from_entries(matrix_from_wire(&rows, "sensing.entries")?);
            if d.cols() != n {
                return Err(Error::Parse {
                    key: "sensing.entries".into(),
                    msg: format!("{} columns, expected n_samples = {n}", d.cols()),
                });
            }
            if f.sensing.identity != d.is_identity() {
                return Err(Error::Parse {
                    key: "sensing.identity".into(),
                    msg: "flag disagrees with entries".into(),
                });
            }
            d
        }
        (false, None) => {
            return Err(Error::Parse {
                key: "sensing.entries".into(),
                msg: "required when identity is false".into(),
            })
        }
    };
    Ok(Scenario {
        n_samples: n,
        codebooks,
        channels,
        messages,
        sensing,
        seed: f.seed,
    })
}

pub fn scenario_to_json(s: &Scenario) -> Result<String> {
    let mut out = serde_json::to_string_pretty(&to_file(s))?;
    out.push('\n');
    Ok(out)
}

/// Parse a scenario and validate it. Structural problems are errors; broken
/// invariants come back in the report.
pub fn scenario_from_json(text: &str) -> Result<(Scenario, ValidationReport)> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        key: e.path().to_string(),
        msg: e.inner().to_string(),
    })?;
    let s = from_file(file)?;
    let report = s.validate();
    Ok((s, report))
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<FsPath>) -> Result<()> {
    std::fs::write(path, scenario_to_json(s)?)?;
    Ok(())
}

pub fn load_scenario(path: impl AsRef<FsPath>) -> Result<(Scenario, ValidationReport)> {
    scenario_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, GenConfig, SensingMode};

    #[test]
    fn round_trip_fig3a_bit_exact() {
        let cfg = GenConfig::new(200, vec![3; 4], vec![5; 4]).with_seed(7);
        let s = generate_scenario(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        save_scenario(&s, &path).unwrap();
        let (back, report) = load_scenario(&path).unwrap();
        assert!(report.is_valid());
        assert_eq!(back, s);
        for (a, b) in back.codebooks[2].entries.iter().zip(s.codebooks[2].entries.iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
        }
        assert_eq!(scenario_to_json(&back).unwrap(), scenario_to_json(&s).unwrap());
    }

    #[test]
    fn round_trip_subsampled() {
        let mut cfg = GenConfig::new(16, vec![1], vec![2]).with_seed(1);
        cfg.sensing = SensingMode::UniformSubsample(8);
        let s = generate_scenario(&cfg).unwrap();
        let (back, _) = scenario_from_json(&scenario_to_json(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let s = generate_scenario(&GenConfig::new(8, vec![1], vec![1])).unwrap();
        let text = scenario_to_json(&s).unwrap();
        let err = scenario_from_json(&text[..text.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn errors_name_offending_key() {
        let bad = r#"{"n_samples": 2, "users": [{"codebook": [[[1,0]],[[1,0]]], "paths": [{"tau": 0.1, "g": "x"}], "message": [[1,0]], "positivity": false}], "sensing": {"identity": true}, "seed": 0}"#;
        match scenario_from_json(bad).unwrap_err() {
            Error::Parse { key, .. } => assert_eq!(key, "users[0].paths[0].g"),
            e => panic!("{e}"),
        }
        let ragged = r#"{"n_samples": 2, "users": [{"codebook": [[[1,0]],[[1,0],[2,0]]], "paths": [{"tau": 0.1, "g": [1,0]}], "message": [[1,0]], "positivity": false}], "sensing": {"identity": true}, "seed": 0}"#;
        match scenario_from_json(ragged).unwrap_err() {
            Error::Parse { key, .. } => assert_eq!(key, "users[0].codebook[1]"),
            e => panic!("{e}"),
        }
        let short_msg = r#"{"n_samples": 1, "users": [{"codebook": [[[1,0],[0,0]]], "paths": [{"tau": 0.1, "g": [1,0]}], "message": [[1,0]], "positivity": false}], "sensing": {"identity": true}, "seed": 0}"#;
        match scenario_from_json(short_msg).unwrap_err() {
            Error::Parse { key, .. } => assert_eq!(key, "users[0].message"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn crowded_delays_load_with_warning() {
        let n = 64;
        let text = format!(
            r#"{{"n_samples": {n}, "users": [{{"codebook": {cb}, "paths": [{{"tau": 0.2, "g": [1,0]}}, {{"tau": {t2}, "g": [0,1]}}], "message": [[1,0]], "positivity": true}}], "sensing": {{"identity": true}}, "seed": 0}}"#,
            cb = serde_json::to_string(&vec![vec![[1.0, 0.0]]; n]).unwrap(),
            t2 = 0.2 + 0.4 / n as f64,
        );
        let (_, report) = scenario_from_json(&text).unwrap();
        assert!(report.is_valid());
        assert_eq!(report.warnings.len(), 1);
    }
}
