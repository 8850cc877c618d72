//! JSON model documents and two-column `(tau, w)` CSV files.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{Atom, JointModel, ModelKind, Pair, RewardMap, TauFamily, WFamily};
use crate::error::{Error, Result};

/// Keys describing delayed starts or remainder terms, which are not modelled.
const UNSUPPORTED_KEYS: [&str; 5] = ["delay", "initial_delay", "s0", "remainder", "r_t"];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    kind: String,
    #[serde(default)]
    description: Option<String>,
    tau: Option<TauFamily>,
    w: Option<WFamily>,
    reward: Option<RewardMap>,
    lag: Option<f64>,
    atoms: Option<Vec<Atom>>,
    pairs: Option<Vec<Pair>>,
    samples_path: Option<String>,
}

fn missing(kind: &str, field: &str) -> Error {
    Error::InvalidModel(format!("kind \"{kind}\" requires field \"{field}\""))
}

/// Parses a model document; `samples_path` is resolved against `base_dir`.
pub fn model_from_json(text: &str, base_dir: &Path) -> Result<JointModel> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("model JSON: {e}")))?;
    if let Some(obj) = value.as_object() {
        for key in UNSUPPORTED_KEYS {
            if obj.contains_key(key) {
                return Err(Error::InvalidModel(format!(
                    "key \"{key}\": delayed starts and remainder terms are not supported (S_0 = 0 and r_t = 0)"
                )));
            }
        }
    }
    let doc: ModelDoc = serde_json::from_value(value).map_err(|e| Error::Parse(format!("model JSON: {e}")))?;
    let _ = doc.description;
    let kind = doc.kind.as_str();
    let model_kind = match kind {
        "independent_product" => ModelKind::IndependentProduct {
            tau: doc.tau.ok_or_else(|| missing(kind, "tau"))?,
            w: doc.w.ok_or_else(|| missing(kind, "w"))?,
        },
        "deterministic_reward" => ModelKind::DeterministicReward {
            tau: doc.tau.ok_or_else(|| missing(kind, "tau"))?,
            reward: doc.reward.ok_or_else(|| missing(kind, "reward"))?,
            lag: doc.lag.unwrap_or(0.0),
        },
        "discrete_joint" => ModelKind::DiscreteJoint {
            atoms: doc.atoms.ok_or_else(|| missing(kind, "atoms"))?,
        },
        "empirical_sample" => {
            let pairs = match (doc.pairs, doc.samples_path) {
                (Some(p), None) => p,
                (None, Some(path)) => load_pairs_csv(&base_dir.join(path))?,
                _ => {
                    return Err(Error::InvalidModel(
                        "empirical_sample needs exactly one of \"samples_path\" or \"pairs\"".into(),
                    ))
                }
            };
            ModelKind::EmpiricalSample { pairs }
        }
        other => return Err(Error::InvalidModel(format!("unknown model kind \"{other}\""))),
    };
    JointModel::new(model_kind)
}

pub fn load_model(path: &Path) -> Result<JointModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    model_from_json(&text, base)
}

/// Reads a CSV with a `tau,w` header.
pub fn load_pairs_csv(path: &Path) -> Result<Vec<Pair>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("{}: missing column \"{name}\"", path.display())))
    };
    let (ti, wi) = (col("tau")?, col("w")?);
    let mut pairs = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let field = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse()
                .map_err(|_| Error::Parse(format!("{}: row {}: not a number: \"{s}\"", path.display(), line + 1)))
        };
        pairs.push((field(ti)?, field(wi)?));
    }
    Ok(pairs)
}

/// Reals with 17 significant digits, locale independent.
pub fn format_real(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_pairs_csv(path: &Path, pairs: &[Pair]) -> Result<()> {
    let mut out = String::from("tau,w\n");
    for &(t, w) in pairs {
        out.push_str(&format!("{},{}\n", format_real(t), format_real(w)));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
