//! JSON run configuration.
//!
//! ```json
//! {
//!   "model": { "kind": "rydberg", "omega2": 0.02, "omega": 0.01, "gamma": 0.03 },
//!   "populations": "benchmark",
//!   "permutation": ["A", "B", "C"],
//!   "t_end": 5000.0,
//!   "step": 0.05,
//!   "stride": 20,
//!   "g": 0.5
//! }
//! ```
//!
//! `populations` is a list, `"benchmark"`, or `{ "kind": "thermal", "beta": 20 }`.
//! `permutation` is a label (`A`, `B`, `C`, `optimal`, `passive`, `all`), a
//! one-based list, or an array mixing both.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use serde_json::Value;

use dspqsl::dsp::PopulationVector;
use dspqsl::lindblad::{ModelSpec, DEFAULT_STRIDE, DEFAULT_T_END};
use dspqsl::optimizer::{ascending_permutation, optimal_permutation, passive_permutation, Permutation};
use dspqsl::qmat::{ComplexMatrix, Ket, C64};
use dspqsl::rydberg::{self, RydbergParams, BENCHMARK_POPULATIONS};

/// Accepted deviation of the population sum from one before rescaling.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: Option<ModelConfig>,
    #[serde(default)]
    populations: Option<Value>,
    #[serde(default)]
    permutation: Option<Value>,
    t_end: Option<f64>,
    step: Option<f64>,
    stride: Option<usize>,
    g: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ModelConfig {
    Rydberg {
        #[serde(default = "default_rabi")]
        omega2: f64,
        #[serde(default = "default_raman")]
        omega: f64,
        #[serde(default = "default_decay")]
        gamma: f64,
    },
    Custom {
        dim: usize,
        /// Row-major `[re, im]` pairs.
        hamiltonian: Vec<[f64; 2]>,
        jump_ops: Vec<Vec<[f64; 2]>>,
        rates: Vec<f64>,
        target: Vec<[f64; 2]>,
        /// Rate used for the `1/gamma` time columns.
        gamma: Option<f64>,
    },
}

fn default_rabi() -> f64 {
    RydbergParams::default().rabi
}

fn default_raman() -> f64 {
    RydbergParams::default().raman
}

fn default_decay() -> f64 {
    RydbergParams::default().decay
}

/// One initial arrangement to run, with the label used in output names.
#[derive(Debug, Clone)]
pub struct Selection {
    pub label: String,
    pub permutation: Permutation,
}

#[derive(Debug, Clone)]
pub enum PermutationRequest {
    All,
    Some(Vec<Selection>),
}

pub struct RunConfig {
    pub model: ModelSpec,
    /// Time unit conversion for `1/gamma` columns; `None` leaves them NaN.
    pub gamma: Option<f64>,
    pub populations: PopulationVector,
    pub permutations: PermutationRequest,
    pub t_end: f64,
    pub step: f64,
    pub stride: usize,
    pub g: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| anyhow!("invalid config: {e}"))?;
        let (model, gamma) = build_model(raw.model.unwrap_or(ModelConfig::Rydberg {
            omega2: default_rabi(),
            omega: default_raman(),
            gamma: default_decay(),
        }))?;
        let populations = parse_populations(raw.populations.as_ref(), &model).context("key `populations`")?;
        let permutations =
            parse_permutations(raw.permutation.as_ref(), &populations, &model).context("key `permutation`")?;
        let g = raw.g.unwrap_or(0.5);
        if !(0.0..1.0).contains(&g) {
            bail!("key `g`: {g} outside [0, 1)");
        }
        let stride = raw.stride.unwrap_or(DEFAULT_STRIDE);
        if stride == 0 {
            bail!("key `stride`: must be at least 1");
        }
        let step = raw.step.unwrap_or_else(|| model.default_step());
        Ok(Self {
            gamma,
            populations,
            permutations,
            t_end: raw.t_end.unwrap_or(DEFAULT_T_END),
            step,
            stride,
            g,
            model,
        })
    }

    pub fn selections(&self) -> Vec<Selection> {
        match &self.permutations {
            PermutationRequest::Some(list) => list.clone(),
            PermutationRequest::All => all_permutations(self.populations.len())
                .into_iter()
                .map(|p| Selection {
                    label: p.to_string(),
                    permutation: p,
                })
                .collect(),
        }
    }
}

fn all_permutations(n: usize) -> Vec<Permutation> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
        if prefix.len() == used.len() {
            out.push(Permutation::new(prefix.clone()).expect("bijective by construction"));
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                extend(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

fn complex_entries(what: &str, pairs: &[[f64; 2]], expected: usize) -> Result<Vec<C64>> {
    if pairs.len() != expected {
        bail!("{what}: expected {expected} [re, im] pairs, got {}", pairs.len());
    }
    Ok(pairs.iter().map(|[re, im]| C64::new(*re, *im)).collect())
}

fn build_model(cfg: ModelConfig) -> Result<(ModelSpec, Option<f64>)> {
    match cfg {
        ModelConfig::Rydberg { omega2, omega, gamma } => {
            let p = RydbergParams::new(omega2, omega, gamma).context("key `model`")?;
            Ok((rydberg::build_model(&p)?, Some(gamma)))
        }
        ModelConfig::Custom {
            dim,
            hamiltonian,
            jump_ops,
            rates,
            target,
            gamma,
        } => {
            if dim == 0 {
                bail!("key `model.dim`: must be positive");
            }
            let h = ComplexMatrix::from_row_major(complex_entries("model.hamiltonian", &hamiltonian, dim * dim)?)?;
            let jumps = jump_ops
                .iter()
                .enumerate()
                .map(|(k, l)| {
                    let entries = complex_entries(&format!("model.jump_ops[{k}]"), l, dim * dim)?;
                    Ok(ComplexMatrix::from_row_major(entries)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let target = Ket::new(complex_entries("model.target", &target, dim)?);
            let model = ModelSpec::new(h, jumps, rates, target).context("key `model`")?;
            Ok((model, gamma))
        }
    }
}

fn parse_populations(value: Option<&Value>, model: &ModelSpec) -> Result<PopulationVector> {
    let values = match value {
        None => BENCHMARK_POPULATIONS.to_vec(),
        Some(Value::String(s)) if s == "benchmark" => BENCHMARK_POPULATIONS.to_vec(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| anyhow!("entry {v} is not a number")))
            .collect::<Result<_>>()?,
        Some(Value::Object(map)) => {
            match map.get("kind").and_then(Value::as_str) {
                Some("thermal") => {}
                _ => bail!("object form needs \"kind\": \"thermal\""),
            }
            if let Some(extra) = map.keys().find(|k| *k != "kind" && *k != "beta") {
                bail!("unknown field `{extra}`");
            }
            let beta = map
                .get("beta")
                .and_then(Value::as_f64)
                .ok_or_else(|| anyhow!("thermal populations need a numeric `beta`"))?;
            return Ok(rydberg::thermal_populations(beta, model.eigensystem().eigenvalues())?);
        }
        Some(other) => bail!("expected a list, \"benchmark\" or a thermal object, got {other}"),
    };
    if values.len() != model.dim() {
        bail!("{} populations for a {}-level model", values.len(), model.dim());
    }
    Ok(PopulationVector::normalized(values, NORMALIZATION_TOL)?)
}

fn parse_label(label: &str, p: &PopulationVector, model: &ModelSpec) -> Result<Option<Permutation>> {
    Ok(Some(match label {
        "A" | "optimal" => optimal_permutation(p, model)?,
        "B" => ascending_permutation(p),
        "C" | "passive" => passive_permutation(p),
        "all" => return Ok(None),
        other => bail!("unknown permutation label {other:?}"),
    }))
}

fn parse_explicit(items: &[Value], n: usize) -> Result<Permutation> {
    let slots = items
        .iter()
        .map(|v| match v.as_u64() {
            Some(k) if k >= 1 => Ok(k as usize - 1),
            _ => Err(anyhow!("entry {v} is not a one-based index")),
        })
        .collect::<Result<Vec<_>>>()?;
    if slots.len() != n {
        bail!("permutation has {} entries, populations have {n}", slots.len());
    }
    Ok(Permutation::new(slots)?)
}

fn parse_permutations(value: Option<&Value>, p: &PopulationVector, model: &ModelSpec) -> Result<PermutationRequest> {
    let one = |v: &Value| -> Result<Option<Selection>> {
        match v {
            Value::String(s) => Ok(parse_label(s, p, model)?.map(|permutation| Selection {
                label: s.clone(),
                permutation,
            })),
            Value::Array(items) => {
                let permutation = parse_explicit(items, p.len())?;
                Ok(Some(Selection {
                    label: permutation.to_string(),
                    permutation,
                }))
            }
            other => bail!("expected a label or a one-based list, got {other}"),
        }
    };
    match value {
        None => Ok(PermutationRequest::Some(vec![one(&Value::from("optimal"))?.expect("label")])),
        Some(Value::Array(items)) if items.iter().all(Value::is_number) => {
            Ok(PermutationRequest::Some(vec![one(value.expect("present"))?.expect("explicit")]))
        }
        Some(Value::Array(items)) => {
            let mut list = Vec::new();
            for item in items {
                match one(item)? {
                    Some(s) => list.push(s),
                    None => return Ok(PermutationRequest::All),
                }
            }
            if list.is_empty() {
                bail!("empty permutation list");
            }
            Ok(PermutationRequest::Some(list))
        }
        Some(v) => Ok(one(v)?.map_or(PermutationRequest::All, |s| PermutationRequest::Some(vec![s]))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_benchmark() {
        let cfg = RunConfig::parse("{}").unwrap();
        assert_eq!(cfg.populations.values(), &BENCHMARK_POPULATIONS);
        assert_eq!(cfg.t_end, DEFAULT_T_END);
        assert_eq!(cfg.step, 0.05);
        assert_eq!(cfg.gamma, Some(0.03));
        let sel = cfg.selections();
        assert_eq!(sel.len(), 1);
        assert_eq!(cfg.populations.values()[sel[0].permutation.slots()[3]], 0.4);
    }

    #[test]
    fn labels_and_lists() {
        let cfg = RunConfig::parse(r#"{"permutation": ["A", "B", [6, 5, 4, 3, 2, 1]]}"#).unwrap();
        let labels: Vec<_> = cfg.selections().into_iter().map(|s| s.label).collect();
        assert_eq!(labels, ["A", "B", "6-5-4-3-2-1"]);
        let cfg = RunConfig::parse(r#"{"permutation": [2, 1, 3, 4, 5, 6]}"#).unwrap();
        assert_eq!(cfg.selections()[0].permutation.slots(), &[1, 0, 2, 3, 4, 5]);
        let cfg = RunConfig::parse(r#"{"permutation": "all"}"#).unwrap();
        assert_eq!(cfg.selections().len(), 720);
    }

    #[test]
    fn thermal_populations() {
        let cfg = RunConfig::parse(r#"{"populations": {"kind": "thermal", "beta": 0}}"#).unwrap();
        assert!(cfg.populations.values().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn rejections() {
        for bad in [
            r#"{"unknown": 1}"#,
            r#"{"model": {"kind": "rydberg", "gamma": -1}}"#,
            r#"{"model": {"kind": "rydberg", "Gamma": 1}}"#,
            r#"{"populations": [0.5, 0.5]}"#,
            r#"{"populations": [0.2, 0.2, 0.2, 0.2, 0.2, 0.2]}"#,
            r#"{"populations": "uniform"}"#,
            r#"{"permutation": "D"}"#,
            r#"{"permutation": [1, 1, 2, 3, 4, 5]}"#,
            r#"{"permutation": [0, 1, 2, 3, 4, 5]}"#,
            r#"{"g": 1.0}"#,
            r#"{"stride": 0}"#,
            "{",
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn near_normalized_populations_are_rescaled() {
        let cfg = RunConfig::parse(r#"{"populations": [0.2, 0.15, 0.1, 0.4, 0.08, 0.0700000001]}"#).unwrap();
        assert!((cfg.populations.values().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn custom_model() {
        let cfg = RunConfig::parse(
            r#"{
                "model": {
                    "kind": "custom", "dim": 2,
                    "hamiltonian": [[0, 0], [0, 0], [0, 0], [1, 0]],
                    "jump_ops": [[[0, 0], [1, 0], [0, 0], [0, 0]]],
                    "rates": [0.5],
                    "target": [[1, 0], [0, 0]]
                },
                "populations": [0.3, 0.7],
                "permutation": "optimal"
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.model.target_index(), 0);
        assert_eq!(cfg.gamma, None);
        assert_eq!(cfg.selections()[0].permutation.slots(), &[1, 0]);
    }
}
