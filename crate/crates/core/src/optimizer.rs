//! Search over permutations of a fixed population multiset.
//!
//! A [`Permutation`] assigns population slots to the ordered energy basis:
//! basis index `n` receives `populations[perm.slots()[n]]`. Scoring uses the
//! speed-limit time first and the dissipated heat second.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dsp::{coefficient_a, entropy_change, qsl_from_overlap, PopulationVector, QslError};
use crate::lindblad::ModelSpec;

/// Largest basis size [`enumerate_permutations`] accepts (10! reports).
pub const MAX_ENUMERATION_DIM: usize = 10;
/// Scores closer than this are considered tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("refusing to enumerate {dim}! = {count} permutations (limit is dimension {MAX_ENUMERATION_DIM})")]
    TooManyPermutations { dim: usize, count: u128 },
    #[error("{populations} populations for a {basis}-level model")]
    Dimension { populations: usize, basis: usize },
    #[error("not a permutation of 0..{0}: {1:?}")]
    NotBijective(usize, Vec<usize>),
    #[error("weight g = {0} outside [0, 1)")]
    WeightOutOfRange(f64),
    #[error("no reports to select from")]
    Empty,
    #[error(transparent)]
    Qsl(#[from] QslError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(slots: Vec<usize>) -> Result<Self, OptimizeError> {
        let n = slots.len();
        let mut seen = vec![false; n];
        for &s in &slots {
            if s >= n || std::mem::replace(&mut seen[s], true) {
                return Err(OptimizeError::NotBijective(n, slots));
            }
        }
        Ok(Self(slots))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn slots(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(k, &s)| k == s)
    }

    /// Populations in basis order under this permutation.
    pub fn arrange(&self, populations: &PopulationVector) -> PopulationVector {
        let v = populations.values();
        PopulationVector::new(self.0.iter().map(|&s| v[s]).collect()).expect("a permutation of a valid simplex is valid")
    }
}

/// One-based, dash-separated (`1-2-3`).
impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("-")?;
            }
            write!(f, "{}", s + 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationReport {
    pub permutation: Permutation,
    pub arrangement: Vec<f64>,
    /// Population on the target level, `lambda_{n*}`.
    pub lambda_target: f64,
    /// `Tr[rho_0 rho_f]`.
    pub fidelity: f64,
    pub t_qsl: f64,
    pub t_qsl_loose: f64,
    pub heat: f64,
    pub entropy: f64,
    /// `W = g Q - (1 - g) F`.
    pub objective: f64,
    /// Non-dominated in `(t_qsl, heat)` within the report set.
    pub pareto: bool,
}

/// `W = g Q - (1 - g) F` for `g` in `[0, 1)`.
pub fn objective_w(g: f64, heat: f64, fidelity: f64) -> Result<f64, OptimizeError> {
    if !(0.0..1.0).contains(&g) {
        return Err(OptimizeError::WeightOutOfRange(g));
    }
    Ok(g * heat - (1.0 - g) * fidelity)
}

/// Scores diagonal initial states without building matrices: for
/// `rho_0 = sum lambda_n |E_n><E_n|`, `Tr[rho_0 rho_f] = sum lambda_n |<E_n|Phi>|^2`
/// and `Tr[H rho_0] = sum lambda_n E_n`.
struct Scorer {
    a: f64,
    overlaps: Vec<f64>,
    energies: Vec<f64>,
    target_energy: f64,
    target_index: usize,
    g: f64,
    entropy: f64,
}

impl Scorer {
    fn new(populations: &PopulationVector, model: &ModelSpec, g: f64) -> Result<Self, OptimizeError> {
        check_dim(populations, model)?;
        if !(0.0..1.0).contains(&g) {
            return Err(OptimizeError::WeightOutOfRange(g));
        }
        let es = model.eigensystem();
        Ok(Self {
            a: coefficient_a(model)?,
            overlaps: es.eigenvectors().iter().map(|v| v.inner(model.target()).norm_sqr()).collect(),
            energies: es.eigenvalues().to_vec(),
            target_energy: model.target_energy(),
            target_index: model.target_index(),
            g,
            entropy: entropy_change(populations),
        })
    }

    fn score(&self, permutation: Permutation, values: &[f64]) -> PermutationReport {
        let arrangement: Vec<f64> = permutation.slots().iter().map(|&s| values[s]).collect();
        let fidelity: f64 = arrangement.iter().zip(&self.overlaps).map(|(l, w)| l * w).sum();
        let mean_energy: f64 = arrangement.iter().zip(&self.energies).map(|(l, e)| l * e).sum();
        let heat = mean_energy - self.target_energy;
        let qsl = qsl_from_overlap(self.a, fidelity);
        PermutationReport {
            lambda_target: arrangement[self.target_index],
            arrangement,
            permutation,
            fidelity: qsl.cos_theta0,
            t_qsl: qsl.t_qsl,
            t_qsl_loose: qsl.t_qsl_loose,
            heat,
            entropy: self.entropy,
            objective: self.g * heat - (1.0 - self.g) * qsl.cos_theta0,
            pareto: false,
        }
    }
}

fn check_dim(populations: &PopulationVector, model: &ModelSpec) -> Result<(), OptimizeError> {
    if populations.len() != model.dim() {
        return Err(OptimizeError::Dimension {
            populations: populations.len(),
            basis: model.dim(),
        });
    }
    Ok(())
}

/// Scores a single arrangement.
pub fn score_permutation(
    populations: &PopulationVector,
    model: &ModelSpec,
    permutation: &Permutation,
    g: f64,
) -> Result<PermutationReport, OptimizeError> {
    if permutation.len() != populations.len() {
        return Err(OptimizeError::Dimension {
            populations: populations.len(),
            basis: permutation.len(),
        });
    }
    let scorer = Scorer::new(populations, model, g)?;
    Ok(scorer.score(permutation.clone(), populations.values()))
}

/// In-place lexicographic successor; `false` once the last arrangement has
/// been passed. Repeated labels yield each distinct arrangement once.
fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Every distinct diagonal arrangement of `populations` over the model's
/// ordered basis, scored. Equal population values (bitwise) are treated as
/// indistinguishable, so duplicate arrangements appear once, represented by
/// their lexicographically smallest permutation. Output is sorted by
/// permutation and has Pareto flags set.
pub fn enumerate_permutations(
    populations: &PopulationVector,
    model: &ModelSpec,
    g: f64,
) -> Result<Vec<PermutationReport>, OptimizeError> {
    let n = populations.len();
    if n > MAX_ENUMERATION_DIM {
        return Err(OptimizeError::TooManyPermutations {
            dim: n,
            count: factorial(n),
        });
    }
    let scorer = Scorer::new(populations, model, g)?;
    let values = populations.values();

    // Class label of each population = index of its first equal value.
    let mut first_of: HashMap<u64, usize> = HashMap::new();
    let class: Vec<usize> = values
        .iter()
        .enumerate()
        .map(|(k, v)| *first_of.entry(v.to_bits()).or_insert(k))
        .collect();
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, &c) in class.iter().enumerate() {
        members.entry(c).or_default().push(k);
    }

    let mut labels = class.clone();
    labels.sort_unstable();
    let mut reports = Vec::new();
    loop {
        let mut cursor: HashMap<usize, usize> = HashMap::new();
        let slots = labels
            .iter()
            .map(|c| {
                let used = cursor.entry(*c).or_insert(0);
                let idx = members[c][*used];
                *used += 1;
                idx
            })
            .collect();
        reports.push(scorer.score(Permutation(slots), values));
        if !next_permutation(&mut labels) {
            break;
        }
    }
    reports.sort_by(|a, b| a.permutation.cmp(&b.permutation));
    mark_pareto(&mut reports);
    Ok(reports)
}

/// Indices sorted by decreasing population; ties keep input order.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// Largest population on the target level; the rest in decreasing order
/// over the remaining levels taken by increasing energy.
pub fn optimal_permutation(populations: &PopulationVector, model: &ModelSpec) -> Result<Permutation, OptimizeError> {
    check_dim(populations, model)?;
    Ok(optimal_for_target(populations, model.target_index()))
}

/// [`optimal_permutation`] for a bare target index (zero-based).
pub fn optimal_for_target(populations: &PopulationVector, target_index: usize) -> Permutation {
    let order = descending_order(populations.values());
    let n = order.len();
    let mut slots = vec![0; n];
    slots[target_index] = order[0];
    let rest = (0..n).filter(|&k| k != target_index);
    for (basis_index, &source) in rest.zip(&order[1..]) {
        slots[basis_index] = source;
    }
    Permutation(slots)
}

/// Decreasing populations against increasing energies.
pub fn passive_permutation(populations: &PopulationVector) -> Permutation {
    Permutation(descending_order(populations.values()))
}

/// Increasing populations against increasing energies; the reverse of the
/// passive arrangement.
pub fn ascending_permutation(populations: &PopulationVector) -> Permutation {
    let values = populations.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    Permutation(order)
}

/// Minimal speed-limit time first, then minimal heat, then the
/// lexicographically smallest permutation.
pub fn lexicographic_select(reports: &[PermutationReport]) -> Result<&PermutationReport, OptimizeError> {
    let best_t = reports.iter().map(|r| r.t_qsl).fold(f64::INFINITY, f64::min);
    let fastest = reports.iter().filter(|r| r.t_qsl <= best_t + TIE_TOL);
    let best_q = fastest.clone().map(|r| r.heat).fold(f64::INFINITY, f64::min);
    fastest
        .filter(|r| r.heat <= best_q + TIE_TOL)
        .min_by(|a, b| a.permutation.cmp(&b.permutation))
        .ok_or(OptimizeError::Empty)
}

/// Sets `pareto` on every report not dominated in `(t_qsl, heat)`.
pub fn mark_pareto(reports: &mut [PermutationReport]) {
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        reports[a]
            .t_qsl
            .total_cmp(&reports[b].t_qsl)
            .then(reports[a].heat.total_cmp(&reports[b].heat))
    });
    let mut best_q_before = f64::INFINITY;
    let mut start = 0;
    while start < order.len() {
        let t0 = reports[order[start]].t_qsl;
        let end = order[start..]
            .iter()
            .position(|&k| reports[k].t_qsl > t0 + TIE_TOL)
            .map_or(order.len(), |p| start + p);
        let group_q = order[start..end].iter().map(|&k| reports[k].heat).fold(f64::INFINITY, f64::min);
        for &k in &order[start..end] {
            let q = reports[k].heat;
            reports[k].pareto = q <= group_q + TIE_TOL && q < best_q_before - TIE_TOL;
        }
        best_q_before = best_q_before.min(group_q);
        start = end;
    }
}

pub fn pareto_front(reports: &[PermutationReport]) -> Vec<&PermutationReport> {
    reports.iter().filter(|r| r.pareto).collect()
}
