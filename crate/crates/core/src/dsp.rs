//! Dark-state conditions and the scalar functionals of a preparation run:
//! speed scale `A`, both speed-limit times, dissipated heat, entropy change,
//! and the trajectory-level check of the integrated speed limit.

use serde::Serialize;
use thiserror::Error;

use crate::lindblad::{ModelSpec, Trajectory};
use crate::qmat::{frobenius_norm, trace_product, ComplexMatrix, DensityMatrix, EigenSystem, C64, ZERO};

/// Slack applied to the integrated speed-limit inequality.
pub const QSL_SLACK: f64 = 1e-9;
/// Fidelities this far outside `[0, 1]` are clamped rather than rejected.
pub const FIDELITY_CLAMP: f64 = 1e-9;
/// Sum-to-one tolerance of a [`PopulationVector`].
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Required `|<E_{n*}|Phi>|^2` deviation from one.
pub const OVERLAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QslError {
    #[error("speed scale A vanishes; the speed limit diverges and carries no information")]
    VanishingSpeedScale,
    #[error("fidelity {0} outside [0, 1]")]
    FidelityOutOfRange(f64),
    #[error("density matrix dimension {got} does not match model dimension {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PopulationError {
    #[error("population {index} is {value}; populations must be finite and nonnegative")]
    Negative { index: usize, value: f64 },
    #[error("populations sum to {sum}, not 1 (tolerance {tol:e})")]
    NotNormalized { sum: f64, tol: f64 },
    #[error("population vector is empty")]
    Empty,
}

/// Probabilities `lambda_n` indexed against the ordered energy basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PopulationVector(Vec<f64>);

impl PopulationVector {
    pub fn new(values: Vec<f64>) -> Result<Self, PopulationError> {
        Self::check_entries(&values)?;
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(PopulationError::NotNormalized { sum, tol: SIMPLEX_TOL });
        }
        Ok(Self(values))
    }

    /// Accepts `values` whose sum is within `tol` of one and rescales them
    /// to sum exactly to one.
    pub fn normalized(values: Vec<f64>, tol: f64) -> Result<Self, PopulationError> {
        Self::check_entries(&values)?;
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(PopulationError::NotNormalized { sum, tol });
        }
        Ok(Self(values.into_iter().map(|v| v / sum).collect()))
    }

    fn check_entries(values: &[f64]) -> Result<(), PopulationError> {
        if values.is_empty() {
            return Err(PopulationError::Empty);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(PopulationError::Negative { index, value });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Diagonal state `sum_n lambda_n |E_n><E_n|`.
    pub fn to_density(&self, basis: &EigenSystem) -> DensityMatrix {
        DensityMatrix::diagonal_in(basis, &self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DspReport {
    /// `||H|Phi> - E_{n*}|Phi>||`.
    pub eigen_residual: f64,
    /// `||L_mu|Phi>||` per channel.
    pub jump_residuals: Vec<f64>,
    /// `|<E_{n*}|Phi>|^2`.
    pub target_overlap: f64,
    pub target_energy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks that the target is an eigenstate of `H` and annihilated by every
/// jump operator.
pub fn verify_dsp_conditions(model: &ModelSpec, tol: f64) -> DspReport {
    let phi = model.target();
    let energy = model.target_energy();
    let mut h_phi = model.hamiltonian().apply(phi);
    h_phi.add_scaled(C64::new(-energy, 0.0), phi);
    let eigen_residual = h_phi.norm();
    let jump_residuals: Vec<f64> = model.jump_ops().iter().map(|l| l.apply(phi).norm()).collect();
    let target_overlap = model.target_overlap();
    let pass = eigen_residual < tol
        && jump_residuals.iter().all(|&r| r < tol)
        && (1.0 - target_overlap).abs() < OVERLAP_TOL.max(tol);
    DspReport {
        eigen_residual,
        jump_residuals,
        target_overlap,
        target_energy: energy,
        tolerance: tol,
        pass,
    }
}

/// `sum_mu gamma_mu L_mu^dag rho_f L_mu`.
pub fn speed_operator(model: &ModelSpec) -> ComplexMatrix {
    let rho_f = model.target_state();
    let mut acc = ComplexMatrix::zeros(model.dim());
    for (l, &g) in model.jump_ops().iter().zip(model.rates()) {
        let term = &(&l.dagger() * rho_f.matrix()) * l;
        acc.add_scaled(C64::new(g, 0.0), &term);
    }
    acc
}

/// `A = ||sum_mu gamma_mu L_mu^dag rho_f L_mu||_F`, independent of the
/// initial state. Errors when `A = 0`.
pub fn coefficient_a(model: &ModelSpec) -> Result<f64, QslError> {
    let a = frobenius_norm(&speed_operator(model));
    if a > 0.0 {
        Ok(a)
    } else {
        Err(QslError::VanishingSpeedScale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QslReport {
    pub a: f64,
    /// `Tr[rho_0 rho_f]`, clamped to `[0, 1]`.
    pub cos_theta0: f64,
    /// `sqrt(2 - 2 cos Theta_0) / A`.
    pub t_qsl: f64,
    /// `(1 - cos Theta_0) / A`.
    pub t_qsl_loose: f64,
}

fn initial_overlap(model: &ModelSpec, rho0: &DensityMatrix) -> Result<f64, QslError> {
    if rho0.dim() != model.dim() {
        return Err(QslError::Dimension {
            expected: model.dim(),
            got: rho0.dim(),
        });
    }
    let f = trace_product(rho0.matrix(), model.target_state().matrix())
        .map_err(|_| QslError::Dimension {
            expected: model.dim(),
            got: rho0.dim(),
        })?
        .re;
    Ok(f.clamp(0.0, 1.0))
}

/// Both speed-limit times for evolving `rho0` into the target.
pub fn qsl_time(model: &ModelSpec, rho0: &DensityMatrix) -> Result<QslReport, QslError> {
    let a = coefficient_a(model)?;
    let cos_theta0 = initial_overlap(model, rho0)?;
    Ok(qsl_from_overlap(a, cos_theta0))
}

/// Speed-limit times from `A` and `cos Theta_0` directly.
pub fn qsl_from_overlap(a: f64, cos_theta0: f64) -> QslReport {
    let c = cos_theta0.clamp(0.0, 1.0);
    QslReport {
        a,
        cos_theta0: c,
        t_qsl: (2.0 - 2.0 * c).sqrt() / a,
        t_qsl_loose: (1.0 - c) / a,
    }
}

/// `(1 - Tr[rho_0 rho_f]) / A`; never larger than [`qsl_time`]'s `t_qsl`.
pub fn qsl_time_loose(model: &ModelSpec, rho0: &DensityMatrix) -> Result<f64, QslError> {
    qsl_time(model, rho0).map(|r| r.t_qsl_loose)
}

/// `Q = Tr[H rho_0] - E_{n*}`.
pub fn dissipated_heat(model: &ModelSpec, rho0: &DensityMatrix) -> Result<f64, QslError> {
    let mean = trace_product(model.hamiltonian(), rho0.matrix()).map_err(|_| QslError::Dimension {
        expected: model.dim(),
        got: rho0.dim(),
    })?;
    Ok(mean.re - model.target_energy())
}

/// `-sum_n lambda_n ln lambda_n` with `0 ln 0 = 0`.
pub fn entropy_change(populations: &PopulationVector) -> f64 {
    -populations
        .values()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `arccos F`, with `F` clamped into `[0, 1]` when it strays by at most
/// [`FIDELITY_CLAMP`].
pub fn angle_from_fidelity(f: f64) -> Result<f64, QslError> {
    if !(-FIDELITY_CLAMP..=1.0 + FIDELITY_CLAMP).contains(&f) {
        return Err(QslError::FidelityOutOfRange(f));
    }
    Ok(f.clamp(0.0, 1.0).acos())
}

/// Diagonal/coherence decomposition of a state in an energy eigenbasis.
/// Both parts are expressed in the original (computational) basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSplit {
    pub populations: Vec<f64>,
    pub diagonal: ComplexMatrix,
    pub coherence: ComplexMatrix,
}

impl StateSplit {
    pub fn population_vector(&self) -> Result<PopulationVector, PopulationError> {
        PopulationVector::new(self.populations.clone())
    }

    /// Largest `|<E_n|rho|E_m>|`, `n != m`.
    pub fn max_coherence(&self, basis: &EigenSystem) -> f64 {
        basis.to_eigenbasis(&self.coherence).max_off_diagonal()
    }
}

pub fn split_state(rho: &ComplexMatrix, basis: &EigenSystem) -> StateSplit {
    let in_basis = basis.to_eigenbasis(rho);
    let n = rho.dim();
    let populations: Vec<f64> = (0..n).map(|k| in_basis[(k, k)].re).collect();
    let mut diag = ComplexMatrix::zeros(n);
    let mut coh = in_basis.clone();
    for k in 0..n {
        diag[(k, k)] = in_basis[(k, k)];
        coh[(k, k)] = ZERO;
    }
    StateSplit {
        populations,
        diagonal: basis.from_eigenbasis(&diag),
        coherence: basis.from_eigenbasis(&coh),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QslCheck {
    /// `min_t [A t - (sqrt(2 - 2cos Theta_0) - sqrt(2 - 2cos Theta_t))]`.
    pub worst_margin: f64,
    pub worst_time: f64,
    /// `max(0, -worst_margin)`.
    pub max_violation: f64,
    pub records: usize,
    pub pass: bool,
}

/// Checks the integrated speed limit
/// `A t >= sqrt(2 - 2cos Theta_0) - sqrt(2 - 2cos Theta_t)` at every record.
pub fn trajectory_qsl_check(traj: &Trajectory, a: f64) -> QslCheck {
    let mut check = QslCheck {
        worst_margin: f64::INFINITY,
        worst_time: 0.0,
        max_violation: 0.0,
        records: traj.len(),
        pass: true,
    };
    let Some(first) = traj.first() else {
        return check;
    };
    let distance = |f: f64| (2.0 - 2.0 * f.clamp(0.0, 1.0)).sqrt();
    let d0 = distance(first.fidelity);
    for rec in &traj.records {
        let margin = a * rec.t - (d0 - distance(rec.fidelity));
        if margin < check.worst_margin {
            check.worst_margin = margin;
            check.worst_time = rec.t;
        }
    }
    check.max_violation = (-check.worst_margin).max(0.0);
    check.pass = check.worst_margin >= -QSL_SLACK;
    check
}
