//! Two Rydberg atoms driven into the Bell state `(|00> - |11>)/sqrt(2)`.
//!
//! Basis order is `|00>, |01>, |10>, |11>, |0r>, |r0>`. Energies are in units
//! of the Rabi frequency unit `Omega`; `beta` is an inverse energy in the same
//! units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{PopulationError, PopulationVector};
use crate::lindblad::{ModelError, ModelSpec};
use crate::qmat::{ComplexMatrix, EigenSystem, Ket, C64};

pub const DIM: usize = 6;
pub const BASIS_LABELS: [&str; DIM] = ["00", "01", "10", "11", "0r", "r0"];
/// Zero-based position of the Bell state in the ordered eigenbasis.
pub const TARGET_INDEX: usize = 3;
/// Example population set used throughout the benchmarks.
pub const BENCHMARK_POPULATIONS: [f64; DIM] = [0.2, 0.15, 0.1, 0.4, 0.08, 0.07];

const S00: usize = 0;
const S01: usize = 1;
const S10: usize = 2;
const S11: usize = 3;
const S0R: usize = 4;
const SR0: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RydbergError {
    #[error("{name} = {value}; must be finite and nonnegative")]
    BadParameter { name: &'static str, value: f64 },
    #[error("inverse temperature must be finite, got {0}")]
    BadBeta(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Population(#[from] PopulationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RydbergParams {
    /// Rydberg coupling `Omega_2`.
    pub rabi: f64,
    /// Raman coupling `omega`.
    pub raman: f64,
    /// Spontaneous decay rate `gamma`.
    pub decay: f64,
}

impl Default for RydbergParams {
    fn default() -> Self {
        Self {
            rabi: 0.02,
            raman: 0.01,
            decay: 0.03,
        }
    }
}

impl RydbergParams {
    pub fn new(rabi: f64, raman: f64, decay: f64) -> Result<Self, RydbergError> {
        let p = Self { rabi, raman, decay };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RydbergError> {
        for (name, value) in [("rabi", self.rabi), ("raman", self.raman), ("decay", self.decay)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(RydbergError::BadParameter { name, value });
            }
        }
        Ok(())
    }
}

pub fn hamiltonian(p: &RydbergParams) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(DIM);
    let mut couple = |i: usize, j: usize, v: f64| {
        h[(i, j)] = C64::new(v, 0.0);
        h[(j, i)] = C64::new(v, 0.0);
    };
    for ground in [S00, S11] {
        for single in [S01, S10] {
            couple(ground, single, p.raman);
        }
    }
    couple(S01, S0R, p.rabi);
    couple(S10, SR0, p.rabi);
    h
}

/// `|01><0r|, |00><0r|, |10><r0|, |00><r0|`.
pub fn jump_operators() -> Vec<ComplexMatrix> {
    [(S01, S0R), (S00, S0R), (S10, SR0), (S00, SR0)]
        .into_iter()
        .map(|(to, from)| ComplexMatrix::outer(&Ket::basis(DIM, to), &Ket::basis(DIM, from)))
        .collect()
}

pub fn bell_state() -> Ket {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Ket::from_real(&[r, 0.0, 0.0, -r, 0.0, 0.0])
}

/// Closed-form ordered eigenbasis. The exchange-antisymmetric sector gives
/// `+-Omega_2`; the symmetric sector gives `0` and `+-sqrt(4 omega^2 + Omega_2^2)`;
/// the Bell state is the second zero mode.
pub fn analytic_eigenbasis(p: &RydbergParams) -> EigenSystem {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let energy = (4.0 * p.raman * p.raman + p.rabi * p.rabi).sqrt();
    let (a, b, e) = if energy > 0.0 {
        (2.0 * p.raman, p.rabi, energy)
    } else {
        (1.0, 0.0, 1.0)
    };
    // Coefficients on (|00>+|11>)/sqrt2, (|01>+|10>)/sqrt2, (|0r>+|r0>)/sqrt2.
    let symmetric = |cb: f64, cs: f64, cr: f64| {
        let (cb, cs, cr) = (cb * r, cs * r, cr * r);
        Ket::from_real(&[cb, cs, cs, cb, cr, cr])
    };
    let half = 0.5;
    let vectors = vec![
        symmetric(a * r / e, -r, b * r / e),
        Ket::from_real(&[0.0, half, -half, 0.0, -half, half]),
        symmetric(-b / e, 0.0, a / e),
        bell_state(),
        Ket::from_real(&[0.0, -half, half, 0.0, -half, half]),
        symmetric(a * r / e, r, b * r / e),
    ];
    let values = vec![-energy, -p.rabi, 0.0, 0.0, p.rabi, energy];
    EigenSystem::from_parts(values, vectors).expect("closed-form basis is orthonormal and ordered")
}

/// Model with the closed-form eigenbasis and rate `gamma / 2` per channel.
pub fn build_model(p: &RydbergParams) -> Result<ModelSpec, RydbergError> {
    p.validate()?;
    let jumps = jump_operators();
    let rates = vec![p.decay / 2.0; jumps.len()];
    Ok(ModelSpec::with_eigensystem(
        hamiltonian(p),
        jumps,
        rates,
        bell_state(),
        analytic_eigenbasis(p),
    )?)
}

/// Gibbs weights `exp(-beta E_n) / Z`.
pub fn thermal_populations(beta: f64, energies: &[f64]) -> Result<PopulationVector, RydbergError> {
    if !beta.is_finite() {
        return Err(RydbergError::BadBeta(beta));
    }
    let shift = energies.iter().map(|e| -beta * e).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * e - shift).exp()).collect();
    let z: f64 = weights.iter().sum();
    Ok(PopulationVector::normalized(weights.into_iter().map(|w| w / z).collect(), 1e-12)?)
}
