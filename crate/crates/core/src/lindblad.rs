//! Lindblad generator and a fixed-step RK4 integrator producing
//! fidelity-annotated trajectories.

use serde::Serialize;
use thiserror::Error;

use crate::dsp::angle_from_fidelity;
use crate::qmat::{
    frobenius_norm, hermitian_eigensystem_aligned, validate_density_matrix,
    ComplexMatrix, DensityMatrix, DensityReport, EigenSystem, Ket, LinalgError, C64, I, ZERO,
};

/// Trace drift allowed at any record.
pub const TRACE_TOL: f64 = 1e-8;
/// `||rho - rho^dag||_F` allowed at any record.
pub const HERMITICITY_TOL: f64 = 1e-9;
/// Most negative eigenvalue tolerated before the run is aborted.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Validation tolerance for initial states handed to [`evolve`].
pub const INITIAL_STATE_TOL: f64 = 1e-10;
pub const DEFAULT_STRIDE: usize = 20;
/// Default integration horizon, in units of `1/Omega`.
pub const DEFAULT_T_END: f64 = 5000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{what} has dimension {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{ops} jump operators but {rates} rates")]
    RateCount { ops: usize, rates: usize },
    #[error("rate {index} is {value}; rates must be finite and nonnegative")]
    BadRate { index: usize, value: f64 },
    #[error("eigensystem does not diagonalize the Hamiltonian (residual {0:.3e})")]
    ForeignEigensystem(f64),
}

/// A Markovian preparation model: Hamiltonian, jump channels, target dark
/// state and the ordered energy eigenbasis the target lives in.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    hamiltonian: ComplexMatrix,
    jump_ops: Vec<ComplexMatrix>,
    rates: Vec<f64>,
    target: Ket,
    eigensystem: EigenSystem,
    target_index: usize,
    generator: Generator,
}

impl ModelSpec {
    /// Builds a model and diagonalizes `hamiltonian` numerically, aligning
    /// any degenerate cluster with `target`.
    pub fn new(
        hamiltonian: ComplexMatrix,
        jump_ops: Vec<ComplexMatrix>,
        rates: Vec<f64>,
        target: Ket,
    ) -> Result<Self, ModelError> {
        let target = Self::check_inputs(&hamiltonian, &jump_ops, &rates, target)?;
        let eigensystem = hermitian_eigensystem_aligned(&hamiltonian, &target)?;
        Ok(Self::assemble(hamiltonian, jump_ops, rates, target, eigensystem))
    }

    /// Builds a model around a caller-supplied eigensystem (for instance a
    /// closed-form one). The eigensystem must diagonalize `hamiltonian`
    /// within `1e-10 * max(1, ||H||_F)`.
    pub fn with_eigensystem(
        hamiltonian: ComplexMatrix,
        jump_ops: Vec<ComplexMatrix>,
        rates: Vec<f64>,
        target: Ket,
        eigensystem: EigenSystem,
    ) -> Result<Self, ModelError> {
        let target = Self::check_inputs(&hamiltonian, &jump_ops, &rates, target)?;
        if eigensystem.dim() != hamiltonian.dim() {
            return Err(ModelError::Dimension {
                what: "eigensystem",
                expected: hamiltonian.dim(),
                got: eigensystem.dim(),
            });
        }
        let residual = eigensystem.residual(&hamiltonian);
        if residual > 1e-10 * frobenius_norm(&hamiltonian).max(1.0) {
            return Err(ModelError::ForeignEigensystem(residual));
        }
        Ok(Self::assemble(hamiltonian, jump_ops, rates, target, eigensystem))
    }

    /// Classical pumping toy model: diagonal Hamiltonian with the given
    /// (ascending) energies and one jump `|target><k|` per other level, all at
    /// `rate`. The target level is a dark eigenstate by construction.
    pub fn diagonal_pump(energies: &[f64], target_index: usize, rate: f64) -> Result<Self, ModelError> {
        let n = energies.len();
        if target_index >= n {
            return Err(ModelError::Dimension {
                what: "target index",
                expected: n,
                got: target_index,
            });
        }
        let h = ComplexMatrix::from_real_diagonal(energies);
        let target = Ket::basis(n, target_index);
        let jumps: Vec<_> = (0..n)
            .filter(|&k| k != target_index)
            .map(|k| ComplexMatrix::outer(&target, &Ket::basis(n, k)))
            .collect();
        let rates = vec![rate; jumps.len()];
        let values = energies.to_vec();
        let vectors = (0..n).map(|k| Ket::basis(n, k)).collect();
        let es = EigenSystem::from_parts(values, vectors)?;
        Self::with_eigensystem(h, jumps, rates, target, es)
    }

    /// Same Hamiltonian and channels with a different target state; the
    /// eigenbasis is recomputed numerically.
    pub fn retarget(&self, target: Ket) -> Result<Self, ModelError> {
        Self::new(self.hamiltonian.clone(), self.jump_ops.clone(), self.rates.clone(), target)
    }

    /// Same model with every rate multiplied by `factor`.
    pub fn with_scaled_rates(&self, factor: f64) -> Result<Self, ModelError> {
        let rates = self.rates.iter().map(|r| r * factor).collect();
        Self::with_eigensystem(
            self.hamiltonian.clone(),
            self.jump_ops.clone(),
            rates,
            self.target.clone(),
            self.eigensystem.clone(),
        )
    }

    fn check_inputs(
        hamiltonian: &ComplexMatrix,
        jump_ops: &[ComplexMatrix],
        rates: &[f64],
        mut target: Ket,
    ) -> Result<Ket, ModelError> {
        let n = hamiltonian.dim();
        if !hamiltonian.is_finite() {
            return Err(LinalgError::NotFinite.into());
        }
        let scale = frobenius_norm(hamiltonian);
        let defect = hamiltonian.hermiticity_defect();
        let relative = if scale > 0.0 { defect / scale } else { 0.0 };
        if relative > crate::qmat::HERMITIAN_TOL {
            return Err(LinalgError::NotHermitian { defect, relative }.into());
        }
        if jump_ops.len() != rates.len() {
            return Err(ModelError::RateCount {
                ops: jump_ops.len(),
                rates: rates.len(),
            });
        }
        for l in jump_ops {
            if l.dim() != n {
                return Err(ModelError::Dimension {
                    what: "jump operator",
                    expected: n,
                    got: l.dim(),
                });
            }
            if !l.is_finite() {
                return Err(LinalgError::NotFinite.into());
            }
        }
        if let Some((index, &value)) = rates.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r >= 0.0)) {
            return Err(ModelError::BadRate { index, value });
        }
        if target.dim() != n {
            return Err(ModelError::Dimension {
                what: "target state",
                expected: n,
                got: target.dim(),
            });
        }
        target.normalize()?;
        Ok(target)
    }

    fn assemble(
        hamiltonian: ComplexMatrix,
        jump_ops: Vec<ComplexMatrix>,
        rates: Vec<f64>,
        target: Ket,
        eigensystem: EigenSystem,
    ) -> Self {
        let target_index = (0..eigensystem.dim())
            .map(|k| (k, eigensystem.vector(k).inner(&target).norm_sqr()))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        let generator = Generator::new(&hamiltonian, &jump_ops, &rates);
        Self {
            hamiltonian,
            jump_ops,
            rates,
            target,
            eigensystem,
            target_index,
            generator,
        }
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[ComplexMatrix] {
        &self.jump_ops
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn target(&self) -> &Ket {
        &self.target
    }

    /// `rho_f = |Phi><Phi|`.
    pub fn target_state(&self) -> DensityMatrix {
        DensityMatrix::pure(&self.target)
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        &self.eigensystem
    }

    /// Zero-based position of the target in the ascending energy basis.
    pub fn target_index(&self) -> usize {
        self.target_index
    }

    /// `E_{n*}`.
    pub fn target_energy(&self) -> f64 {
        self.eigensystem.value(self.target_index)
    }

    /// `|<E_{n*}|Phi>|^2`.
    pub fn target_overlap(&self) -> f64 {
        self.eigensystem.vector(self.target_index).inner(&self.target).norm_sqr()
    }

    /// `min(0.05, 0.1 / max(||H||_F, sum_mu gamma_mu ||L_mu^dag L_mu||_F))`.
    pub fn default_step(&self) -> f64 {
        let h_scale = frobenius_norm(&self.hamiltonian);
        let d_scale: f64 = self
            .jump_ops
            .iter()
            .zip(&self.rates)
            .map(|(l, &r)| r * frobenius_norm(&(&l.dagger() * l)))
            .sum();
        let scale = h_scale.max(d_scale);
        if scale > 0.0 {
            (0.1 / scale).min(0.05)
        } else {
            0.05
        }
    }
}

#[derive(Debug, Clone)]
struct SparseJump {
    rate: f64,
    entries: Vec<(usize, usize, C64)>,
}

/// Cached pieces of the generator: `H_eff = H - (i/2) sum gamma L^dag L`
/// and the nonzero entries of each jump operator.
#[derive(Debug, Clone)]
struct Generator {
    h_eff: ComplexMatrix,
    h_eff_dag: ComplexMatrix,
    jumps: Vec<SparseJump>,
}

impl Generator {
    fn new(h: &ComplexMatrix, jump_ops: &[ComplexMatrix], rates: &[f64]) -> Self {
        let mut h_eff = h.clone();
        let mut jumps = Vec::new();
        for (l, &rate) in jump_ops.iter().zip(rates) {
            if rate == 0.0 {
                continue;
            }
            h_eff.add_scaled(C64::new(0.0, -0.5 * rate), &(&l.dagger() * l));
            let n = l.dim();
            let entries = (0..n)
                .flat_map(|r| (0..n).map(move |c| (r, c)))
                .filter_map(|(r, c)| {
                    let z = l[(r, c)];
                    (z != ZERO).then_some((r, c, z))
                })
                .collect();
            jumps.push(SparseJump { rate, entries });
        }
        let h_eff_dag = h_eff.dagger();
        Self { h_eff, h_eff_dag, jumps }
    }

    /// `out = -i (H_eff rho - rho H_eff^dag) + sum gamma L rho L^dag`.
    fn apply(&self, rho: &ComplexMatrix, out: &mut ComplexMatrix, scratch: &mut ComplexMatrix) {
        self.h_eff.mul_into(rho, out);
        rho.mul_into(&self.h_eff_dag, scratch);
        out.add_scaled(C64::new(-1.0, 0.0), scratch);
        out.scale_in_place(-I);
        for jump in &self.jumps {
            let g = C64::new(jump.rate, 0.0);
            for &(i, k, lik) in &jump.entries {
                for &(j, l, ljl) in &jump.entries {
                    out[(i, j)] += g * lik * rho[(k, l)] * ljl.conj();
                }
            }
        }
    }
}

/// `-i[H, rho] + sum_mu gamma_mu (L rho L^dag - {L^dag L, rho}/2)`.
pub fn lindblad_rhs(model: &ModelSpec, rho: &ComplexMatrix) -> Result<ComplexMatrix, ModelError> {
    if rho.dim() != model.dim() {
        return Err(ModelError::Dimension {
            what: "density matrix",
            expected: model.dim(),
            got: rho.dim(),
        });
    }
    let mut out = ComplexMatrix::zeros(model.dim());
    let mut scratch = ComplexMatrix::zeros(model.dim());
    model.generator.apply(rho, &mut out, &mut scratch);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("initial state is not a valid density matrix at tolerance {}: {report:?}", INITIAL_STATE_TOL)]
    InvalidInitialState { report: DensityReport },
    #[error("step must be positive and finite with t_end >= step (step {step}, t_end {t_end})")]
    BadSchedule { step: f64, t_end: f64 },
    #[error("record stride must be at least 1")]
    BadStride,
    #[error("state left the physical region at t = {time}: {report:?}")]
    StateBreach { time: f64, report: DensityReport },
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
    #[error("initial state is not diagonal in the energy eigenbasis (max coherence {0:.3e})")]
    NotDiagonal(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub step: f64,
    /// Emit a record every `stride` steps; the final time is always recorded.
    pub stride: usize,
}

impl EvolveOptions {
    pub fn new(t_end: f64, step: f64) -> Self {
        Self {
            t_end,
            step,
            stride: DEFAULT_STRIDE,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Record after every step.
    pub fn full_resolution(self) -> Self {
        self.with_stride(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    #[serde(skip)]
    pub rho: ComplexMatrix,
    /// `Tr[rho_t rho_f]`.
    pub fidelity: f64,
    /// `arccos(fidelity)`.
    pub angle: f64,
    pub trace_deviation: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    /// Largest off-diagonal modulus of `rho_t` in the energy eigenbasis.
    pub max_coherence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<Record>,
}

impl Trajectory {
    pub fn first(&self) -> Option<&Record> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First time at which the fidelity reaches `level`, linearly
    /// interpolated between records.
    pub fn time_to_fidelity(&self, level: f64) -> Option<f64> {
        let first = self.records.first()?;
        if first.fidelity >= level {
            return Some(first.t);
        }
        self.records.windows(2).find_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            (b.fidelity >= level).then(|| {
                let span = b.fidelity - a.fidelity;
                if span > 0.0 {
                    a.t + (level - a.fidelity) / span * (b.t - a.t)
                } else {
                    b.t
                }
            })
        })
    }

    pub fn max_coherence(&self) -> f64 {
        self.records.iter().map(|r| r.max_coherence).fold(0.0, f64::max)
    }

    pub fn max_trace_deviation(&self) -> f64 {
        self.records.iter().map(|r| r.trace_deviation).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        self.records.iter().map(|r| r.hermiticity_defect).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.records.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }
}

/// Integrates with the default record stride.
pub fn evolve(model: &ModelSpec, rho0: &DensityMatrix, t_end: f64, step: f64) -> Result<Trajectory, EvolveError> {
    evolve_with(model, rho0, &EvolveOptions::new(t_end, step))
}

/// Classical fixed-step RK4. The last step is shortened so the run ends
/// exactly at `t_end`. Every record is checked against [`TRACE_TOL`],
/// [`HERMITICITY_TOL`] and [`POSITIVITY_TOL`]; a breach aborts the run
/// instead of projecting the state back.
pub fn evolve_with(model: &ModelSpec, rho0: &DensityMatrix, opts: &EvolveOptions) -> Result<Trajectory, EvolveError> {
    let mut records = Vec::new();
    evolve_streaming(model, rho0, opts, |rec| records.push(rec))?;
    Ok(Trajectory { records })
}

/// As [`evolve_with`] but hands each record to `sink` instead of storing the
/// whole trajectory.
pub fn evolve_streaming(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    opts: &EvolveOptions,
    mut sink: impl FnMut(Record),
) -> Result<(), EvolveError> {
    let n = model.dim();
    if rho0.dim() != n {
        return Err(ModelError::Dimension {
            what: "initial state",
            expected: n,
            got: rho0.dim(),
        }
        .into());
    }
    let report = validate_density_matrix(rho0.matrix(), INITIAL_STATE_TOL);
    if !report.passes {
        return Err(EvolveError::InvalidInitialState { report });
    }
    let EvolveOptions { t_end, step, stride } = *opts;
    if !(step > 0.0 && step.is_finite() && t_end.is_finite() && t_end >= step) {
        return Err(EvolveError::BadSchedule { step, t_end });
    }
    if stride == 0 {
        return Err(EvolveError::BadStride);
    }

    let steps = ((t_end / step) - 1e-9).ceil().max(1.0) as usize;
    let target = model.target_state();
    let basis = model.eigensystem().unitary();
    let basis_dag = basis.dagger();

    let mut rho = rho0.matrix().clone();
    let mut ws = Workspace::new(n);
    sink(make_record(0.0, &rho, target.matrix(), &basis, &basis_dag)?);

    for k in 1..=steps {
        let t_prev = (k - 1) as f64 * step;
        let t = if k == steps { t_end } else { k as f64 * step };
        rk4_step(&model.generator, &mut rho, t - t_prev, &mut ws);
        if !rho.is_finite() {
            return Err(EvolveError::NonFinite { time: t });
        }
        if k % stride == 0 || k == steps {
            sink(make_record(t, &rho, target.matrix(), &basis, &basis_dag)?);
        }
    }
    Ok(())
}

struct Workspace {
    k: [ComplexMatrix; 4],
    stage: ComplexMatrix,
    scratch: ComplexMatrix,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| ComplexMatrix::zeros(n)),
            stage: ComplexMatrix::zeros(n),
            scratch: ComplexMatrix::zeros(n),
        }
    }
}

fn rk4_step(gen: &Generator, rho: &mut ComplexMatrix, h: f64, ws: &mut Workspace) {
    let Workspace { k, stage, scratch } = ws;
    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);

    gen.apply(rho, &mut k[0], scratch);

    stage.clone_from(rho);
    stage.add_scaled(half, &k[0]);
    gen.apply(stage, &mut k[1], scratch);

    stage.clone_from(rho);
    stage.add_scaled(half, &k[1]);
    gen.apply(stage, &mut k[2], scratch);

    stage.clone_from(rho);
    stage.add_scaled(full, &k[2]);
    gen.apply(stage, &mut k[3], scratch);

    let sixth = C64::new(h / 6.0, 0.0);
    let third = C64::new(h / 3.0, 0.0);
    rho.add_scaled(sixth, &k[0]);
    rho.add_scaled(third, &k[1]);
    rho.add_scaled(third, &k[2]);
    rho.add_scaled(sixth, &k[3]);
}

fn make_record(
    t: f64,
    rho: &ComplexMatrix,
    target: &ComplexMatrix,
    basis: &ComplexMatrix,
    basis_dag: &ComplexMatrix,
) -> Result<Record, EvolveError> {
    let report = validate_density_matrix(rho, 0.0);
    let breach = report.trace_deviation >= TRACE_TOL
        || report.hermiticity_defect >= HERMITICITY_TOL
        || report.min_eigenvalue <= -POSITIVITY_TOL
        || !report.min_eigenvalue.is_finite();
    let fidelity = crate::qmat::trace_product(rho, target).map_err(ModelError::from)?.re;
    let angle = angle_from_fidelity(fidelity);
    if breach || angle.is_err() {
        return Err(EvolveError::StateBreach { time: t, report });
    }
    let in_basis = &(basis_dag * rho) * basis;
    Ok(Record {
        t,
        rho: rho.clone(),
        fidelity,
        angle: angle.unwrap_or(f64::NAN),
        trace_deviation: report.trace_deviation,
        hermiticity_defect: report.hermiticity_defect,
        min_eigenvalue: report.min_eigenvalue,
        max_coherence: in_basis.max_off_diagonal(),
    })
}

/// Largest energy-basis coherence reached along the trajectory from a state
/// that starts diagonal in that basis.
pub fn coherence_decoupling_diagnostic(
    model: &ModelSpec,
    rho0: &DensityMatrix,
    t_end: f64,
    step: f64,
) -> Result<f64, EvolveError> {
    if rho0.dim() != model.dim() {
        return Err(ModelError::Dimension {
            what: "initial state",
            expected: model.dim(),
            got: rho0.dim(),
        }
        .into());
    }
    let initial = model.eigensystem().to_eigenbasis(rho0.matrix()).max_off_diagonal();
    if initial > 1e-10 {
        return Err(EvolveError::NotDiagonal(initial));
    }
    let mut worst = 0.0f64;
    evolve_streaming(model, rho0, &EvolveOptions::new(t_end, step), |rec| {
        worst = worst.max(rec.max_coherence)
    })?;
    Ok(worst)
}
