//! Cyclic Jacobi eigensolver for complex Hermitian matrices.

use std::ops::Range;

use super::{frobenius_norm, ComplexMatrix, Ket, LinalgError, C64, HERMITIAN_TOL, ZERO};

/// Convergence threshold on the off-diagonal Frobenius mass, relative to
/// `||M||_F`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-13;
pub const MAX_SWEEPS: usize = 100;
/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const DEGENERACY_GAP: f64 = 1e-9;

/// Eigenvalues in ascending order with column-matched orthonormal vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    values: Vec<f64>,
    vectors: Vec<Ket>,
}

impl EigenSystem {
    /// Assembles an eigensystem from known eigenpairs, checking ascending
    /// order and orthonormality (within 1e-10).
    pub fn from_parts(values: Vec<f64>, vectors: Vec<Ket>) -> Result<Self, LinalgError> {
        if values.len() != vectors.len() {
            return Err(LinalgError::DimensionMismatch {
                left: values.len(),
                right: vectors.len(),
            });
        }
        let n = values.len();
        if let Some(v) = vectors.iter().find(|v| v.dim() != n) {
            return Err(LinalgError::DimensionMismatch { left: n, right: v.dim() });
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(LinalgError::InvalidBasis("eigenvalues are not ascending".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                let dev = (vectors[i].inner(&vectors[j]) - C64::new(expect, 0.0)).norm();
                if dev > 1e-10 {
                    return Err(LinalgError::InvalidBasis(format!(
                        "basis not orthonormal: <{i}|{j}> deviates by {dev:.3e}"
                    )));
                }
            }
        }
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> &[Ket] {
        &self.vectors
    }

    pub fn value(&self, n: usize) -> f64 {
        self.values[n]
    }

    pub fn vector(&self, n: usize) -> &Ket {
        &self.vectors[n]
    }

    /// Matrix whose columns are the eigenvectors.
    pub fn unitary(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.dim(), |r, c| self.vectors[c][r])
    }

    /// `V^dag M V`: `m` expressed in the eigenbasis.
    pub fn to_eigenbasis(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let v = self.unitary();
        &(&v.dagger() * m) * &v
    }

    /// `V M V^dag`: inverse of [`EigenSystem::to_eigenbasis`].
    pub fn from_eigenbasis(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let v = self.unitary();
        &(&v * m) * &v.dagger()
    }

    /// Largest `||M v_k - E_k v_k||` over all columns.
    pub fn residual(&self, m: &ComplexMatrix) -> f64 {
        self.vectors
            .iter()
            .zip(&self.values)
            .map(|(v, &e)| {
                let mut mv = m.apply(v);
                mv.add_scaled(C64::new(-e, 0.0), v);
                mv.norm()
            })
            .fold(0.0, f64::max)
    }

    /// Index ranges of (numerically) degenerate eigenvalue clusters.
    pub fn clusters(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=self.dim() {
            if k == self.dim() || self.values[k] - self.values[k - 1] >= DEGENERACY_GAP {
                out.push(start..k);
                start = k;
            }
        }
        out
    }

    /// Rotates the degenerate cluster that best contains `target` so that
    /// its last vector is the normalized projection of `target` onto the
    /// cluster (phase chosen so the overlap is real and positive). The other
    /// cluster vectors are re-orthogonalized against it.
    pub fn align_to(&mut self, target: &Ket) {
        if target.dim() != self.dim() {
            return;
        }
        let best = self
            .clusters()
            .into_iter()
            .map(|range| {
                let weight: f64 = range.clone().map(|k| self.vectors[k].inner(target).norm_sqr()).sum();
                (range, weight)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((range, weight)) = best else { return };
        if weight < 1e-24 {
            return;
        }

        let mut aligned = Ket::new(vec![ZERO; self.dim()]);
        for k in range.clone() {
            let v = &self.vectors[k];
            aligned.add_scaled(v.inner(target), v);
        }
        if aligned.normalize().is_err() {
            return;
        }

        // Keep the cluster vectors least parallel to `aligned`, then
        // Gram-Schmidt them against it.
        let mut members: Vec<usize> = range.clone().collect();
        members.sort_by(|&a, &b| {
            let oa = self.vectors[a].inner(&aligned).norm();
            let ob = self.vectors[b].inner(&aligned).norm();
            oa.total_cmp(&ob).then(a.cmp(&b))
        });
        members.pop();
        members.sort_unstable();

        let mut basis: Vec<Ket> = Vec::with_capacity(range.len());
        for k in members {
            let mut v = self.vectors[k].clone();
            for b in basis.iter().chain(std::iter::once(&aligned)) {
                let proj = b.inner(&v);
                v.add_scaled(-proj, b);
            }
            if v.normalize().is_err() {
                continue;
            }
            fix_phase(&mut v);
            basis.push(v);
        }
        basis.push(aligned);
        debug_assert_eq!(basis.len(), range.len());
        for (slot, v) in range.zip(basis) {
            self.vectors[slot] = v;
        }
    }

    fn reorthogonalize_clusters(&mut self) {
        for range in self.clusters() {
            if range.len() < 2 {
                continue;
            }
            for k in range.clone() {
                let mut v = self.vectors[k].clone();
                for j in range.start..k {
                    let proj = self.vectors[j].inner(&v);
                    v.add_scaled(-proj, &self.vectors[j]);
                }
                if v.normalize().is_ok() {
                    self.vectors[k] = v;
                }
            }
        }
    }
}

/// Scales `v` so its first largest-modulus component is real and positive.
fn fix_phase(v: &mut Ket) {
    let amps = v.amplitudes();
    let max = amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = amps
        .iter()
        .position(|a| a.norm() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    let phase = amps[pivot].conj() / amps[pivot].norm();
    *v = v.scale(phase);
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut acc = 0.0;
    for r in 0..n {
        for c in 0..n {
            if r != c {
                acc += a[(r, c)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Full eigendecomposition of a Hermitian matrix by cyclic Jacobi sweeps.
///
/// Eigenvalues come back ascending; each eigenvector's largest component is
/// made real and positive, and degenerate clusters are re-orthogonalized, so
/// the output is deterministic for identical input.
pub fn hermitian_eigensystem(m: &ComplexMatrix) -> Result<EigenSystem, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NotFinite);
    }
    let scale = frobenius_norm(m);
    let defect = m.hermiticity_defect();
    let relative = if scale > 0.0 { defect / scale } else { 0.0 };
    if relative > HERMITIAN_TOL {
        return Err(LinalgError::NotHermitian { defect, relative });
    }

    let n = m.dim();
    let mut a = m.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    let tol = OFF_DIAGONAL_TOL * scale;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        let residual = off_diagonal_norm(&a);
        if residual > tol {
            return Err(LinalgError::NoConvergence {
                sweeps: MAX_SWEEPS,
                residual,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&k| a[(k, k)].re).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut col = Ket::new((0..n).map(|r| v[(r, k)]).collect());
            fix_phase(&mut col);
            col
        })
        .collect();
    let mut es = EigenSystem { values, vectors };
    es.reorthogonalize_clusters();
    Ok(es)
}

/// As [`hermitian_eigensystem`], then rotates the degenerate cluster holding
/// `target` so that `target`'s projection is the cluster's last vector.
pub fn hermitian_eigensystem_aligned(m: &ComplexMatrix, target: &Ket) -> Result<EigenSystem, LinalgError> {
    if target.dim() != m.dim() {
        return Err(LinalgError::DimensionMismatch {
            left: m.dim(),
            right: target.dim(),
        });
    }
    let mut es = hermitian_eigensystem(m)?;
    es.align_to(target);
    Ok(es)
}

/// One Jacobi rotation annihilating `a[p][q]`.
///
/// The phase `e^{i phi}` of `a[p][q]` is first absorbed into the `q` basis
/// vector, leaving a real symmetric 2x2 block that the classic rotation
/// `[[c, s], [-s, c]]` diagonalizes. The combined unitary on `(p, q)` is
/// `U = diag(1, e^{-i phi}) R`.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let b = a[(p, q)];
    let mag = b.norm();
    if mag == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // Already negligible against both diagonal entries.
    if mag < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        a[(p, q)] = ZERO;
        a[(q, p)] = ZERO;
        return;
    }
    let phase_conj = b.conj() / mag;
    let theta = (aqq - app) / (2.0 * mag);
    let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
    let c = 1.0 / t.hypot(1.0);
    let s = t * c;

    let u_pp = C64::new(c, 0.0);
    let u_pq = C64::new(s, 0.0);
    let u_qp = phase_conj * -s;
    let u_qq = phase_conj * c;

    let n = a.dim();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * u_pp + akq * u_qp;
        a[(k, q)] = akp * u_pq + akq * u_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
        a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * u_pp + vkq * u_qp;
        v[(k, q)] = vkp * u_pq + vkq * u_qq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::ONE;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn reconstruct(es: &EigenSystem) -> ComplexMatrix {
        es.from_eigenbasis(&ComplexMatrix::from_real_diagonal(es.eigenvalues()))
    }

    fn random_hermitian(dim: usize, entries: &[(f64, f64)]) -> ComplexMatrix {
        let raw = ComplexMatrix::from_fn(dim, |r, c| {
            let (re, im) = entries[(r * dim + c) % entries.len()];
            C64::new(re, im)
        });
        (&raw + &raw.dagger()).scale(C64::new(0.5, 0.0))
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let es = hermitian_eigensystem(&ComplexMatrix::identity(3)).unwrap();
        assert_eq!(es.eigenvalues(), &[1.0, 1.0, 1.0]);
        assert!(es.residual(&ComplexMatrix::identity(3)) < 1e-14);
        let u = es.unitary();
        assert!(frobenius_norm(&(&(&u.dagger() * &u) - &ComplexMatrix::identity(3))) < 1e-14);
    }

    #[test]
    fn diagonal_matrix_is_sorted_with_permuted_basis() {
        let m = ComplexMatrix::from_real_diagonal(&[3.0, 1.0, 2.0]);
        let es = hermitian_eigensystem(&m).unwrap();
        assert_eq!(es.eigenvalues(), &[1.0, 2.0, 3.0]);
        assert_eq!(es.vector(0), &Ket::basis(3, 1));
        assert_eq!(es.vector(1), &Ket::basis(3, 2));
        assert_eq!(es.vector(2), &Ket::basis(3, 0));
    }

    #[test]
    fn complex_two_level() {
        // sigma_y has eigenvalues -1, +1.
        let mut m = ComplexMatrix::zeros(2);
        m[(0, 1)] = C64::new(0.0, -1.0);
        m[(1, 0)] = C64::new(0.0, 1.0);
        let es = hermitian_eigensystem(&m).unwrap();
        assert_abs_diff_eq!(es.value(0), -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(es.value(1), 1.0, epsilon = 1e-14);
        assert!(es.residual(&m) < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = ComplexMatrix::zeros(2);
        m[(0, 1)] = ONE;
        match hermitian_eigensystem(&m) {
            Err(LinalgError::NotHermitian { defect, .. }) => assert_abs_diff_eq!(defect, 2f64.sqrt(), epsilon = 1e-14),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = ComplexMatrix::identity(2);
        m[(1, 1)] = C64::new(f64::INFINITY, 0.0);
        assert_eq!(hermitian_eigensystem(&m).unwrap_err(), LinalgError::NotFinite);
    }

    #[test]
    fn deterministic_output() {
        let m = random_hermitian(5, &[(0.3, 0.1), (-1.2, 0.7), (0.5, -0.4), (2.0, 0.0), (0.1, 0.9), (-0.6, -0.2)]);
        assert_eq!(hermitian_eigensystem(&m).unwrap(), hermitian_eigensystem(&m).unwrap());
    }

    #[test]
    fn alignment_places_target_last_in_cluster() {
        // Two-fold degenerate zero eigenvalue spanned by |0>, |1>.
        let m = ComplexMatrix::from_real_diagonal(&[0.0, 0.0, 1.0]);
        let target = Ket::normalized(vec![ONE, C64::new(0.0, -1.0), ZERO]).unwrap();
        let es = hermitian_eigensystem_aligned(&m, &target).unwrap();
        assert_abs_diff_eq!(es.vector(1).inner(&target).norm_sqr(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(es.vector(0).inner(&target).norm(), 0.0, epsilon = 1e-14);
        assert!(es.residual(&m) < 1e-14);
        // overlap phase fixed to be real positive
        let ov = es.vector(1).inner(&target);
        assert!(ov.re > 0.0 && ov.im.abs() < 1e-14);
    }

    #[test]
    fn clusters_group_close_eigenvalues() {
        let es = hermitian_eigensystem(&ComplexMatrix::from_real_diagonal(&[1.0, 0.0, 1e-12, 2.0, 1.0])).unwrap();
        assert_eq!(es.clusters(), vec![0..2, 2..4, 4..5]);
    }

    fn hermitian_strategy() -> impl Strategy<Value = ComplexMatrix> {
        (2usize..=8).prop_flat_map(|n| {
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |e| random_hermitian(n, &e))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn reconstructs_and_sorts(m in hermitian_strategy()) {
            let es = hermitian_eigensystem(&m).unwrap();
            prop_assert!(es.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(frobenius_norm(&(&reconstruct(&es) - &m)) < 1e-9);
            let u = es.unitary();
            let gram = &u.dagger() * &u;
            prop_assert!(frobenius_norm(&(&gram - &ComplexMatrix::identity(m.dim()))) < 1e-10);
            prop_assert!(es.residual(&m) < 1e-10);
        }

        #[test]
        fn frobenius_is_unitarily_invariant(m in hermitian_strategy(), seed in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64)) {
            let n = m.dim();
            let u1 = hermitian_eigensystem(&random_hermitian(n, &seed)).unwrap().unitary();
            let u2 = hermitian_eigensystem(&random_hermitian(n, &seed[7..])).unwrap().unitary();
            let rotated = &(&u1 * &m) * &u2;
            prop_assert!((frobenius_norm(&rotated) - frobenius_norm(&m)).abs() < 1e-10);
        }
    }
}
