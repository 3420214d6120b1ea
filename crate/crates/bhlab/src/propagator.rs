//! Time evolution and measurement: Krylov state propagation, Heisenberg and
//! commutator expectations, dense trace norms, Frobenius-norm utilities, and
//! Lanczos ground states.
//!
//! The Krylov propagator needs no spectral-interval estimate: each substep
//! builds a Lanczos basis, exponentiates the small tridiagonal matrix, and
//! halves the step until the residual estimate is below tolerance. The dense
//! eigendecomposition path doubles as the oracle for small systems and as
//! the only route to trace norms.

use crate::fock::SparseOperator;
use crate::par;
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error("propagation did not converge after {substeps} substeps (best residual {residual:.3e})")]
    NoConvergence { substeps: usize, residual: f64 },
    #[error("ground-state iteration stalled at residual {0:.3e}")]
    GroundStateStalled(f64),
    #[error("dimension {0} exceeds the dense threshold {1}; use expectation mode")]
    DenseThresholdExceeded(usize, usize),
    #[error("{0}")]
    Invalid(String),
}

/// Krylov propagation controls.
#[derive(Debug, Clone, Copy)]
pub struct PropagatorSettings {
    pub krylov_dim: usize,
    /// Residual-estimate tolerance per substep.
    pub step_tolerance: f64,
    pub max_substeps: usize,
}

impl Default for PropagatorSettings {
    fn default() -> Self {
        PropagatorSettings {
            krylov_dim: 30,
            step_tolerance: 1e-10,
            max_substeps: 100_000,
        }
    }
}

impl PropagatorSettings {
    pub fn with_tolerance(tol: f64) -> Self {
        PropagatorSettings {
            step_tolerance: tol,
            ..Default::default()
        }
    }
}

/// A mixed state as a weighted list of normalized pure-state amplitude
/// vectors. Translation averaging produces exactly this shape, and it keeps
/// every measurement linear in the members.
#[derive(Debug, Clone)]
pub struct StateEnsemble {
    dim: usize,
    members: Vec<(f64, Vec<Complex64>)>,
}

impl StateEnsemble {
    pub fn new(members: Vec<(f64, Vec<Complex64>)>) -> Result<StateEnsemble, PropagatorError> {
        if members.is_empty() {
            return Err(PropagatorError::Invalid("ensemble needs at least one member".into()));
        }
        let dim = members[0].1.len();
        let mut wsum = 0.0;
        for (w, v) in &members {
            if *w <= 0.0 {
                return Err(PropagatorError::Invalid("weights must be positive".into()));
            }
            if v.len() != dim {
                return Err(PropagatorError::Invalid("member dimensions differ".into()));
            }
            let norm = vec_norm(v);
            if (norm - 1.0).abs() > 1e-10 {
                return Err(PropagatorError::Invalid(format!(
                    "member norm {norm} deviates from 1 beyond 1e-10"
                )));
            }
            wsum += w;
        }
        if (wsum - 1.0).abs() > 1e-12 {
            return Err(PropagatorError::Invalid(format!(
                "weights sum to {wsum}, not 1 within 1e-12"
            )));
        }
        Ok(StateEnsemble { dim, members })
    }

    pub fn pure(v: Vec<Complex64>) -> Result<StateEnsemble, PropagatorError> {
        StateEnsemble::new(vec![(1.0, v)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn members(&self) -> &[(f64, Vec<Complex64>)] {
        &self.members
    }

    /// Dense density matrix from the member outer products.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut rho = DMatrix::from_element(self.dim, self.dim, Complex64::new(0.0, 0.0));
        for (w, v) in &self.members {
            for r in 0..self.dim {
                for c in 0..self.dim {
                    rho[(r, c)] += Complex64::new(*w, 0.0) * v[r] * v[c].conj();
                }
            }
        }
        rho
    }

    /// Expectation of a sparse operator at time zero.
    pub fn expect(&self, op: &SparseOperator) -> Complex64 {
        let per = par::map_indexed(self.members.len(), |k| {
            let (w, v) = &self.members[k];
            op.expectation(v, v) * Complex64::new(*w, 0.0)
        });
        per.into_iter().sum()
    }

    /// `sqrt( sum_k w_k || M psi_k ||^2 ) = || M sqrt(rho) ||_F` for any map
    /// `M` given as a vector pipeline.
    pub fn frobenius<F>(&self, apply: F) -> f64
    where
        F: Fn(&[Complex64]) -> Vec<Complex64> + Sync + Send,
    {
        let per = par::map_indexed(self.members.len(), |k| {
            let (w, v) = &self.members[k];
            let mv = apply(v);
            w * mv.iter().map(|z| z.norm_sqr()).sum::<f64>()
        });
        per.into_iter().sum::<f64>().max(0.0).sqrt()
    }

    /// Evolve every member by `t` under `h`.
    pub fn evolve(
        &self,
        h: &SparseOperator,
        t: f64,
        settings: &PropagatorSettings,
    ) -> Result<StateEnsemble, PropagatorError> {
        let evolved = par::map_indexed(self.members.len(), |k| {
            let (w, v) = &self.members[k];
            evolve(h, v, t, settings).map(|u| (*w, u))
        });
        let mut members = Vec::with_capacity(evolved.len());
        for r in evolved {
            members.push(r?);
        }
        // Members stay normalized to Krylov accuracy; skip re-validation so
        // norm drift remains observable.
        Ok(StateEnsemble {
            dim: self.dim,
            members,
        })
    }

    /// Sequential twin of [`StateEnsemble::evolve`] for the benchmark suite.
    pub fn evolve_sequential(
        &self,
        h: &SparseOperator,
        t: f64,
        settings: &PropagatorSettings,
    ) -> Result<StateEnsemble, PropagatorError> {
        let mut members = Vec::with_capacity(self.members.len());
        for (w, v) in &self.members {
            members.push((*w, evolve(h, v, t, settings)?));
        }
        Ok(StateEnsemble {
            dim: self.dim,
            members,
        })
    }
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Approximate `exp(-i t H) psi` by adaptive Lanczos substepping.
pub fn evolve(
    h: &SparseOperator,
    psi: &[Complex64],
    t: f64,
    settings: &PropagatorSettings,
) -> Result<Vec<Complex64>, PropagatorError> {
    if t == 0.0 {
        return Ok(psi.to_vec());
    }
    let mut state = psi.to_vec();
    let sign = t.signum();
    let mut remaining = t.abs();
    let mut dt = remaining;
    let mut substeps = 0usize;
    let mut best_residual = f64::INFINITY;
    while remaining > 0.0 {
        if substeps >= settings.max_substeps {
            return Err(PropagatorError::NoConvergence {
                substeps,
                residual: best_residual,
            });
        }
        let step = dt.min(remaining);
        match lanczos_step(h, &state, sign * step, settings.krylov_dim, settings.step_tolerance) {
            StepOutcome::Accepted(next) => {
                state = next;
                remaining -= step;
                substeps += 1;
                // Gentle growth keeps the step near the largest accepted size.
                dt = (step * 1.5).min(remaining.max(step));
            }
            StepOutcome::Rejected(residual) => {
                best_residual = best_residual.min(residual);
                dt = step / 2.0;
                substeps += 1;
                if dt < 1e-300 {
                    return Err(PropagatorError::NoConvergence {
                        substeps,
                        residual: best_residual,
                    });
                }
            }
        }
    }
    Ok(state)
}

enum StepOutcome {
    Accepted(Vec<Complex64>),
    Rejected(f64),
}

/// One Lanczos step: build an orthonormal Krylov basis with full
/// reorthogonalization, exponentiate the tridiagonal projection, and accept
/// when the residual estimate `beta_{m+1} |u_m|` is below tolerance.
fn lanczos_step(
    h: &SparseOperator,
    psi: &[Complex64],
    dt: f64,
    max_dim: usize,
    tol: f64,
) -> StepOutcome {
    let norm0 = vec_norm(psi);
    if norm0 == 0.0 {
        return StepOutcome::Accepted(psi.to_vec());
    }
    let m_max = max_dim.max(2).min(psi.len());
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m_max + 1);
    basis.push(psi.iter().map(|z| z / norm0).collect());
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut happy = false;

    for j in 0..m_max {
        let mut w = h.matvec(&basis[j]);
        if j > 0 {
            let b = betas[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= Complex64::new(b, 0.0) * vi;
            }
        }
        let alpha = inner(&basis[j], &w).re;
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= Complex64::new(alpha, 0.0) * vi;
        }
        // Full reorthogonalization, two passes.
        for _ in 0..2 {
            for v in &basis {
                let c = inner(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        alphas.push(alpha);
        let beta = vec_norm(&w);
        if beta < 1e-14 * norm0.max(1.0) {
            happy = true;
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|z| z / beta).collect());
    }

    let m = alphas.len();
    // Exponentiate the real symmetric tridiagonal projection.
    let mut tri = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        tri[(i, i)] = alphas[i];
        if i + 1 < m {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let eig = tri.symmetric_eigen();
    // u = Q exp(-i dt Lambda) Q^T e_1.
    let q = &eig.eigenvectors;
    let mut u = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..m {
        let phase = Complex64::new(0.0, -dt * eig.eigenvalues[k]).exp();
        let qk0 = q[(0, k)];
        for i in 0..m {
            u[i] += Complex64::new(q[(i, k)] * qk0, 0.0) * phase;
        }
    }

    let residual = if happy || m == basis.len() {
        0.0
    } else {
        // basis has m+1 vectors; betas[m-1] couples to the discarded one.
        betas[m - 1] * u[m - 1].norm() * norm0
    };
    if residual > tol {
        return StepOutcome::Rejected(residual);
    }
    let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
    for (i, ui) in u.iter().enumerate() {
        let coeff = ui * norm0;
        for (o, v) in out.iter_mut().zip(&basis[i]) {
            *o += coeff * v;
        }
    }
    StepOutcome::Accepted(out)
}

/// `tr(rho O(t))` via one propagation per ensemble member.
pub fn heisenberg_expectation(
    rho: &StateEnsemble,
    op: &SparseOperator,
    h: &SparseOperator,
    t: f64,
    settings: &PropagatorSettings,
) -> Result<Complex64, PropagatorError> {
    let per = par::map_indexed(rho.members().len(), |k| {
        let (w, v) = &rho.members()[k];
        let phi = evolve(h, v, t, settings)?;
        Ok(op.expectation(&phi, &phi) * Complex64::new(*w, 0.0))
    });
    let mut acc = Complex64::new(0.0, 0.0);
    for r in per {
        acc += r?;
    }
    Ok(acc)
}

/// `tr(rho [O(t), Ot])` from at most three propagations per member:
/// `phi = e^{-iHt} psi`, `chi = e^{-iHt}(Ot psi)`, and for non-Hermitian
/// `Ot` also `chi' = e^{-iHt}(Ot^dagger psi)`.
pub fn commutator_expectation(
    rho: &StateEnsemble,
    op: &SparseOperator,
    op_tilde: &SparseOperator,
    h: &SparseOperator,
    t: f64,
    settings: &PropagatorSettings,
) -> Result<Complex64, PropagatorError> {
    let tilde_hermitian = op_tilde.is_hermitian_exact();
    let per = par::map_indexed(rho.members().len(), |k| {
        let (w, psi) = &rho.members()[k];
        let phi = evolve(h, psi, t, settings)?;
        let chi = evolve(h, &op_tilde.matvec(psi), t, settings)?;
        // <psi| O(t) Ot |psi> = <phi| O chi>.
        let first = inner(&phi, &op.matvec(&chi));
        // <psi| Ot O(t) |psi> = <chi', O phi> with chi' propagating Ot^dagger psi.
        let second = if tilde_hermitian {
            inner(&chi, &op.matvec(&phi))
        } else {
            let chi_p = evolve(h, &op_tilde.adjoint().matvec(psi), t, settings)?;
            inner(&chi_p, &op.matvec(&phi))
        };
        Ok((first - second) * Complex64::new(*w, 0.0))
    });
    let mut acc = Complex64::new(0.0, 0.0);
    for r in per {
        acc += r?;
    }
    Ok(acc)
}

/// Cached eigendecomposition of a Hermitian matrix, for cheap unitaries at
/// many times.
pub struct EigenPropagator {
    q: DMatrix<Complex64>,
    eigenvalues: Vec<f64>,
}

impl EigenPropagator {
    pub fn new(h: &DMatrix<Complex64>) -> EigenPropagator {
        let eig = h.clone().symmetric_eigen();
        EigenPropagator {
            q: eig.eigenvectors,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
        }
    }

    /// `exp(-i t H)`.
    pub fn unitary(&self, t: f64) -> DMatrix<Complex64> {
        let n = self.q.nrows();
        let mut scaled = self.q.clone();
        for k in 0..n {
            let phase = Complex64::new(0.0, -t * self.eigenvalues[k]).exp();
            for r in 0..n {
                scaled[(r, k)] *= phase;
            }
        }
        &scaled * self.q.adjoint()
    }

    /// `O(t) = e^{iHt} O e^{-iHt}`.
    pub fn heisenberg(&self, op: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
        let u = self.unitary(t);
        u.adjoint() * op * &u
    }
}

/// Dense unitary `exp(-i t H)` from the eigendecomposition of Hermitian `H`.
pub fn dense_propagator(h: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
    EigenPropagator::new(h).unitary(t)
}

/// Heisenberg-evolved observable `O(t) = e^{iHt} O e^{-iHt}`, dense.
pub fn dense_heisenberg(
    op: &DMatrix<Complex64>,
    h: &DMatrix<Complex64>,
    t: f64,
) -> DMatrix<Complex64> {
    let u = dense_propagator(h, t);
    u.adjoint() * op * &u
}

/// Trace norm (sum of singular values) of a dense matrix.
pub fn trace_norm(m: &DMatrix<Complex64>) -> f64 {
    m.clone().svd(false, false).singular_values.iter().sum()
}

/// `|| rho [O(t), Ot] ||_1`, built densely. Errors above `dense_threshold`.
pub fn weighted_commutator_trace_norm(
    rho: &StateEnsemble,
    op: &SparseOperator,
    op_tilde: &SparseOperator,
    h: &SparseOperator,
    t: f64,
    dense_threshold: usize,
) -> Result<f64, PropagatorError> {
    let dim = rho.dim();
    if dim > dense_threshold {
        return Err(PropagatorError::DenseThresholdExceeded(dim, dense_threshold));
    }
    let hd = h.to_dense();
    let ot = dense_heisenberg(&op.to_dense(), &hd, t);
    let otd = op_tilde.to_dense();
    let comm = &ot * &otd - &otd * &ot;
    let m = rho.to_dense() * comm;
    Ok(trace_norm(&m))
}

/// Lowest eigenpair by restarted Lanczos; the residual `||H x - E x||` is
/// driven below `tol`.
pub fn ground_state(
    h: &SparseOperator,
    krylov_dim: usize,
    tol: f64,
) -> Result<(f64, Vec<Complex64>), PropagatorError> {
    let dim = h.dim();
    if dim == 0 {
        return Err(PropagatorError::Invalid("empty operator".into()));
    }
    if dim == 1 {
        let e = h.to_dense()[(0, 0)].re;
        return Ok((e, vec![Complex64::new(1.0, 0.0)]));
    }
    // Deterministic pseudo-random start vector.
    let mut x: Vec<Complex64> = (0..dim)
        .map(|i| {
            let v = ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5;
            Complex64::new(v + 0.01, 0.0)
        })
        .collect();
    let n0 = vec_norm(&x);
    for z in &mut x {
        *z /= n0;
    }

    let m_max = krylov_dim.max(8).min(dim);
    let mut energy = f64::INFINITY;
    for _restart in 0..200 {
        let (basis, tri) = lanczos_basis(h, &x, m_max);
        let m = tri.nrows();
        let eig = tri.symmetric_eigen();
        // Lowest Ritz pair.
        let mut kmin = 0;
        for k in 1..m {
            if eig.eigenvalues[k] < eig.eigenvalues[kmin] {
                kmin = k;
            }
        }
        energy = eig.eigenvalues[kmin];
        let mut next = vec![Complex64::new(0.0, 0.0); dim];
        for (i, base_vec) in basis.iter().enumerate().take(m) {
            let c = Complex64::new(eig.eigenvectors[(i, kmin)], 0.0);
            for (o, v) in next.iter_mut().zip(base_vec) {
                *o += c * v;
            }
        }
        let nn = vec_norm(&next);
        for z in &mut next {
            *z /= nn;
        }
        x = next;
        let hx = h.matvec(&x);
        let resid: f64 = hx
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - Complex64::new(energy, 0.0) * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if resid <= tol {
            return Ok((energy, x));
        }
    }
    let hx = h.matvec(&x);
    let resid: f64 = hx
        .iter()
        .zip(&x)
        .map(|(a, b)| (a - Complex64::new(energy, 0.0) * b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Err(PropagatorError::GroundStateStalled(resid))
}

fn lanczos_basis(
    h: &SparseOperator,
    start: &[Complex64],
    m_max: usize,
) -> (Vec<Vec<Complex64>>, DMatrix<f64>) {
    let mut basis: Vec<Vec<Complex64>> = vec![start.to_vec()];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for j in 0..m_max {
        let mut w = h.matvec(&basis[j]);
        if j > 0 {
            let b: f64 = betas[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= Complex64::new(b, 0.0) * vi;
            }
        }
        let alpha = inner(&basis[j], &w).re;
        for (wi, vi) in w.iter_mut().zip(&basis[j]) {
            *wi -= Complex64::new(alpha, 0.0) * vi;
        }
        for _ in 0..2 {
            for v in &basis {
                let c = inner(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        alphas.push(alpha);
        let beta = vec_norm(&w);
        if beta < 1e-13 || j + 1 == m_max {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|z| z / beta).collect());
    }
    let m = alphas.len();
    let mut tri = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        tri[(i, i)] = alphas[i];
        if i + 1 < m {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    (basis, tri)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockBasis, Sector};
    use crate::hamiltonian::{assemble, Interaction, ModelSpec};
    use crate::lattice::Lattice;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let n = vec_norm(&v);
        for z in &mut v {
            *z /= n;
        }
        v
    }

    fn random_hermitian_sparse(dim: usize, rng: &mut ChaCha8Rng) -> SparseOperator {
        let mut trip = Vec::new();
        for r in 0..dim {
            trip.push((r, r, Complex64::new(rng.gen::<f64>() - 0.5, 0.0)));
            for _ in 0..3 {
                let c = rng.gen_range(0..dim);
                if c != r {
                    let v = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                    trip.push((r, c, v));
                    trip.push((c, r, v.conj()));
                }
            }
        }
        SparseOperator::from_triplets(dim, trip, true)
    }

    #[test]
    fn two_level_rabi() {
        let lat = Lattice::torus(2, 1).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(1)).unwrap();
        let j = 0.85;
        let spec = ModelSpec::uniform(j, Interaction::None);
        let h = assemble(&basis, &lat, &spec).unwrap();
        let n0 = basis.number_operator(0);
        let start = basis.index_of(&[1, 0]).unwrap();
        let mut psi = vec![Complex64::new(0.0, 0.0); basis.dim()];
        psi[start] = Complex64::new(1.0, 0.0);
        let settings = PropagatorSettings::default();
        for step in 0..=40 {
            let t = step as f64 * 0.125;
            let phi = evolve(&h, &psi, t, &settings).unwrap();
            let value = n0.expectation(&phi, &phi).re;
            assert_relative_eq!(value, (j * t).cos().powi(2), epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_hermitian_sparse(20, &mut rng);
        let psi = random_state(20, &mut rng);
        let out = evolve(&h, &psi, 0.0, &PropagatorSettings::default()).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn krylov_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &dim in &[12usize, 60, 200, 450] {
            let h = random_hermitian_sparse(dim, &mut rng);
            let psi = random_state(dim, &mut rng);
            let t = 1.7;
            let krylov = evolve(&h, &psi, t, &PropagatorSettings::default()).unwrap();
            let u = dense_propagator(&h.to_dense(), t);
            let psin = DVector::from_column_slice(&psi);
            let exact = u * psin;
            let err: f64 = krylov
                .iter()
                .zip(exact.iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-8, "dim {dim}: err {err:.3e}");
        }
    }

    #[test]
    fn unitarity_reversibility_energy() {
        let lat = Lattice::torus(4, 1).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(3)).unwrap();
        let spec = ModelSpec::uniform(1.0, Interaction::Power { p: 4.0, u: 1.0, mu: 0.0 });
        let h = assemble(&basis, &lat, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_state(basis.dim(), &mut rng);
        let settings = PropagatorSettings::default();
        let t = 5.0;
        let phi = evolve(&h, &psi, t, &settings).unwrap();
        assert!((vec_norm(&phi) - 1.0).abs() < 1e-9);
        let e0 = h.expectation(&psi, &psi).re;
        let e1 = h.expectation(&phi, &phi).re;
        assert!((e0 - e1).abs() < 1e-8, "energy drift {}", (e0 - e1).abs());
        let back = evolve(&h, &phi, -t, &settings).unwrap();
        let err: f64 = back
            .iter()
            .zip(&psi)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-8, "reversibility error {err:.3e}");
    }

    #[test]
    fn ensemble_invariants() {
        let v = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!(StateEnsemble::new(vec![(0.5, v.clone()), (0.5, v.clone())]).is_ok());
        assert!(StateEnsemble::new(vec![(0.4, v.clone()), (0.5, v.clone())]).is_err());
        let unnorm = vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!(StateEnsemble::new(vec![(1.0, unnorm)]).is_err());
    }

    #[test]
    fn heisenberg_expectation_basics() {
        let lat = Lattice::torus(3, 1).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(2)).unwrap();
        let spec = ModelSpec::uniform(0.8, Interaction::Power { p: 2.0, u: 1.0, mu: 0.0 });
        let h = assemble(&basis, &lat, &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = StateEnsemble::new(vec![
            (0.25, random_state(basis.dim(), &mut rng)),
            (0.75, random_state(basis.dim(), &mut rng)),
        ])
        .unwrap();
        let settings = PropagatorSettings::default();
        let ident = SparseOperator::identity(basis.dim());
        let n_tot = basis.number_on(&[0, 1, 2]);
        let n0 = basis.number_operator(0);
        // t = 0 reproduces tr(rho O).
        let t0 = heisenberg_expectation(&rho, &n0, &h, 0.0, &settings).unwrap();
        let direct = rho.expect(&n0);
        assert_relative_eq!(t0.re, direct.re, epsilon = 1e-12);
        for &t in &[0.7, 2.3] {
            let one = heisenberg_expectation(&rho, &ident, &h, t, &settings).unwrap();
            assert_relative_eq!(one.re, 1.0, epsilon = 1e-9);
            assert!(one.im.abs() < 1e-10);
            let n = heisenberg_expectation(&rho, &n_tot, &h, t, &settings).unwrap();
            assert_relative_eq!(n.re, 2.0, epsilon = 1e-8);
        }
        // Linearity: ensemble expectation = weighted member expectations.
        let m0 = StateEnsemble::pure(rho.members()[0].1.clone()).unwrap();
        let m1 = StateEnsemble::pure(rho.members()[1].1.clone()).unwrap();
        let t = 1.1;
        let whole = heisenberg_expectation(&rho, &n0, &h, t, &settings).unwrap();
        let parts = heisenberg_expectation(&m0, &n0, &h, t, &settings).unwrap() * 0.25
            + heisenberg_expectation(&m1, &n0, &h, t, &settings).unwrap() * 0.75;
        assert_relative_eq!(whole.re, parts.re, epsilon = 1e-10);
    }

    #[test]
    fn commutator_expectation_disjoint_and_dense_check() {
        let lat = Lattice::torus(4, 1).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(2)).unwrap();
        let spec = ModelSpec::uniform(1.0, Interaction::Power { p: 2.0, u: 0.5, mu: 0.0 });
        let h = assemble(&basis, &lat, &spec).unwrap();
        let o = basis.projector_eq(0, 0);
        let ot = basis.projector_eq(2, 0);
        let settings = PropagatorSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = StateEnsemble::pure(random_state(basis.dim(), &mut rng)).unwrap();
        // Disjoint supports at t = 0, and diagonal observables commute.
        let z = commutator_expectation(&rho, &o, &ot, &h, 0.0, &settings).unwrap();
        assert!(z.norm() < 1e-12);
        // Cross-check against the dense Heisenberg commutator at t > 0.
        let t = 0.9;
        let v = commutator_expectation(&rho, &o, &ot, &h, t, &settings).unwrap();
        let hd = h.to_dense();
        let otd = dense_heisenberg(&o.to_dense(), &hd, t);
        let comm = &otd * ot.to_dense() - ot.to_dense() * &otd;
        let dense_val = (rho.to_dense() * comm).trace();
        assert_relative_eq!(v.re, dense_val.re, epsilon = 1e-8);
        assert_relative_eq!(v.im, dense_val.im, epsilon = 1e-8);
    }

    #[test]
    fn trace_norm_dominates_expectation() {
        let lat = Lattice::torus(4, 1).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(2)).unwrap();
        let spec = ModelSpec::uniform(1.0, Interaction::Power { p: 2.0, u: 0.5, mu: 0.0 });
        let h = assemble(&basis, &lat, &spec).unwrap();
        let o = basis.projector_eq(0, 0);
        let ot = basis.projector_eq(2, 0);
        let settings = PropagatorSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rho = StateEnsemble::pure(random_state(basis.dim(), &mut rng)).unwrap();
        for &t in &[0.0, 0.5, 1.5] {
            let tn = weighted_commutator_trace_norm(&rho, &o, &ot, &h, t, 4096).unwrap();
            let ev = commutator_expectation(&rho, &o, &ot, &h, t, &settings).unwrap();
            assert!(tn >= ev.norm() - 1e-10, "t={t}: {tn} vs {}", ev.norm());
        }
        // Threshold is enforced.
        let err = weighted_commutator_trace_norm(&rho, &o, &ot, &h, 0.5, 3);
        assert!(matches!(err, Err(PropagatorError::DenseThresholdExceeded(_, _))));
    }

    #[test]
    fn pure_state_trace_norm_closed_form() {
        // For a pure state, rho K = |psi><psi| K has rank one: its trace
        // norm equals ||K^dagger psi||, which we cross-check against the
        // generic singular-value route.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let dim = 24;
        let psi = random_state(dim, &mut rng);
        let k = random_hermitian_sparse(dim, &mut rng);
        let rho = StateEnsemble::pure(psi.clone()).unwrap();
        let m = rho.to_dense() * k.to_dense();
        let tn = trace_norm(&m);
        let closed = vec_norm(&k.adjoint().matvec(&psi));
        assert_relative_eq!(tn, closed, epsilon = 1e-10);
    }

    #[test]
    fn frobenius_matches_dense() {
        let lat = Lattice::torus(3, 1).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rho = StateEnsemble::new(vec![
            (0.3, random_state(basis.dim(), &mut rng)),
            (0.7, random_state(basis.dim(), &mut rng)),
        ])
        .unwrap();
        // M = identity gives 1 by state normalization.
        let one = rho.frobenius(|v| v.to_vec());
        assert_relative_eq!(one, 1.0, epsilon = 1e-12);
        // M = projector: sqrt(tr(P rho P)) = sqrt(tr(rho P)).
        let p = basis.projector_le(0, 0);
        let f = rho.frobenius(|v| p.matvec(v));
        assert_relative_eq!(f, rho.expect(&p).re.sqrt(), epsilon = 1e-12);
        // Random sparse M against the dense formula sqrt(tr(M rho M^dagger)).
        let m = random_hermitian_sparse(basis.dim(), &mut rng);
        let f = rho.frobenius(|v| m.matvec(v));
        let md = m.to_dense();
        let dense = (&md * rho.to_dense() * md.adjoint()).trace().re.max(0.0).sqrt();
        assert_relative_eq!(f, dense, epsilon = 1e-10);
    }

    #[test]
    fn ground_state_examples() {
        // J = 0: ground energy is the minimum of the diagonal.
        let lat = Lattice::torus(3, 1).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(3)).unwrap();
        let spec = ModelSpec::uniform(0.0, Interaction::Power { p: 2.0, u: 1.0, mu: 0.0 });
        let h = assemble(&basis, &lat, &spec).unwrap();
        let (e, _) = ground_state(&h, 30, 1e-8).unwrap();
        let min_diag = basis
            .states()
            .iter()
            .map(|s| s.iter().map(|&n| (n as f64).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(e, min_diag, epsilon = 1e-8);

        // Two sites, one particle: E0 = w(0) + w(1) - |J|.
        let lat2 = Lattice::torus(2, 1).unwrap();
        let b2 = FockBasis::build(&lat2, Sector::FixedN(1)).unwrap();
        let spec2 = ModelSpec::uniform(0.6, Interaction::Table(vec![0.2, 0.9]));
        let h2 = assemble(&b2, &lat2, &spec2).unwrap();
        let (e2, x2) = ground_state(&h2, 10, 1e-10).unwrap();
        assert_relative_eq!(e2, 0.2 + 0.9 - 0.6, epsilon = 1e-9);
        let hx = h2.matvec(&x2);
        let resid: f64 = hx
            .iter()
            .zip(&x2)
            .map(|(a, b)| (a - Complex64::new(e2, 0.0) * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(resid <= 1e-8);

        // Against dense eigendecomposition on a random instance.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let hr = random_hermitian_sparse(40, &mut rng);
        let (er, _) = ground_state(&hr, 30, 1e-9).unwrap();
        let eig = hr.to_dense().symmetric_eigen();
        let emin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(er, emin, epsilon = 1e-8);
    }
}
