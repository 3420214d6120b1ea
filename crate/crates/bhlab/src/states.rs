//! Special quantum states: Mott patterns, the alternating-strip
//! superposition, pair trial states and their optimization, diluted-strip
//! ground states, the translation-averaged line-concentration state, and
//! moment/tail measurements.

use crate::fock::{FockBasis, Sector, SparseOperator};
use crate::hamiltonian::{self, Interaction, ModelSpec};
use crate::lattice::Lattice;
use crate::propagator::{self, PropagatorSettings, StateEnsemble};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("pattern has total occupation {0} but the sector requires {1}")]
    PatternSectorMismatch(u32, usize),
    #[error("pattern length {0} does not match the {1}-site basis")]
    PatternLength(usize, usize),
    #[error("occupation vector not found in the basis")]
    NotInBasis,
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    Fock(#[from] crate::fock::FockError),
    #[error(transparent)]
    Model(#[from] crate::hamiltonian::ModelError),
    #[error(transparent)]
    Propagator(#[from] crate::propagator::PropagatorError),
}

/// Pure Mott state: the basis vector of a fixed occupation pattern.
pub fn mott(basis: &FockBasis, pattern: &[u32]) -> Result<StateEnsemble, StateError> {
    if pattern.len() != basis.n_sites() {
        return Err(StateError::PatternLength(pattern.len(), basis.n_sites()));
    }
    if let Sector::FixedN(n) = basis.sector() {
        let total: u32 = pattern.iter().sum();
        if total as usize != n {
            return Err(StateError::PatternSectorMismatch(total, n));
        }
    }
    let idx = basis.index_of(pattern).ok_or(StateError::NotInBasis)?;
    let mut v = vec![Complex64::new(0.0, 0.0); basis.dim()];
    v[idx] = Complex64::new(1.0, 0.0);
    Ok(StateEnsemble::pure(v)?)
}

/// Equal superposition of the two alternating-strip Mott states on a
/// two-dimensional torus of even side: occupation 2 on every odd (resp.
/// even) column and 0 elsewhere. Lives in the density-1 sector.
pub fn strip_superposition(basis: &FockBasis, lat: &Lattice) -> Result<StateEnsemble, StateError> {
    if lat.dims() != 2 {
        return Err(StateError::Infeasible("strip superposition needs D = 2".into()));
    }
    if !lat.side().is_multiple_of(2) {
        return Err(StateError::Infeasible("strip superposition needs even side length".into()));
    }
    let n = lat.n_vertices();
    if basis.sector() != Sector::FixedN(n) {
        return Err(StateError::Infeasible(format!(
            "strip superposition lives in the fixed-N sector with N = {n}"
        )));
    }
    let pattern = |parity: usize| -> Vec<u32> {
        (0..n)
            .map(|v| if lat.coords(v)[0] % 2 == parity { 2 } else { 0 })
            .collect()
    };
    let even = basis.index_of(&pattern(1)).ok_or(StateError::NotInBasis)?;
    let odd = basis.index_of(&pattern(0)).ok_or(StateError::NotInBasis)?;
    let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut v = vec![Complex64::new(0.0, 0.0); basis.dim()];
    v[even] = amp;
    v[odd] = amp;
    Ok(StateEnsemble::pure(v)?)
}

/// Result of the two-site pair-state optimization.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairOptimum {
    pub lambda1: f64,
    pub lambda2: f64,
    pub energy_per_site: f64,
}

/// Minimize the pair trial energy `2U (lambda2^2 - T1 lambda1 lambda2)` with
/// `T1 = |J|/U` over the constraint `lambda1^2 + 2 lambda2^2 = 1`. The
/// minimum is `(U/2)(1 - sqrt(1 + 2 T1^2))` per site.
pub fn optimize_pair_params(j: f64, u: f64) -> Result<PairOptimum, StateError> {
    if u <= 0.0 {
        return Err(StateError::Infeasible(format!("pair optimization needs U > 0, got {u}")));
    }
    let t1 = j.abs() / u;
    // Parametrize lambda1 = cos(theta), lambda2 = sin(theta)/sqrt(2); the
    // objective is U/2 - (U/2)(cos 2theta + sqrt(2) T1 sin 2theta), minimized
    // at 2theta = atan2(sqrt(2) T1, 1).
    let two_theta = (2.0f64.sqrt() * t1).atan2(1.0);
    let theta = two_theta / 2.0;
    let lambda1 = theta.cos();
    let lambda2 = theta.sin() / 2.0f64.sqrt();
    let energy_per_site = 0.5 * u * (1.0 - (1.0 + 2.0 * t1 * t1).sqrt());
    Ok(PairOptimum {
        lambda1,
        lambda2,
        energy_per_site,
    })
}

/// Measured properties of a diluted-strip state.
#[derive(Debug, Clone, Serialize)]
pub struct StripReport {
    /// Ground energy of the periodized strip divided by its site count.
    pub strip_energy_per_site: f64,
    /// Energy density of the embedded state over the whole lattice.
    pub energy_density: f64,
    /// `e1 = -` (strip ground energy per strip site).
    pub e1: f64,
    /// `e2 = w(0)`, the vacuum value of the interaction.
    pub e2: f64,
}

/// Ground state of the periodized strip of width `ell0` (columns
/// `0..ell0`) in its density-1 sector, tensored with vacuum on the remaining
/// columns of the torus.
///
/// The returned vector is vertically translation covariant: within the
/// (possibly degenerate) ground space, a simultaneous eigenvector of the
/// vertical shift is selected, so vertical translation acts as a phase.
pub fn low_energy_strip(
    basis: &FockBasis,
    lat: &Lattice,
    ell0: usize,
    spec: &ModelSpec,
    settings: &PropagatorSettings,
    dense_cap: usize,
) -> Result<(StateEnsemble, StripReport), StateError> {
    if lat.dims() != 2 {
        return Err(StateError::Infeasible("strip states need D = 2".into()));
    }
    if ell0 == 0 || ell0 >= lat.side() {
        return Err(StateError::Infeasible(format!(
            "strip width must be in 1..side, got {ell0}"
        )));
    }
    let strip_sites: Vec<usize> = (0..ell0).flat_map(|x| lat.column(x)).collect();
    let n_strip = strip_sites.len();
    if basis.sector() != Sector::FixedN(n_strip) {
        return Err(StateError::Infeasible(format!(
            "basis sector must be FixedN({n_strip}) for a density-1 strip of width {ell0}"
        )));
    }
    let (sub_basis, ground, energy) =
        strip_ground_vector(lat, &strip_sites, spec, settings, dense_cap)?;

    // Embed: strip occupations on the strip, vacuum elsewhere.
    let mut v = vec![Complex64::new(0.0, 0.0); basis.dim()];
    for (sub_idx, amp) in ground.iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let sub_occ = sub_basis.state(sub_idx);
        let mut occ = vec![0u32; basis.n_sites()];
        for (k, &site) in strip_sites.iter().enumerate() {
            occ[site] = sub_occ[k];
        }
        let idx = basis.index_of(&occ).ok_or(StateError::NotInBasis)?;
        v[idx] = *amp;
    }
    let state = StateEnsemble::pure(v)?;

    let e2 = spec.interaction.eval(0)?;
    let h = hamiltonian::assemble(basis, lat, spec)?;
    let energy_density = state.expect(&h).re / lat.n_vertices() as f64;
    let report = StripReport {
        strip_energy_per_site: energy / n_strip as f64,
        energy_density,
        e1: -(energy / n_strip as f64),
        e2,
    };
    Ok((state, report))
}

/// Ground vector of the periodized strip Hamiltonian restricted to its
/// density-1 sector, adapted to the vertical shift within the ground space.
fn strip_ground_vector(
    lat: &Lattice,
    strip_sites: &[usize],
    spec: &ModelSpec,
    settings: &PropagatorSettings,
    dense_cap: usize,
) -> Result<(FockBasis, Vec<Complex64>, f64), StateError> {
    let n_strip = strip_sites.len();
    // Sub-lattice: edges of the torus restricted to the strip plus the
    // periodizing wrap, re-indexed to 0..n_strip.
    let index_in: std::collections::HashMap<usize, usize> = strip_sites
        .iter()
        .enumerate()
        .map(|(k, &v)| (v, k))
        .collect();
    let sub_basis = FockBasis::build_sites(n_strip, Sector::FixedN(n_strip), dense_cap)?;
    let mut edges_local: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in lat.edges() {
        if let (Some(&la), Some(&lb)) = (index_in.get(&a), index_in.get(&b)) {
            edges_local.push((la.min(lb), la.max(lb)));
        }
    }
    // Wrap: last column to first column, useful only for width >= 2.
    let cols: Vec<usize> = {
        let mut c: Vec<usize> = strip_sites.iter().map(|&v| lat.coords(v)[0]).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    if cols.len() >= 2 {
        let (first, last) = (cols[0], *cols.last().unwrap());
        for &v in &lat.column(last) {
            let mut c = lat.coords(v);
            c[0] = first;
            let u = lat.vertex(&c);
            if let (Some(&lv), Some(&lu)) = (index_in.get(&v), index_in.get(&u)) {
                let e = (lv.min(lu), lv.max(lu));
                if !edges_local.contains(&e) {
                    edges_local.push(e);
                }
            }
        }
    }
    edges_local.sort_unstable();
    edges_local.dedup();

    let mut trip = Vec::new();
    for (idx, occ) in sub_basis.states().iter().enumerate() {
        let mut diag = 0.0;
        for &n in occ.iter() {
            diag += spec.interaction.eval(n)?;
        }
        if diag != 0.0 {
            trip.push((idx, idx, Complex64::new(diag, 0.0)));
        }
        for &(a, b) in &edges_local {
            for (src, dst) in [(a, b), (b, a)] {
                if occ[src] == 0 {
                    continue;
                }
                let mut col = occ.clone();
                col[src] -= 1;
                col[dst] += 1;
                if let Some(cidx) = sub_basis.index_of(&col) {
                    let amp = spec.hopping * ((occ[src] as f64) * (occ[dst] as f64 + 1.0)).sqrt();
                    trip.push((idx, cidx, Complex64::new(amp, 0.0)));
                }
            }
        }
    }
    let h_strip = SparseOperator::from_triplets(sub_basis.dim(), trip, true);

    let (energy, vec) = propagator::ground_state(&h_strip, settings.krylov_dim.max(40), 1e-8)?;

    // Vertical shift on the strip, lifted to the sub-basis.
    let vertical = vertical_shift_permutation(lat, strip_sites);
    let gamma = lift_permutation(&sub_basis, &vertical);

    // Select a shift eigenvector inside the (near-)degenerate ground space.
    let vec = if sub_basis.dim() <= dense_cap {
        symmetry_adapt(&h_strip, &gamma, energy, vec)
    } else {
        vec
    };
    Ok((sub_basis, vec, energy))
}

/// Permutation of local strip indices induced by a unit vertical shift.
fn vertical_shift_permutation(lat: &Lattice, strip_sites: &[usize]) -> Vec<usize> {
    let index_in: std::collections::HashMap<usize, usize> = strip_sites
        .iter()
        .enumerate()
        .map(|(k, &v)| (v, k))
        .collect();
    strip_sites
        .iter()
        .map(|&v| {
            let mut c = lat.coords(v);
            c[1] = (c[1] + 1) % lat.side();
            index_in[&lat.vertex(&c)]
        })
        .collect()
}

fn lift_permutation(basis: &FockBasis, perm: &[usize]) -> SparseOperator {
    let trip: Vec<(usize, usize, Complex64)> = (0..basis.dim())
        .map(|row| {
            let occ = basis.state(row);
            let mut col_occ = vec![0u32; basis.n_sites()];
            for v in 0..basis.n_sites() {
                col_occ[v] = occ[perm[v]];
            }
            let col = basis.index_of(&col_occ).expect("permutation stays in sector");
            (row, col, Complex64::new(1.0, 0.0))
        })
        .collect();
    SparseOperator::from_triplets(basis.dim(), trip, false)
}

/// Replace a ground vector by a simultaneous eigenvector of the shift inside
/// the ground eigenspace, so that the shift acts as a pure phase.
fn symmetry_adapt(
    h: &SparseOperator,
    shift: &SparseOperator,
    energy: f64,
    fallback: Vec<Complex64>,
) -> Vec<Complex64> {
    let hd = h.to_dense();
    let dim = hd.nrows();
    let eig = hd.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let tol = 1e-8 * scale.max(1.0);
    let ground_cols: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&k| (eig.eigenvalues[k] - energy).abs() <= tol)
        .collect();
    if ground_cols.is_empty() {
        return fallback;
    }
    if ground_cols.len() == 1 {
        let k = ground_cols[0];
        return (0..dim).map(|r| eig.eigenvectors[(r, k)]).collect();
    }
    // Diagonalize the unitary shift restricted to the ground space through a
    // Hermitian combination cos + alpha sin of its generator. Opposite
    // momenta share the cosine, so a generic alpha is needed to split them;
    // each candidate is verified to actually be a shift eigenvector.
    let g = ground_cols.len();
    let mut basis_g = nalgebra::DMatrix::from_element(dim, g, Complex64::new(0.0, 0.0));
    for (j, &k) in ground_cols.iter().enumerate() {
        for r in 0..dim {
            basis_g[(r, j)] = eig.eigenvectors[(r, k)];
        }
    }
    let sd = shift.to_dense();
    let s_small = basis_g.adjoint() * &sd * &basis_g;
    let cos_part = (s_small.clone() + s_small.adjoint()).scale(0.5);
    let sin_part = (s_small.clone() - s_small.adjoint()).scale(0.5)
        * Complex64::new(0.0, -1.0);
    for alpha in [0.37, 0.61, 1.73] {
        let herm = &cos_part + sin_part.scale(alpha);
        let sub_eig = herm.symmetric_eigen();
        let mut kbest = 0;
        for k in 1..g {
            if sub_eig.eigenvalues[k] > sub_eig.eigenvalues[kbest] {
                kbest = k;
            }
        }
        let coeff = sub_eig.eigenvectors.column(kbest).into_owned();
        let full = &basis_g * coeff;
        let mut v: Vec<Complex64> = full.iter().copied().collect();
        let n = propagator::vec_norm(&v);
        if n == 0.0 {
            continue;
        }
        for z in &mut v {
            *z /= n;
        }
        // Verify the candidate: the shift must act as a pure phase.
        let sv = shift.matvec(&v);
        let phase = propagator::inner(&v, &sv);
        let resid: f64 = sv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - phase * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if resid < 1e-8 {
            // Fix the global phase: largest amplitude real positive.
            let mut pivot = 0;
            for (i, z) in v.iter().enumerate() {
                if z.norm_sqr() > v[pivot].norm_sqr() {
                    pivot = i;
                }
            }
            let ph = v[pivot] / Complex64::new(v[pivot].norm(), 0.0);
            for z in &mut v {
                *z /= ph;
            }
            return v;
        }
    }
    fallback
}

/// Parameters of the translation-averaged line-concentration state on a
/// two-dimensional torus: high-occupation vertical lines with spacing `ell`
/// separated by diluted low-energy strips.
#[derive(Debug, Clone, Serialize)]
pub struct BadStateParams {
    /// Torus side length.
    pub r_side: usize,
    /// Line spacing; the side must be a multiple of it.
    pub ell: usize,
    /// Exact diluted density after back-solving: `ell0 / (ell - 1)`.
    pub gamma0: f64,
    /// Line occupation from the density constraint.
    pub q: u32,
    /// Ground-strip width `ell - q`.
    pub ell0: usize,
}

impl BadStateParams {
    /// Derive the integer design from a target dilution density: the line
    /// occupation is rounded from the density constraint and the density is
    /// back-solved so the total particle number is exactly `side^2`.
    pub fn new(r_side: usize, ell: usize, gamma0_target: f64) -> Result<BadStateParams, StateError> {
        if ell < 3 {
            return Err(StateError::Infeasible(format!("line spacing must be >= 3, got {ell}")));
        }
        if !r_side.is_multiple_of(ell) {
            return Err(StateError::Infeasible(format!(
                "side {r_side} must be a multiple of the spacing {ell}"
            )));
        }
        if !(0.0 < gamma0_target && gamma0_target < 1.0) {
            return Err(StateError::Infeasible(format!(
                "dilution density must lie in (0,1), got {gamma0_target}"
            )));
        }
        let q = ((1.0 - gamma0_target) * (ell as f64 - 1.0) + 1.0).round() as i64;
        if q < 2 {
            return Err(StateError::Infeasible(format!(
                "designed line occupation {q} is below 2; lower the density"
            )));
        }
        let q = q as u32;
        if q as usize >= ell {
            return Err(StateError::Infeasible(format!(
                "designed line occupation {q} leaves no room for the strip"
            )));
        }
        let ell0 = ell - q as usize;
        let gamma0 = ell0 as f64 / (ell as f64 - 1.0);
        Ok(BadStateParams {
            r_side,
            ell,
            gamma0,
            q,
            ell0,
        })
    }

    /// Designed total particle number: exactly one boson per site.
    pub fn total_particles(&self) -> usize {
        self.r_side * self.r_side
    }
}

/// Translation-averaged concentration state: an ensemble of `ell` equally
/// weighted horizontal translates of (high-occupation lines) tensor
/// (diluted strip ground states) tensor (vacuum columns).
pub fn bad_state(
    basis: &FockBasis,
    lat: &Lattice,
    params: &BadStateParams,
    spec: &ModelSpec,
    settings: &PropagatorSettings,
    dense_cap: usize,
) -> Result<StateEnsemble, StateError> {
    if lat.dims() != 2 || lat.side() != params.r_side {
        return Err(StateError::Infeasible("lattice does not match the design".into()));
    }
    let n = lat.n_vertices();
    if basis.sector() != Sector::FixedN(n) {
        return Err(StateError::Infeasible(format!(
            "line-concentration state lives in FixedN({n})"
        )));
    }
    let side = params.r_side;
    let ell = params.ell;
    let periods = side / ell;

    // Strip ground state on a width-ell0 strip (computed once; every block
    // uses the same amplitudes, which keeps the state exactly ell-periodic).
    let strip_cols: Vec<usize> = (0..params.ell0).flat_map(|x| lat.column(x)).collect();
    let (sub_basis, strip_vec, _energy) =
        strip_ground_vector(lat, &strip_cols, spec, settings, dense_cap)?;

    // Base member: high lines at columns 0, ell, 2 ell, ...; in each period
    // the strip occupies columns 1..=ell0 and the rest stays empty.
    let mut base = vec![Complex64::new(0.0, 0.0); basis.dim()];
    let strip_width = params.ell0;
    let per_block: Vec<(usize, &[u32])> = sub_basis
        .states()
        .iter()
        .enumerate()
        .filter(|(i, _)| strip_vec[*i].norm_sqr() > 0.0)
        .map(|(i, s)| (i, s.as_slice()))
        .collect();

    // Enumerate tensor products over the `periods` independent blocks.
    let mut stack: Vec<(usize, Complex64, Vec<u32>)> = vec![(0, Complex64::new(1.0, 0.0), {
        let mut occ = vec![0u32; n];
        for s in 0..periods {
            for &v in &lat.column(s * ell) {
                occ[v] = params.q;
            }
        }
        occ
    })];
    while let Some((block, amp, occ)) = stack.pop() {
        if block == periods {
            let idx = basis.index_of(&occ).ok_or(StateError::NotInBasis)?;
            base[idx] += amp;
            continue;
        }
        for &(sub_idx, sub_occ) in &per_block {
            let mut occ2 = occ.clone();
            for w in 0..strip_width {
                let col = block * ell + 1 + w;
                for &v in &lat.column(col) {
                    let c = lat.coords(v);
                    occ2[v] = sub_occ[strip_local_index(lat, &strip_cols, w, c[1])];
                }
            }
            stack.push((block + 1, amp * strip_vec[sub_idx], occ2));
        }
    }

    let norm = propagator::vec_norm(&base);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(StateError::Infeasible(format!(
            "base member norm {norm} deviates from 1; strip embedding inconsistent"
        )));
    }
    for z in &mut base {
        *z /= norm;
    }

    // Horizontal translates; applying the lifted shift keeps the members
    // bitwise consistent, and shifting ell times returns the base exactly.
    let shift = lat.translation(&{
        let mut s = vec![0; lat.dims()];
        s[0] = 1;
        s
    });
    let weight = 1.0 / ell as f64;
    let mut members = Vec::with_capacity(ell);
    let mut current = base;
    for _ in 0..ell {
        members.push((weight, current.clone()));
        current = basis.translate_vector(&shift, &current);
    }
    Ok(StateEnsemble::new(members)?)
}

/// Index of the strip-local site at (column offset `w`, row `y`) in the
/// sub-basis built over `strip_cols` (which lists whole columns in order).
fn strip_local_index(lat: &Lattice, strip_cols: &[usize], w: usize, y: usize) -> usize {
    let target = {
        let mut c = vec![0; lat.dims()];
        c[0] = w;
        c[1] = y;
        lat.vertex(&c)
    };
    strip_cols
        .iter()
        .position(|&v| v == target)
        .expect("strip site present")
}

/// Per-site moment and tail measurements of a state.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub site: usize,
    pub p: f64,
    /// `tr(rho n_i^p)`.
    pub value: f64,
    /// `q -> tr(rho Pi_{n_i >= q})`.
    pub tail: Vec<(u32, f64)>,
    /// `tr(rho H) / |lattice|`.
    pub energy_density: f64,
}

/// Measure `tr(rho n_i^p)`, occupation tails, and the energy density for
/// every site.
pub fn measure_moments(
    rho: &StateEnsemble,
    basis: &FockBasis,
    h: &SparseOperator,
    p: f64,
    q_list: &[u32],
) -> Vec<MomentReport> {
    let energy = rho.expect(h).re / basis.n_sites() as f64;
    (0..basis.n_sites())
        .map(|site| {
            let mut value = 0.0;
            let mut tail = vec![0.0f64; q_list.len()];
            for (w, v) in rho.members() {
                for (idx, amp) in v.iter().enumerate() {
                    let pr = w * amp.norm_sqr();
                    if pr == 0.0 {
                        continue;
                    }
                    let occ = basis.state(idx)[site];
                    value += pr * if occ == 0 { 0.0 } else { (occ as f64).powf(p) };
                    for (k, &q) in q_list.iter().enumerate() {
                        if occ >= q {
                            tail[k] += pr;
                        }
                    }
                }
            }
            MomentReport {
                site,
                p,
                value,
                tail: q_list.iter().copied().zip(tail).collect(),
                energy_density: energy,
            }
        })
        .collect()
}

/// Exact multiset equality (up to per-member phases) between an ensemble and
/// its image under a lattice translation.
pub fn is_translation_invariant(
    rho: &StateEnsemble,
    basis: &FockBasis,
    t: &crate::lattice::Translation,
    tol: f64,
) -> bool {
    let moved: Vec<(f64, Vec<Complex64>)> = rho
        .members()
        .iter()
        .map(|(w, v)| (*w, basis.translate_vector(t, v)))
        .collect();
    let mut used = vec![false; rho.members().len()];
    for (w, mv) in &moved {
        let mut matched = false;
        for (k, (wo, vo)) in rho.members().iter().enumerate() {
            if used[k] || (w - wo).abs() > 1e-12 {
                continue;
            }
            let overlap = propagator::inner(vo, mv);
            if (overlap.norm() - 1.0).abs() <= tol {
                used[k] = true;
                matched = true;
                break;
            }
        }
        if !matched {
            return false;
        }
    }
    true
}

/// Shorthand for the interaction used in the line-concentration design:
/// `u (n - 1)^p`.
pub fn shifted_power_interaction(u: f64, p: f64) -> Interaction {
    Interaction::ShiftedPower { p, u, mu: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::assemble;
    use approx::assert_relative_eq;

    #[test]
    fn mott_states() {
        let lat = Lattice::torus(4, 1).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(4)).unwrap();
        let rho = mott(&basis, &[1, 1, 1, 1]).unwrap();
        let spec = ModelSpec::uniform(1.0, Interaction::Power { p: 4.0, u: 1.0, mu: 0.0 });
        let h = assemble(&basis, &lat, &spec).unwrap();
        for p in [1.0, 2.0, 3.5] {
            let rep = measure_moments(&rho, &basis, &h, p, &[0, 1, 2]);
            for r in &rep {
                assert_relative_eq!(r.value, 1.0, max_relative = 1e-14);
                assert_eq!(r.tail[0].1, 1.0); // tail(0) = 1
                assert_eq!(r.tail[2].1, 0.0); // tail(2) = 0
            }
        }
        // Pattern (2,0,...) has <n_0> = 2, and the tail at q = 2 is exactly 1
        // (the equality case of the moment comparison).
        let rho2 = mott(&basis, &[2, 0, 1, 1]).unwrap();
        let rep = measure_moments(&rho2, &basis, &h, 1.0, &[0, 1, 2, 3]);
        assert_relative_eq!(rep[0].value, 2.0, max_relative = 1e-14);
        assert_eq!(rep[0].tail[0].1, 1.0);
        assert_eq!(rep[0].tail[2].1, 1.0);
        // Tails are nonincreasing in q and start at 1.
        for r in &rep {
            assert_eq!(r.tail[0].1, 1.0);
            assert!(r.tail.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-15));
        }
        // Wrong total occupation is rejected.
        assert!(mott(&basis, &[1, 1, 1, 0]).is_err());
        // Translating a uniform Mott state returns the same ensemble.
        let t = &lat.translations()[0];
        assert!(is_translation_invariant(&rho, &basis, t, 1e-12));
    }

    #[test]
    fn strip_superposition_properties() {
        let lat = Lattice::torus(2, 2).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(4)).unwrap();
        let m = strip_superposition(&basis, &lat).unwrap();
        // Two configurations, each 1/sqrt(2).
        let v = &m.members()[0].1;
        let nonzero: Vec<f64> = v.iter().filter(|z| z.norm() > 0.0).map(|z| z.norm()).collect();
        assert_eq!(nonzero.len(), 2);
        for a in nonzero {
            assert_relative_eq!(a, std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-14);
        }

        // Interaction u (n-1)^p with even p: energy density exactly u; the
        // hopping expectation vanishes.
        let u = 0.8;
        let spec = ModelSpec::uniform(0.5, shifted_power_interaction(u, 2.0));
        let h = assemble(&basis, &lat, &spec).unwrap();
        assert_relative_eq!(m.expect(&h).re / 4.0, u, max_relative = 1e-12);
        let spec_hop = ModelSpec::uniform(0.5, Interaction::None);
        let h0 = assemble(&basis, &lat, &spec_hop).unwrap();
        assert!(m.expect(&h0).norm() < 1e-14);

        // Invariant under both generators.
        for t in lat.translations() {
            assert!(is_translation_invariant(&m, &basis, &t, 1e-12));
        }
    }

    #[test]
    fn strip_superposition_second_moment_oracle() {
        // Exact second moment of H in the strip superposition on the 2x2
        // torus, against an independent move count. With deduplicated edges
        // the occupied column carries one vertical edge (two 2->2 moves,
        // squared amplitude 6 each) and each occupied site one horizontal
        // 2->0 move (squared amplitude 2): |H_0 m|^2 = (12 + 4) J^2. The
        // interaction u (n-1)^2 contributes (u |L|)^2.
        let lat = Lattice::torus(2, 2).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(4)).unwrap();
        let m = strip_superposition(&basis, &lat).unwrap();
        let j = 0.7;
        let u = 0.3;
        let spec = ModelSpec::uniform(j, shifted_power_interaction(u, 2.0));
        let h = assemble(&basis, &lat, &spec).unwrap();
        let psi = &m.members()[0].1;
        let hpsi = h.matvec(psi);
        let h2: f64 = hpsi.iter().map(|z| z.norm_sqr()).sum();
        let expect = 16.0 * j * j + (4.0 * u) * (4.0 * u);
        assert_relative_eq!(h2, expect, max_relative = 1e-10);
    }

    #[test]
    fn pair_optimization() {
        // J = 0: no kinetic gain, lambda2 = 0, energy 0.
        let opt = optimize_pair_params(0.0, 1.0).unwrap();
        assert_relative_eq!(opt.lambda2, 0.0, epsilon = 1e-14);
        assert_relative_eq!(opt.energy_per_site, 0.0, epsilon = 1e-14);
        // U = 1, J = 1: (1 - sqrt(3))/2.
        let opt = optimize_pair_params(1.0, 1.0).unwrap();
        assert_relative_eq!(opt.energy_per_site, (1.0 - 3.0f64.sqrt()) / 2.0, epsilon = 1e-12);
        // Depends on |J| only.
        let neg = optimize_pair_params(-1.0, 1.0).unwrap();
        assert_relative_eq!(opt.energy_per_site, neg.energy_per_site, epsilon = 1e-15);
        // Constraint satisfied.
        assert_relative_eq!(
            opt.lambda1 * opt.lambda1 + 2.0 * opt.lambda2 * opt.lambda2,
            1.0,
            epsilon = 1e-12
        );
        assert!(optimize_pair_params(1.0, 0.0).is_err());
    }

    #[test]
    fn pair_optimization_grid_search_oracle() {
        // Golden-section refinement of a coarse grid over the constraint
        // angle, independent of the closed form.
        let objective = |theta: f64, t1: f64, u: f64| {
            let l1 = theta.cos();
            let l2 = theta.sin() / 2.0f64.sqrt();
            2.0 * u * (l2 * l2 - t1 * l1 * l2)
        };
        for (u, j) in [(1.0, 1.0), (0.5, 2.0), (2.0, 0.3)] {
            let t1 = j / u;
            let mut best_theta = 0.0;
            let mut best = f64::INFINITY;
            for k in 0..=4000 {
                let theta = std::f64::consts::PI * k as f64 / 4000.0;
                let v = objective(theta, t1, u);
                if v < best {
                    best = v;
                    best_theta = theta;
                }
            }
            // Golden-section around the grid minimum.
            let (mut a, mut b) = (best_theta - 1e-3, best_theta + 1e-3);
            let phi = (5.0f64.sqrt() - 1.0) / 2.0;
            for _ in 0..80 {
                let c = b - phi * (b - a);
                let d = a + phi * (b - a);
                if objective(c, t1, u) < objective(d, t1, u) {
                    b = d;
                } else {
                    a = c;
                }
            }
            let oracle = objective(0.5 * (a + b), t1, u);
            let closed = optimize_pair_params(j, u).unwrap().energy_per_site;
            assert_relative_eq!(oracle, closed, epsilon = 1e-9);
        }
    }

    #[test]
    fn low_energy_strip_zero_hopping() {
        // J = 0: the diluted state is a product Mott state; the strip energy
        // per site is w(1) = 0 for the shifted interaction.
        let lat = Lattice::torus(3, 2).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(3)).unwrap();
        let settings = PropagatorSettings::default();
        let u = 1.3;
        let spec0 = ModelSpec::uniform(0.0, shifted_power_interaction(u, 2.0));
        let (_state, report) = low_energy_strip(&basis, &lat, 1, &spec0, &settings, 100_000).unwrap();
        assert_relative_eq!(report.strip_energy_per_site, 0.0, epsilon = 1e-9);
        assert_relative_eq!(report.e2, u, epsilon = 1e-14);
    }

    #[test]
    fn low_energy_strip_variational_and_symmetric() {
        // Even strip width so the pair trial state tiles it: the measured
        // ground energy per site must not exceed the optimized pair value.
        let lat = Lattice::torus(3, 2).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(6)).unwrap();
        let settings = PropagatorSettings::default();
        let (j, u) = (0.9, 1.3);
        let spec = ModelSpec::uniform(j, shifted_power_interaction(u, 2.0));
        let (state, report) = low_energy_strip(&basis, &lat, 2, &spec, &settings, 100_000).unwrap();
        let pair = optimize_pair_params(j, u).unwrap();
        assert!(
            report.strip_energy_per_site <= pair.energy_per_site + 1e-9,
            "strip {} vs pair {}",
            report.strip_energy_per_site,
            pair.energy_per_site
        );
        // Vertical-translation invariance of all single-site moments.
        let h = assemble(&basis, &lat, &spec).unwrap();
        let reports = measure_moments(&state, &basis, &h, 2.0, &[1, 2]);
        for x in 0..3 {
            let col = lat.column(x);
            let base = reports[col[0]].value;
            for &site in &col {
                assert_relative_eq!(reports[site].value, base, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn bad_state_design() {
        let params = BadStateParams::new(3, 3, 0.5).unwrap();
        assert_eq!(params.q, 2);
        assert_eq!(params.ell0, 1);
        assert_relative_eq!(params.gamma0, 0.5);
        assert_eq!(params.total_particles(), 9);
        assert!(BadStateParams::new(4, 3, 0.5).is_err()); // 4 not a multiple of 3
        assert!(BadStateParams::new(4, 2, 0.5).is_err()); // spacing too small
    }

    #[test]
    fn bad_state_construction() {
        let lat = Lattice::torus(3, 2).unwrap();
        let basis = FockBasis::build(&lat, Sector::FixedN(9)).unwrap();
        let params = BadStateParams::new(3, 3, 0.5).unwrap();
        let spec = ModelSpec::uniform(0.6, shifted_power_interaction(1.0, 2.0));
        let settings = PropagatorSettings::default();
        let rho = bad_state(&basis, &lat, &params, &spec, &settings, 100_000).unwrap();
        assert_eq!(rho.members().len(), 3);

        // Exactly invariant under the horizontal generator; vertical up to phase.
        for t in lat.translations() {
            assert!(is_translation_invariant(&rho, &basis, &t, 1e-9));
        }

        // Tail at the designed q is at least 1/ell at every site.
        let h = assemble(&basis, &lat, &spec).unwrap();
        let reports = measure_moments(&rho, &basis, &h, 2.0, &[params.q]);
        for r in &reports {
            assert!(
                r.tail[0].1 >= 1.0 / params.ell as f64 - 1e-12,
                "site {} tail {}",
                r.site,
                r.tail[0].1
            );
        }
    }
}
