//! Occupation-number bases and elementary bosonic operators.
//!
//! A [`FockBasis`] enumerates occupation configurations of a lattice either
//! in a fixed total-particle sector or with a per-site cap, in global
//! lexicographic order so every run enumerates identically. Operators are
//! carried by [`SparseOperator`], a canonical CSR matrix over the basis.

use crate::lattice::{Lattice, Translation};
use crate::par;
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("basis would have {0} states, above the hard cap of {1}")]
    BasisTooLarge(u128, usize),
    #[error("operator acts outside its declared support (entry {row} -> {col} changes site {site})")]
    SupportViolation { row: usize, col: usize, site: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("{0}")]
    Invalid(String),
}

/// Which slice of Fock space a basis enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    /// All configurations with exactly `N` particles in total.
    FixedN(usize),
    /// All configurations with at most `n_max` particles on each site.
    Capped(usize),
}

/// Default cap on the number of basis states.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

/// An indexed enumeration of occupation-number configurations.
#[derive(Debug, Clone)]
pub struct FockBasis {
    n_sites: usize,
    sector: Sector,
    states: Vec<Vec<u32>>,
}

impl FockBasis {
    /// Enumerate the basis for `lat` in the given sector.
    pub fn build(lat: &Lattice, sector: Sector) -> Result<FockBasis, FockError> {
        Self::build_sites(lat.n_vertices(), sector, DEFAULT_STATE_CAP)
    }

    /// Enumerate a basis over `n_sites` abstract sites (used for subsystem
    /// constructions) with an explicit state-count cap.
    pub fn build_sites(n_sites: usize, sector: Sector, cap: usize) -> Result<FockBasis, FockError> {
        let count = Self::count(n_sites, sector);
        if count > cap as u128 {
            return Err(FockError::BasisTooLarge(count, cap));
        }
        let mut states = Vec::with_capacity(count as usize);
        match sector {
            Sector::FixedN(n) => {
                let mut occ = vec![0u32; n_sites];
                enumerate_fixed_n(&mut occ, 0, n as u32, &mut states);
            }
            Sector::Capped(n_max) => {
                let mut occ = vec![0u32; n_sites];
                enumerate_capped(&mut occ, 0, n_max as u32, &mut states);
            }
        }
        debug_assert_eq!(states.len() as u128, count);
        debug_assert!(states.windows(2).all(|w| w[0] < w[1]));
        Ok(FockBasis {
            n_sites,
            sector,
            states,
        })
    }

    fn count(n_sites: usize, sector: Sector) -> u128 {
        match sector {
            Sector::FixedN(n) => binomial(n as u128 + n_sites as u128 - 1, n_sites as u128 - 1),
            Sector::Capped(n_max) => (n_max as u128 + 1).pow(n_sites as u32),
        }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    /// Occupation vector of basis state `idx`.
    pub fn state(&self, idx: usize) -> &[u32] {
        &self.states[idx]
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    /// Index of an occupation vector, if it lies in the basis. States are
    /// stored in lexicographic order, so a binary search suffices.
    pub fn index_of(&self, occ: &[u32]) -> Option<usize> {
        self.states
            .binary_search_by(|s| s.as_slice().cmp(occ))
            .ok()
    }

    /// Total particle number of basis state `idx`.
    pub fn total_occupation(&self, idx: usize) -> u32 {
        self.states[idx].iter().sum()
    }

    /// Diagonal operator from a per-configuration weight.
    pub fn diagonal<F>(&self, f: F) -> SparseOperator
    where
        F: Fn(&[u32]) -> f64 + Sync + Send,
    {
        let rows = par::map_indexed(self.dim(), |i| {
            let v = f(&self.states[i]);
            if v == 0.0 {
                Vec::new()
            } else {
                vec![(i, Complex64::new(v, 0.0))]
            }
        });
        SparseOperator::from_rows(self.dim(), rows, true)
    }

    /// `n_i^p` as a diagonal operator; `p` may be any positive real and
    /// `0^p = 0`.
    pub fn number_operator_pow(&self, site: usize, p: f64) -> SparseOperator {
        self.diagonal(|occ| occ_pow(occ[site], p))
    }

    /// `n_i` as a diagonal operator.
    pub fn number_operator(&self, site: usize) -> SparseOperator {
        self.number_operator_pow(site, 1.0)
    }

    /// Total particle number on a set of sites.
    pub fn number_on(&self, sites: &[usize]) -> SparseOperator {
        self.diagonal(|occ| sites.iter().map(|&i| occ[i] as f64).sum())
    }

    /// One-directional transfer `b_i^dagger b_j`, with matrix elements
    /// `sqrt((n_i + 1) n_j)`. In capped bases, transitions that exceed the
    /// cap are dropped.
    pub fn transfer_operator(&self, i: usize, j: usize) -> SparseOperator {
        assert_ne!(i, j, "transfer requires distinct sites");
        let rows = par::map_indexed(self.dim(), |row| {
            // Row entries of b_i^dagger b_j: the column state has one more
            // particle at j and one fewer at i than the row state.
            let occ = &self.states[row];
            if occ[i] == 0 {
                return Vec::new();
            }
            let mut src = occ.clone();
            src[i] -= 1;
            src[j] += 1;
            if let Sector::Capped(n_max) = self.sector {
                if src[j] > n_max as u32 {
                    return Vec::new();
                }
            }
            match self.index_of(&src) {
                Some(col) => {
                    let amp = ((occ[i] as f64) * (src[j] as f64)).sqrt();
                    vec![(col, Complex64::new(amp, 0.0))]
                }
                None => Vec::new(),
            }
        });
        SparseOperator::from_rows(self.dim(), rows, false)
    }

    /// Hermitian hopping term `b_i b_j^dagger + b_i^dagger b_j`.
    pub fn hopping_operator(&self, i: usize, j: usize) -> SparseOperator {
        let mut h = self
            .transfer_operator(i, j)
            .add(&self.transfer_operator(j, i));
        h.hermitian = true;
        h
    }

    /// Single-site projector `Pi_{n_i <= q}`.
    pub fn projector_le(&self, site: usize, q: u32) -> SparseOperator {
        self.diagonal(|occ| if occ[site] <= q { 1.0 } else { 0.0 })
    }

    /// Single-site projector `Pi_{n_i = m}`.
    pub fn projector_eq(&self, site: usize, m: u32) -> SparseOperator {
        self.diagonal(|occ| if occ[site] == m { 1.0 } else { 0.0 })
    }

    /// Single-site projector `Pi_{n_i >= q}`.
    pub fn projector_ge(&self, site: usize, q: u32) -> SparseOperator {
        self.diagonal(|occ| if occ[site] >= q { 1.0 } else { 0.0 })
    }

    /// Region projector: product of `Pi_{n_i <= q}` over `i` in `region`.
    pub fn projector_region(&self, region: &[usize], q: u32) -> SparseOperator {
        self.diagonal(|occ| {
            if region.iter().all(|&i| occ[i] <= q) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Diagonal weighted number operator `sum_j nu_j n_j`.
    pub fn weighted_number_operator(&self, weights: &[f64]) -> SparseOperator {
        assert_eq!(weights.len(), self.n_sites);
        assert!(weights.iter().all(|&w| w >= 0.0), "weights must be nonnegative");
        self.diagonal(|occ| {
            occ.iter()
                .zip(weights)
                .map(|(&n, &w)| w * n as f64)
                .sum()
        })
    }

    /// Distance-decay weighted number operator centered at `site`, with
    /// weights `exp(-0.75 * dist(site, j))`.
    pub fn decay_weighted_number_operator(&self, lat: &Lattice, site: usize) -> SparseOperator {
        let weights: Vec<f64> = (0..self.n_sites)
            .map(|j| (-0.75 * lat.dist(site, j) as f64).exp())
            .collect();
        self.weighted_number_operator(&weights)
    }

    /// Fock-space lift of a lattice translation: the permutation matrix
    /// sending configuration `w` to `w . t^{-1}`.
    pub fn lift_translation(&self, t: &Translation) -> SparseOperator {
        let rows = par::map_indexed(self.dim(), |row| {
            // Entry <row| Gamma |col> = 1 where row = col . t^{-1}, i.e.
            // col(v) = row(t(v)).
            let occ = &self.states[row];
            let mut col_occ = vec![0u32; self.n_sites];
            for v in 0..self.n_sites {
                col_occ[v] = occ[t.apply(v)];
            }
            match self.index_of(&col_occ) {
                Some(col) => vec![(col, Complex64::new(1.0, 0.0))],
                None => Vec::new(),
            }
        });
        SparseOperator::from_rows(self.dim(), rows, false)
    }

    /// Apply the lifted translation directly to an amplitude vector.
    pub fn translate_vector(&self, t: &Translation, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (idx, amp) in psi.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let occ = &self.states[idx];
            let tinv = t.inverse();
            let mut dst = vec![0u32; self.n_sites];
            for v in 0..self.n_sites {
                dst[v] = occ[tinv.apply(v)];
            }
            let j = self
                .index_of(&dst)
                .expect("translation must stay inside the sector");
            out[j] = *amp;
        }
        out
    }

    /// Smallest `q0` such that `op`, supported on `x0`, changes the particle
    /// number on `x0` by at most `q0`. Returns an error when `op` has an
    /// entry connecting configurations that differ outside `x0`.
    pub fn observable_block_width(
        &self,
        op: &SparseOperator,
        x0: &[usize],
    ) -> Result<usize, FockError> {
        let mut on_x0 = vec![false; self.n_sites];
        for &v in x0 {
            on_x0[v] = true;
        }
        let tol = 1e-14 * op.max_abs().max(1.0);
        let mut q0 = 0usize;
        for (row, col, val) in op.iter() {
            if val.norm() <= tol {
                continue;
            }
            let (a, b) = (&self.states[row], &self.states[col]);
            for site in 0..self.n_sites {
                if !on_x0[site] && a[site] != b[site] {
                    return Err(FockError::SupportViolation { row, col, site });
                }
            }
            let na: u32 = x0.iter().map(|&i| a[i]).sum();
            let nb: u32 = x0.iter().map(|&i| b[i]).sum();
            q0 = q0.max(na.abs_diff(nb) as usize);
        }
        Ok(q0)
    }
}

fn occ_pow(n: u32, p: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (n as f64).powf(p)
    }
}

fn enumerate_fixed_n(occ: &mut Vec<u32>, site: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
    if site + 1 == occ.len() {
        occ[site] = remaining;
        out.push(occ.clone());
        return;
    }
    for k in 0..=remaining {
        occ[site] = k;
        enumerate_fixed_n(occ, site + 1, remaining - k, out);
    }
    occ[site] = 0;
}

fn enumerate_capped(occ: &mut Vec<u32>, site: usize, n_max: u32, out: &mut Vec<Vec<u32>>) {
    if site == occ.len() {
        out.push(occ.clone());
        return;
    }
    for k in 0..=n_max {
        occ[site] = k;
        enumerate_capped(occ, site + 1, n_max, out);
    }
    occ[site] = 0;
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Sparse complex matrix in CSR form with canonically ordered entries, the
/// carrier for Hamiltonians, projectors, and observables.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Assemble from per-row entry lists; entries within a row are sorted and
    /// duplicates merged, so the stored form is scheduler-independent.
    pub fn from_rows(
        dim: usize,
        rows: Vec<Vec<(usize, Complex64)>>,
        hermitian: bool,
    ) -> SparseOperator {
        assert_eq!(rows.len(), dim);
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                if v != Complex64::new(0.0, 0.0) {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseOperator {
            dim,
            row_ptr,
            cols,
            vals,
            hermitian,
        }
    }

    pub fn from_triplets(
        dim: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
        hermitian: bool,
    ) -> SparseOperator {
        let mut rows = vec![Vec::new(); dim];
        for (r, c, v) in triplets {
            rows[r].push((c, v));
        }
        SparseOperator::from_rows(dim, rows, hermitian)
    }

    pub fn zero(dim: usize) -> SparseOperator {
        SparseOperator::from_rows(dim, vec![Vec::new(); dim], true)
    }

    pub fn identity(dim: usize) -> SparseOperator {
        SparseOperator::from_rows(
            dim,
            (0..dim).map(|i| vec![(i, Complex64::new(1.0, 0.0))]).collect(),
            true,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn hermitian_flag(&self) -> bool {
        self.hermitian
    }

    /// Iterate entries in canonical (row, col) order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn row(&self, r: usize) -> (&[usize], &[Complex64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// `y = A x`. Sequential on purpose: propagations parallelize over
    /// ensemble members and grid points, and at desk-scale dimensions a
    /// per-row parallel product loses to the plain loop.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim);
        par::map_indexed_seq(self.dim, |r| {
            let (cols, vals) = self.row(r);
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            acc
        })
    }

    /// Row-parallel matvec, kept for the benchmark comparison.
    pub fn matvec_par(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim);
        par::map_indexed(self.dim, |r| {
            let (cols, vals) = self.row(r);
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            acc
        })
    }

    pub fn scale(&self, s: Complex64) -> SparseOperator {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= s;
        }
        out.hermitian = self.hermitian && s.im == 0.0;
        out
    }

    pub fn add(&self, other: &SparseOperator) -> SparseOperator {
        self.linear_combination(other, Complex64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &SparseOperator) -> SparseOperator {
        self.linear_combination(other, Complex64::new(-1.0, 0.0))
    }

    fn linear_combination(&self, other: &SparseOperator, c: Complex64) -> SparseOperator {
        assert_eq!(self.dim, other.dim);
        let rows: Vec<Vec<(usize, Complex64)>> = (0..self.dim)
            .map(|r| {
                let (c1, v1) = self.row(r);
                let (c2, v2) = other.row(r);
                let mut row: Vec<(usize, Complex64)> =
                    c1.iter().zip(v1).map(|(&j, &v)| (j, v)).collect();
                row.extend(c2.iter().zip(v2).map(|(&j, &v)| (j, c * v)));
                row
            })
            .collect();
        SparseOperator::from_rows(
            self.dim,
            rows,
            self.hermitian && other.hermitian && c.im == 0.0,
        )
    }

    /// Sparse-sparse product `A B`.
    pub fn matmul(&self, other: &SparseOperator) -> SparseOperator {
        assert_eq!(self.dim, other.dim);
        let rows = par::map_indexed(self.dim, |r| {
            let (cols, vals) = self.row(r);
            let mut acc: std::collections::BTreeMap<usize, Complex64> =
                std::collections::BTreeMap::new();
            for (k, v) in cols.iter().zip(vals) {
                let (bc, bv) = other.row(*k);
                for (j, w) in bc.iter().zip(bv) {
                    *acc.entry(*j).or_insert(Complex64::new(0.0, 0.0)) += v * w;
                }
            }
            acc.into_iter().collect::<Vec<_>>()
        });
        SparseOperator::from_rows(self.dim, rows, false)
    }

    pub fn adjoint(&self) -> SparseOperator {
        let triplets: Vec<(usize, usize, Complex64)> =
            self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        SparseOperator::from_triplets(self.dim, triplets, self.hermitian)
    }

    /// Commutator `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &SparseOperator) -> SparseOperator {
        self.matmul(other).sub(&other.matmul(self))
    }

    /// Entrywise check that the matrix equals its conjugate transpose.
    pub fn is_hermitian_exact(&self) -> bool {
        let adj = self.adjoint();
        self.dim == adj.dim
            && self.row_ptr == adj.row_ptr
            && self.cols == adj.cols
            && self.vals == adj.vals
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Inner product `<x, A y>` (conjugate-linear in `x`).
    pub fn expectation(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::from_element(self.dim, self.dim, Complex64::new(0.0, 0.0));
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    /// Keep only entries whose row and column both satisfy `keep`; this is
    /// conjugation by the diagonal 0/1 projector `keep`.
    pub fn project(&self, keep: impl Fn(usize) -> bool) -> SparseOperator {
        let rows: Vec<Vec<(usize, Complex64)>> = (0..self.dim)
            .map(|r| {
                if !keep(r) {
                    return Vec::new();
                }
                let (cols, vals) = self.row(r);
                cols.iter()
                    .zip(vals)
                    .filter(|(c, _)| keep(**c))
                    .map(|(&c, &v)| (c, v))
                    .collect()
            })
            .collect();
        SparseOperator::from_rows(self.dim, rows, self.hermitian)
    }

    /// Dump entries as "row col re im" lines in canonical order.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.iter() {
            s.push_str(&format!("{} {} {:.16e} {:.16e}\n", r, c, v.re, v.im));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ring(n: usize) -> Lattice {
        Lattice::torus(n, 1).unwrap()
    }

    #[test]
    fn basis_counts() {
        let b = FockBasis::build_sites(3, Sector::FixedN(2), 1000).unwrap();
        assert_eq!(b.dim(), 6); // stars and bars: C(4, 2)
        let b = FockBasis::build_sites(2, Sector::Capped(2), 1000).unwrap();
        assert_eq!(b.dim(), 9);
        let b = FockBasis::build_sites(1, Sector::FixedN(5), 1000).unwrap();
        assert_eq!(b.dim(), 1);
    }

    #[test]
    fn basis_cap_enforced() {
        let err = FockBasis::build_sites(3, Sector::FixedN(2), 5).unwrap_err();
        assert_eq!(err, FockError::BasisTooLarge(6, 5));
    }

    #[test]
    fn lexicographic_order_and_roundtrip() {
        let b = FockBasis::build_sites(3, Sector::FixedN(2), 1000).unwrap();
        let expect: Vec<Vec<u32>> = vec![
            vec![0, 0, 2],
            vec![0, 1, 1],
            vec![0, 2, 0],
            vec![1, 0, 1],
            vec![1, 1, 0],
            vec![2, 0, 0],
        ];
        assert_eq!(b.states(), expect.as_slice());
        for (i, s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
        }
        assert_eq!(b.index_of(&[1, 1, 1]), None);
    }

    #[test]
    fn number_operator_powers() {
        let b = FockBasis::build_sites(2, Sector::FixedN(3), 1000).unwrap();
        let idx = b.index_of(&[2, 1]).unwrap();
        let n0 = b.number_operator(0);
        assert_eq!(n0.row(idx).1[0].re, 2.0);
        let n0_4 = b.number_operator_pow(0, 4.0);
        let idx3 = b.index_of(&[3, 0]).unwrap();
        assert_eq!(n0_4.row(idx3).1[0].re, 81.0);
        let b4 = FockBasis::build_sites(1, Sector::FixedN(4), 10).unwrap();
        let frac = b4.number_operator_pow(0, 2.5);
        assert_relative_eq!(frac.row(0).1[0].re, 32.0, max_relative = 1e-15);
    }

    #[test]
    fn hopping_matrix_elements() {
        let b = FockBasis::build_sites(2, Sector::FixedN(2), 1000).unwrap();
        let t = b.transfer_operator(0, 1); // b_0^dagger b_1
        let from = b.index_of(&[0, 2]).unwrap();
        let to = b.index_of(&[1, 1]).unwrap();
        let dense = t.to_dense();
        assert_relative_eq!(dense[(to, from)].re, 2.0_f64.sqrt(), max_relative = 1e-15);
        let from = b.index_of(&[1, 1]).unwrap();
        let to = b.index_of(&[2, 0]).unwrap();
        assert_relative_eq!(dense[(to, from)].re, 2.0_f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn hopping_is_hermitian_and_number_conserving() {
        let lat = ring(4);
        let b = FockBasis::build(&lat, Sector::FixedN(3)).unwrap();
        let h = b.hopping_operator(0, 1);
        assert!(h.is_hermitian_exact());
        // [hop, N] vanishes entrywise in a fixed-N sector.
        let n_total = b.number_on(&(0..4).collect::<Vec<_>>());
        let comm = h.commutator(&n_total);
        assert_eq!(comm.nnz(), 0);

        // Two sites, one particle: hopping is the off-diagonal unit.
        let b2 = FockBasis::build_sites(2, Sector::FixedN(1), 10).unwrap();
        let h2 = b2.hopping_operator(0, 1).to_dense();
        assert_eq!(h2[(0, 1)].re, 1.0);
        assert_eq!(h2[(1, 0)].re, 1.0);
        assert_eq!(h2[(0, 0)].re, 0.0);
    }

    #[test]
    fn capped_hopping_stays_hermitian() {
        let b = FockBasis::build_sites(2, Sector::Capped(2), 100).unwrap();
        let h = b.hopping_operator(0, 1);
        assert!(h.is_hermitian_exact());
        // No transition may leave the capped basis: (2,1) -> (3,0) dropped.
        let from = b.index_of(&[2, 1]).unwrap();
        let dense = h.to_dense();
        for r in 0..b.dim() {
            if dense[(r, from)].norm() > 0.0 {
                assert!(b.state(r).iter().all(|&n| n <= 2));
            }
        }
    }

    #[test]
    fn projectors() {
        let b = FockBasis::build_sites(2, Sector::FixedN(2), 100).unwrap();
        let p = b.projector_le(0, 1);
        let idx20 = b.index_of(&[2, 0]).unwrap();
        assert_eq!(p.to_dense()[(idx20, idx20)].re, 0.0);
        // Idempotent.
        let p2 = p.matmul(&p);
        assert_eq!(p2.sub(&p).nnz(), 0);
        // q >= N makes the region projector the identity.
        let pr = b.projector_region(&[0, 1], 2);
        assert_eq!(pr.sub(&SparseOperator::identity(b.dim())).nnz(), 0);
    }

    #[test]
    fn weighted_number_operator_values() {
        let lat = ring(3);
        let b = FockBasis::build(&lat, Sector::FixedN(3)).unwrap();
        let d0 = b.decay_weighted_number_operator(&lat, 0);
        let idx = b.index_of(&[1, 1, 1]).unwrap();
        let expect = 1.0 + 2.0 * (-0.75f64).exp();
        assert_relative_eq!(d0.to_dense()[(idx, idx)].re, expect, max_relative = 1e-15);

        // Unit weights give the total number operator.
        let all = b.weighted_number_operator(&[1.0, 1.0, 1.0]);
        let n_tot = b.number_on(&[0, 1, 2]);
        assert_eq!(all.sub(&n_tot).nnz(), 0);

        // Indicator weights give n_X.
        let ind = b.weighted_number_operator(&[1.0, 0.0, 1.0]);
        let nx = b.number_on(&[0, 2]);
        assert_eq!(ind.sub(&nx).nnz(), 0);
    }

    #[test]
    fn translation_lift() {
        let lat = ring(3);
        let b = FockBasis::build(&lat, Sector::FixedN(3)).unwrap();
        let t = &lat.translations()[0];
        let g = b.lift_translation(t);
        // |2,0,1> maps to |1,2,0>.
        let src = b.index_of(&[2, 0, 1]).unwrap();
        let dst = b.index_of(&[1, 2, 0]).unwrap();
        assert_eq!(g.to_dense()[(dst, src)].re, 1.0);

        // Gamma(T) Gamma(T^-1) = identity.
        let ginv = b.lift_translation(&t.inverse());
        let prod = g.matmul(&ginv);
        assert_eq!(prod.sub(&SparseOperator::identity(b.dim())).nnz(), 0);

        // Gamma(T) commutes with the total number operator.
        let n_tot = b.number_on(&[0, 1, 2]);
        assert_eq!(g.commutator(&n_tot).nnz(), 0);

        // translate_vector agrees with the matrix action.
        let mut psi = vec![Complex64::new(0.0, 0.0); b.dim()];
        psi[src] = Complex64::new(1.0, 0.0);
        let moved = b.translate_vector(t, &psi);
        assert_eq!(moved[dst].re, 1.0);
    }

    #[test]
    fn observable_block_width_examples() {
        let lat = ring(3);
        let b = FockBasis::build(&lat, Sector::FixedN(2)).unwrap();
        let proj = b.projector_eq(0, 0);
        assert_eq!(b.observable_block_width(&proj, &[0]).unwrap(), 0);
        let n0 = b.number_operator(0);
        assert_eq!(b.observable_block_width(&n0, &[0]).unwrap(), 0);

        // b^dagger + b on a capped basis changes the number by one.
        let bc = FockBasis::build_sites(2, Sector::Capped(2), 100).unwrap();
        let mut trip = Vec::new();
        for (i, s) in bc.states().iter().enumerate() {
            if s[0] < 2 {
                let mut up = s.clone();
                up[0] += 1;
                let j = bc.index_of(&up).unwrap();
                let amp = ((s[0] + 1) as f64).sqrt();
                trip.push((j, i, Complex64::new(amp, 0.0)));
                trip.push((i, j, Complex64::new(amp, 0.0)));
            }
        }
        let x = SparseOperator::from_triplets(bc.dim(), trip, true);
        assert_eq!(bc.observable_block_width(&x, &[0]).unwrap(), 1);

        // Support violation: n_1 declared as supported on {0}.
        let n1 = b.number_operator(1);
        // Diagonal operators never violate support; use hopping instead.
        let hop = b.hopping_operator(0, 1);
        assert!(b.observable_block_width(&hop, &[0]).is_err());
        assert_eq!(b.observable_block_width(&n1, &[1]).unwrap(), 0);
    }

    #[test]
    fn hopping_magnitude_bound() {
        // |b_i b_j^dagger| = sqrt(n_i (n_j + 1)) <= n_i + n_j as operators.
        let b = FockBasis::build_sites(2, Sector::Capped(5), 100).unwrap();
        let m = b.transfer_operator(1, 0); // b_1^dagger b_0 = (b_0 b_1^dagger)^dagger... direction irrelevant for |M|
        let mtm = m.adjoint().matmul(&m);
        // M^dagger M is diagonal with entries n_0 (n_1 + 1).
        for (r, c, v) in mtm.iter() {
            assert_eq!(r, c);
            let occ = b.state(r);
            assert_relative_eq!(v.re, (occ[0] as f64) * (occ[1] as f64 + 1.0), max_relative = 1e-12);
        }
        for (i, s) in b.states().iter().enumerate() {
            let abs_m = ((s[0] as f64) * (s[1] as f64 + 1.0)).sqrt();
            let bound = s[0] as f64 + s[1] as f64;
            assert!(bound - abs_m >= -1e-12, "state {i}");
        }
    }

    #[test]
    fn sparse_algebra_roundtrip() {
        let b = FockBasis::build_sites(3, Sector::FixedN(2), 100).unwrap();
        let h = b.hopping_operator(0, 1).add(&b.hopping_operator(1, 2));
        let d = h.to_dense();
        // Dense and sparse matvec agree.
        let x: Vec<Complex64> = (0..b.dim())
            .map(|i| Complex64::new(i as f64 + 0.5, 0.25 * i as f64))
            .collect();
        let y_sparse = h.matvec(&x);
        let xv = nalgebra::DVector::from_column_slice(&x);
        let y_dense = &d * xv;
        for i in 0..b.dim() {
            assert_relative_eq!(y_sparse[i].re, y_dense[i].re, epsilon = 1e-12);
            assert_relative_eq!(y_sparse[i].im, y_dense[i].im, epsilon = 1e-12);
        }
        assert_eq!(h.matvec_par(&x), y_sparse);
    }

    #[test]
    fn coordinate_dump_is_sorted() {
        let b = FockBasis::build_sites(2, Sector::FixedN(1), 10).unwrap();
        let h = b.hopping_operator(0, 1);
        let text = h.to_coordinate_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("0 1 "));
        assert!(lines[1].starts_with("1 0 "));
    }
}
