//! Assembly of full, subsystem, boundary, periodized, and projector-truncated
//! Hamiltonians.
//!
//! The model is `H = H_0 + W` with hopping
//! `H_0 = sum_{edges} J_e (b_i b_j^dagger + b_i^dagger b_j)` (each unordered
//! edge counted once) and an occupation-diagonal interaction
//! `W = sum_i w(n_i)` plus an optional finite-range set-term hook.

use crate::fock::{FockBasis, Sector, SparseOperator};
use crate::lattice::Lattice;
use crate::par;
use num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("basis has {0} sites but lattice has {1} vertices")]
    BasisLatticeMismatch(usize, usize),
    #[error("interaction table of length {0} cannot evaluate occupation {1}")]
    TableTooShort(usize, u32),
    #[error("set term on {sites:?} has diameter {diam} exceeding the declared range {range}")]
    RangeViolation { sites: Vec<usize>, diam: usize, range: usize },
    #[error("{0}")]
    Invalid(String),
}

/// On-site interaction presets. All variants depend only on the occupation.
#[derive(Debug, Clone)]
pub enum Interaction {
    /// `w(n) = u * n^p - mu * n`.
    Power { p: f64, u: f64, mu: f64 },
    /// `w(n) = u * (n - 1)^p - mu * n`.
    ShiftedPower { p: f64, u: f64, mu: f64 },
    /// `w(n) = table[n]`; occupations beyond the table are an error.
    Table(Vec<f64>),
    /// No on-site term.
    None,
}

impl Interaction {
    pub fn eval(&self, n: u32) -> Result<f64, ModelError> {
        Ok(match self {
            Interaction::Power { p, u, mu } => {
                let np = if n == 0 { 0.0 } else { (n as f64).powf(*p) };
                u * np - mu * n as f64
            }
            Interaction::ShiftedPower { p, u, mu } => {
                let base = n as f64 - 1.0;
                // Signed power: integer p keeps the sign convention of
                // (n-1)^p for n = 0.
                let shifted = if base == 0.0 {
                    0.0
                } else if p.fract() == 0.0 {
                    base.powi(*p as i32)
                } else {
                    base.abs().powf(*p)
                };
                u * shifted - mu * n as f64
            }
            Interaction::Table(t) => *t
                .get(n as usize)
                .ok_or(ModelError::TableTooShort(t.len(), n))?,
            Interaction::None => 0.0,
        })
    }
}

/// Occupation-dependent weight of a finite-range set term.
pub type SetWeight = Arc<dyn Fn(&[u32]) -> f64 + Send + Sync>;

/// Extension hook for general finite-range terms `w_X({n_i})`.
#[derive(Clone)]
pub struct SetTerm {
    pub sites: Vec<usize>,
    pub weight: SetWeight,
}

impl std::fmt::Debug for SetTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SetTerm").field("sites", &self.sites).finish()
    }
}

/// Hopping coefficients and interaction of a Bose-Hubbard-type model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// Uniform hopping coefficient applied to every edge.
    pub hopping: f64,
    /// Per-edge overrides, keyed by the canonical `(min, max)` pair.
    pub edge_overrides: Vec<((usize, usize), f64)>,
    pub interaction: Interaction,
    /// Interaction range `k`; on-site terms have `k = 1`.
    pub range: usize,
    /// Optional finite-range terms; every experiment ships with this empty.
    pub set_terms: Vec<SetTerm>,
}

impl ModelSpec {
    pub fn uniform(hopping: f64, interaction: Interaction) -> ModelSpec {
        ModelSpec {
            hopping,
            edge_overrides: Vec::new(),
            interaction,
            range: 1,
            set_terms: Vec::new(),
        }
    }

    pub fn edge_coefficient(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.edge_overrides
            .iter()
            .find(|(e, _)| *e == key)
            .map(|(_, v)| *v)
            .unwrap_or(self.hopping)
    }

    /// Largest hopping magnitude over the given edges.
    pub fn j_bar(&self, edges: &[(usize, usize)]) -> f64 {
        edges
            .iter()
            .map(|&(i, j)| self.edge_coefficient(i, j).abs())
            .fold(0.0, f64::max)
    }
}

/// Subsystem Hamiltonians `(H_X, H_{0,X}, W_X)` for a vertex set `X`.
pub struct Subsystem {
    pub full: SparseOperator,
    pub hopping: SparseOperator,
    pub interaction: SparseOperator,
}

/// Assemble the full Hamiltonian on the basis.
pub fn assemble(
    basis: &FockBasis,
    lat: &Lattice,
    spec: &ModelSpec,
) -> Result<SparseOperator, ModelError> {
    assemble_on_edges(basis, lat, spec, lat.edges(), None, true)
}

/// Sequential twin of [`assemble`] for the benchmark suite.
pub fn assemble_sequential(
    basis: &FockBasis,
    lat: &Lattice,
    spec: &ModelSpec,
) -> Result<SparseOperator, ModelError> {
    build(basis, lat, spec, lat.edges(), None, true, false)
}

/// Subsystem Hamiltonians for `X`: hopping restricted to edges inside `X`,
/// interaction restricted to sites (and set terms) inside `X`. With
/// `periodic_wrap` the edges that close an axis-0 strip of consecutive
/// columns into a cylinder are added.
pub fn subsystem(
    basis: &FockBasis,
    lat: &Lattice,
    spec: &ModelSpec,
    region: &[usize],
    periodic_wrap: bool,
) -> Result<Subsystem, ModelError> {
    let mut in_x = vec![false; lat.n_vertices()];
    for &v in region {
        in_x[v] = true;
    }
    let mut edges: Vec<(usize, usize)> = lat
        .edges()
        .iter()
        .copied()
        .filter(|&(a, b)| in_x[a] && in_x[b])
        .collect();
    if periodic_wrap {
        for e in wrap_edges(lat, region)? {
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
        edges.sort_unstable();
    }
    let hopping = assemble_on_edges(basis, lat, spec, &edges, Some(region), false)?;
    let interaction = assemble_interaction(basis, spec, Some(region))?;
    let full = hopping.add(&interaction);
    Ok(Subsystem {
        full,
        hopping,
        interaction,
    })
}

/// The boundary hopping `dh_X = H_0 - H_{0,X} - H_{0,X^c}`: exactly the
/// hopping terms crossing the boundary of `X`.
pub fn boundary_hopping(
    basis: &FockBasis,
    lat: &Lattice,
    spec: &ModelSpec,
    region: &[usize],
) -> Result<SparseOperator, ModelError> {
    let mut in_x = vec![false; lat.n_vertices()];
    for &v in region {
        in_x[v] = true;
    }
    let crossing: Vec<(usize, usize)> = lat
        .edges()
        .iter()
        .copied()
        .filter(|&(a, b)| in_x[a] != in_x[b])
        .collect();
    assemble_on_edges(basis, lat, spec, &crossing, None, false)
}

/// Effective Hamiltonian `Pi H Pi` where `Pi` caps the occupation at `qbar`
/// on every site of `region`. An empty region leaves `h` unchanged.
pub fn truncate(
    h: &SparseOperator,
    basis: &FockBasis,
    region: &[usize],
    qbar: u32,
) -> SparseOperator {
    if region.is_empty() {
        return h.clone();
    }
    let allowed: Vec<bool> = (0..basis.dim())
        .map(|idx| region.iter().all(|&i| basis.state(idx)[i] <= qbar))
        .collect();
    h.project(|i| allowed[i])
}

fn wrap_edges(lat: &Lattice, region: &[usize]) -> Result<Vec<(usize, usize)>, ModelError> {
    // Identify the axis-0 columns present in the region and check that the
    // region is exactly a set of consecutive full columns.
    let mut cols: Vec<usize> = region.iter().map(|&v| lat.coords(v)[0]).collect();
    cols.sort_unstable();
    cols.dedup();
    let expected: usize = cols.iter().map(|&x| lat.column(x).len()).sum();
    if expected != region.len() {
        return Err(ModelError::Invalid(
            "periodic wrap requires full axis-0 columns".into(),
        ));
    }
    for w in cols.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(ModelError::Invalid(
                "periodic wrap requires consecutive columns".into(),
            ));
        }
    }
    let (first, last) = (cols[0], *cols.last().unwrap());
    if first == last {
        // Width-1 strip: the wrap would be a self-edge; nothing to add.
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for &v in &lat.column(last) {
        let mut c = lat.coords(v);
        c[0] = first;
        let u = lat.vertex(&c);
        out.push((v.min(u), v.max(u)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn assemble_interaction(
    basis: &FockBasis,
    spec: &ModelSpec,
    region: Option<&[usize]>,
) -> Result<SparseOperator, ModelError> {
    let sites: Vec<usize> = match region {
        Some(r) => r.to_vec(),
        None => (0..basis.n_sites()).collect(),
    };
    // Pre-tabulate w(n) so table errors surface before the parallel loop.
    let max_occ = match basis.sector() {
        Sector::FixedN(n) => n as u32,
        Sector::Capped(m) => m as u32,
    };
    let mut table = Vec::with_capacity(max_occ as usize + 1);
    for n in 0..=max_occ {
        table.push(spec.interaction.eval(n)?);
    }
    for term in &spec.set_terms {
        if let Some(r) = region {
            if !term.sites.iter().all(|s| r.contains(s)) {
                continue;
            }
        }
        let _ = term;
    }
    let set_terms: Vec<&SetTerm> = spec
        .set_terms
        .iter()
        .filter(|t| match region {
            Some(r) => t.sites.iter().all(|s| r.contains(s)),
            None => true,
        })
        .collect();
    let rows = par::map_indexed(basis.dim(), |idx| {
        let occ = basis.state(idx);
        let mut v: f64 = sites.iter().map(|&i| table[occ[i] as usize]).sum();
        for term in &set_terms {
            let local: Vec<u32> = term.sites.iter().map(|&s| occ[s]).collect();
            v += (term.weight)(&local);
        }
        if v == 0.0 {
            Vec::new()
        } else {
            vec![(idx, Complex64::new(v, 0.0))]
        }
    });
    Ok(SparseOperator::from_rows(basis.dim(), rows, true))
}

fn assemble_on_edges(
    basis: &FockBasis,
    lat: &Lattice,
    spec: &ModelSpec,
    edges: &[(usize, usize)],
    interaction_region: Option<&[usize]>,
    with_interaction: bool,
) -> Result<SparseOperator, ModelError> {
    build(basis, lat, spec, edges, interaction_region, with_interaction, true)
}

fn build(
    basis: &FockBasis,
    lat: &Lattice,
    spec: &ModelSpec,
    edges: &[(usize, usize)],
    interaction_region: Option<&[usize]>,
    with_interaction: bool,
    parallel: bool,
) -> Result<SparseOperator, ModelError> {
    if basis.n_sites() != lat.n_vertices() {
        return Err(ModelError::BasisLatticeMismatch(
            basis.n_sites(),
            lat.n_vertices(),
        ));
    }
    for term in &spec.set_terms {
        let diam = lat.diam_set(&term.sites);
        if diam > spec.range {
            return Err(ModelError::RangeViolation {
                sites: term.sites.clone(),
                diam,
                range: spec.range,
            });
        }
    }
    let interaction = if with_interaction {
        Some(assemble_interaction(basis, spec, interaction_region)?)
    } else {
        None
    };
    let cap = match basis.sector() {
        Sector::Capped(m) => Some(m as u32),
        Sector::FixedN(_) => None,
    };
    let row_fn = |row: usize| {
        let occ = basis.state(row);
        let mut entries: Vec<(usize, Complex64)> = Vec::new();
        if let Some(op) = &interaction {
            let (cols, vals) = op.row(row);
            entries.extend(cols.iter().zip(vals).map(|(&c, &v)| (c, v)));
        }
        // <row| b_a^dagger b_b |col> with col = row - e_a + e_b requires a
        // particle at a in the row state; the amplitude is
        // sqrt(row_a (row_b + 1)).
        for &(i, j) in edges {
            for (a, b) in [(i, j), (j, i)] {
                if occ[a] == 0 {
                    continue;
                }
                if let Some(m) = cap {
                    if occ[b] + 1 > m {
                        continue;
                    }
                }
                let mut col_occ = occ.to_vec();
                col_occ[a] -= 1;
                col_occ[b] += 1;
                if let Some(col) = basis.index_of(&col_occ) {
                    let amp = spec.edge_coefficient(a, b)
                        * ((occ[a] as f64) * (occ[b] as f64 + 1.0)).sqrt();
                    entries.push((col, Complex64::new(amp, 0.0)));
                }
            }
        }
        entries
    };
    let rows = if parallel {
        par::map_indexed(basis.dim(), row_fn)
    } else {
        par::map_indexed_seq(basis.dim(), row_fn)
    };
    Ok(SparseOperator::from_rows(basis.dim(), rows, true))
}
