//! Finite graph geometry: discrete tori, graph distances, balls, boundaries,
//! the surface-growth constant, and lattice translations.
//!
//! Only tori are constructed, but all queries work on the generic edge-set
//! representation. Distances are precomputed by breadth-first search and
//! cached as a dense table, which is fine for the few hundred vertices every
//! experiment uses.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("torus side length must be >= 2, got {0}")]
    SideTooSmall(usize),
    #[error("spatial dimension must be >= 1, got {0}")]
    DimensionTooSmall(usize),
    #[error("vertex set must be nonempty")]
    EmptyVertexSet,
    #[error("vertex {0} out of range (lattice has {1} vertices)")]
    VertexOutOfRange(usize, usize),
}

/// A finite `D`-dimensional discrete torus with cached graph distances.
#[derive(Debug, Clone)]
pub struct Lattice {
    side: usize,
    dims: usize,
    n_vertices: usize,
    /// Unordered edges `(i, j)` with `i < j`, sorted, deduplicated.
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    /// Dense all-pairs distance table, row-major.
    dist: Vec<u32>,
    gamma: f64,
}

/// A lattice translation: a coordinate shift together with the induced
/// vertex permutation.
#[derive(Debug, Clone)]
pub struct Translation {
    pub shift: Vec<usize>,
    perm: Vec<usize>,
}

impl Translation {
    /// Image of vertex `v` under the translation.
    pub fn apply(&self, v: usize) -> usize {
        self.perm[v]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Inverse permutation.
    pub fn inverse(&self) -> Translation {
        let mut inv = vec![0; self.perm.len()];
        for (v, &tv) in self.perm.iter().enumerate() {
            inv[tv] = v;
        }
        let side = self.shift.len();
        let _ = side;
        Translation {
            shift: self.shift.clone(),
            perm: inv,
        }
    }
}

impl Lattice {
    /// Build the discrete `D`-dimensional torus of side length `L`.
    ///
    /// For `L = 2` the two neighbors of a vertex along an axis coincide; the
    /// duplicate is collapsed so the graph stays simple and vertex degree is
    /// `D` instead of `2D`.
    pub fn torus(side: usize, dims: usize) -> Result<Lattice, LatticeError> {
        if side < 2 {
            return Err(LatticeError::SideTooSmall(side));
        }
        if dims < 1 {
            return Err(LatticeError::DimensionTooSmall(dims));
        }
        let n_vertices = side.pow(dims as u32);
        let mut edges = Vec::new();
        for v in 0..n_vertices {
            let coords = Self::coords_of(v, side, dims);
            for axis in 0..dims {
                let mut up = coords.clone();
                up[axis] = (up[axis] + 1) % side;
                let u = Self::index_of_coords(&up, side);
                if u != v {
                    let e = (v.min(u), v.max(u));
                    edges.push(e);
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let mut adjacency = vec![Vec::new(); n_vertices];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }

        let dist = all_pairs_bfs(n_vertices, &adjacency);
        let mut lat = Lattice {
            side,
            dims,
            n_vertices,
            edges,
            adjacency,
            dist,
            gamma: 1.0,
        };
        lat.gamma = lat.compute_surface_constant();
        Ok(lat)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// Surface-growth constant: the smallest `gamma >= 1` with
    /// `|boundary(i[l])| <= gamma * max(l,1)^(D-1)` for every vertex `i` and
    /// every radius `l` up to the graph diameter.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Graph distance between two vertices.
    pub fn dist(&self, i: usize, j: usize) -> usize {
        self.dist[i * self.n_vertices + j] as usize
    }

    /// Graph distance from a set to a vertex (0 when the vertex is in the set).
    pub fn set_dist(&self, xs: &[usize], j: usize) -> usize {
        xs.iter().map(|&i| self.dist(i, j)).min().unwrap_or(usize::MAX)
    }

    /// Largest pairwise distance in the graph.
    pub fn diameter(&self) -> usize {
        self.dist.iter().copied().max().unwrap_or(0) as usize
    }

    /// Diameter of a vertex set in the `1 + max pairwise distance` convention
    /// used for interaction-range checks.
    pub fn diam_set(&self, xs: &[usize]) -> usize {
        let mut m = 0;
        for &i in xs {
            for &j in xs {
                m = m.max(self.dist(i, j));
            }
        }
        1 + m
    }

    /// The ball `X[r] = { i : dist(X, i) <= r }`, sorted. `ball(X, 0) = X`.
    pub fn ball(&self, xs: &[usize], r: usize) -> Result<Vec<usize>, LatticeError> {
        if xs.is_empty() {
            return Err(LatticeError::EmptyVertexSet);
        }
        for &v in xs {
            if v >= self.n_vertices {
                return Err(LatticeError::VertexOutOfRange(v, self.n_vertices));
            }
        }
        let mut out: Vec<usize> = (0..self.n_vertices)
            .filter(|&i| self.set_dist(xs, i) <= r)
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    /// Interior boundary `{ i in X : dist(i, complement) = 1 }`; empty when
    /// `X` is the whole vertex set.
    pub fn boundary(&self, xs: &[usize]) -> Vec<usize> {
        let mut in_x = vec![false; self.n_vertices];
        for &v in xs {
            in_x[v] = true;
        }
        let mut out: Vec<usize> = xs
            .iter()
            .copied()
            .filter(|&v| self.adjacency[v].iter().any(|&u| !in_x[u]))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Complement of a vertex set, sorted.
    pub fn complement(&self, xs: &[usize]) -> Vec<usize> {
        let mut in_x = vec![false; self.n_vertices];
        for &v in xs {
            in_x[v] = true;
        }
        (0..self.n_vertices).filter(|&v| !in_x[v]).collect()
    }

    fn compute_surface_constant(&self) -> f64 {
        let diam = self.diameter();
        let mut gamma: f64 = 1.0;
        for i in 0..self.n_vertices {
            for l in 0..=diam {
                let ball = self.ball(&[i], l).expect("singleton ball");
                let surface = self.boundary(&ball).len() as f64;
                let denom = (l.max(1) as f64).powi(self.dims as i32 - 1);
                gamma = gamma.max(surface / denom);
            }
        }
        gamma
    }

    /// Coordinates of a vertex, axis 0 fastest.
    pub fn coords(&self, v: usize) -> Vec<usize> {
        Self::coords_of(v, self.side, self.dims)
    }

    /// Vertex index from coordinates.
    pub fn vertex(&self, coords: &[usize]) -> usize {
        Self::index_of_coords(coords, self.side)
    }

    fn coords_of(v: usize, side: usize, dims: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(dims);
        let mut rest = v;
        for _ in 0..dims {
            c.push(rest % side);
            rest /= side;
        }
        c
    }

    fn index_of_coords(coords: &[usize], side: usize) -> usize {
        let mut idx = 0;
        for &c in coords.iter().rev() {
            idx = idx * side + (c % side);
        }
        idx
    }

    /// Translation by an arbitrary shift vector (componentwise mod `L`).
    pub fn translation(&self, shift: &[usize]) -> Translation {
        assert_eq!(shift.len(), self.dims, "shift must have one entry per axis");
        let perm = (0..self.n_vertices)
            .map(|v| {
                let mut c = self.coords(v);
                for (axis, &s) in shift.iter().enumerate() {
                    c[axis] = (c[axis] + s) % self.side;
                }
                self.vertex(&c)
            })
            .collect();
        Translation {
            shift: shift.to_vec(),
            perm,
        }
    }

    /// The `D` generating translations, one unit shift per axis.
    pub fn translations(&self) -> Vec<Translation> {
        (0..self.dims)
            .map(|axis| {
                let mut shift = vec![0; self.dims];
                shift[axis] = 1;
                self.translation(&shift)
            })
            .collect()
    }

    /// All sites of the axis-0 "column" `x`, i.e. vertices whose first
    /// coordinate equals `x`, sorted.
    pub fn column(&self, x: usize) -> Vec<usize> {
        (0..self.n_vertices)
            .filter(|&v| self.coords(v)[0] == x % self.side)
            .collect()
    }
}

fn all_pairs_bfs(n: usize, adjacency: &[Vec<usize>]) -> Vec<u32> {
    let mut dist = vec![u32::MAX; n * n];
    let mut queue = std::collections::VecDeque::new();
    for src in 0..n {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let dv = row[v];
            for &u in &adjacency[v] {
                if row[u] == u32::MAX {
                    row[u] = dv + 1;
                    queue.push_back(u);
                }
            }
        }
    }
    dist
}
