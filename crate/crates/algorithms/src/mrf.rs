//! Pairwise Markov random fields: the problem description shared by BP,
//! parameter learning and Gibbs sampling, plus generators and an
//! exhaustive-enumeration oracle for small models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::AlgoError;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AlgoError> {
        if data.len() != rows * cols {
            return Err(AlgoError::InvalidModel(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.data.iter().all(|&x| x > 0.0 && x.is_finite())
    }
}

/// Laplace similarity potential `psi(a, b) = exp(-|a - b| / lambda)` over
/// integer labels.
pub fn laplace(card: usize, lambda: f64) -> Matrix {
    Matrix::from_fn(card, card, |a, b| (-(a.abs_diff(b) as f64) / lambda).exp())
}

/// One undirected potential. `potential` has `card(u)` rows and `card(v)`
/// columns; the graph builders install it on both directed edges.
#[derive(Clone, Debug, PartialEq)]
pub struct MrfEdge {
    pub u: usize,
    pub v: usize,
    /// Grid axis (0, 1 or 2) selecting the smoothing parameter.
    pub axis: u8,
    pub potential: Matrix,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairwiseMrf {
    pub cards: Vec<usize>,
    pub node_potentials: Vec<Vec<f64>>,
    pub edges: Vec<MrfEdge>,
}

impl PairwiseMrf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vertices(&self) -> usize {
        self.cards.len()
    }

    pub fn add_variable(&mut self, potential: Vec<f64>) -> usize {
        self.cards.push(potential.len());
        self.node_potentials.push(potential);
        self.cards.len() - 1
    }

    pub fn add_edge(&mut self, u: usize, v: usize, axis: u8, potential: Matrix) -> Result<(), AlgoError> {
        let n = self.num_vertices();
        if u >= n || v >= n || u == v {
            return Err(AlgoError::InvalidModel(format!("bad edge {u} - {v} for {n} variables")));
        }
        if potential.rows != self.cards[u] || potential.cols != self.cards[v] {
            return Err(AlgoError::InvalidModel(format!("potential shape mismatch on edge {u} - {v}")));
        }
        self.edges.push(MrfEdge { u, v, axis, potential });
        Ok(())
    }

    /// Checks shapes, axes and strict positivity of every potential.
    pub fn validate(&self) -> Result<(), AlgoError> {
        if self.cards.len() != self.node_potentials.len() {
            return Err(AlgoError::InvalidModel("cardinality and potential counts differ".into()));
        }
        for (i, (p, &k)) in self.node_potentials.iter().zip(&self.cards).enumerate() {
            if k == 0 || p.len() != k {
                return Err(AlgoError::InvalidModel(format!("variable {i} has bad cardinality")));
            }
            if !p.iter().all(|&x| x > 0.0 && x.is_finite()) {
                return Err(AlgoError::InvalidModel(format!("node potential {i} is not strictly positive")));
            }
        }
        let n = self.num_vertices();
        let mut seen = std::collections::HashSet::new();
        for e in &self.edges {
            if e.u >= n || e.v >= n || e.u == e.v {
                return Err(AlgoError::InvalidModel(format!("bad edge {} - {}", e.u, e.v)));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(AlgoError::InvalidModel(format!("duplicate edge {} - {}", e.u, e.v)));
            }
            if e.axis > 2 {
                return Err(AlgoError::InvalidModel(format!("axis {} out of range", e.axis)));
            }
            if e.potential.rows != self.cards[e.u] || e.potential.cols != self.cards[e.v] {
                return Err(AlgoError::InvalidModel(format!("potential shape mismatch on edge {} - {}", e.u, e.v)));
            }
            if !e.potential.is_strictly_positive() {
                return Err(AlgoError::InvalidModel(format!(
                    "edge potential {} - {} is not strictly positive",
                    e.u, e.v
                )));
            }
        }
        Ok(())
    }

    /// Adjacency lists, each neighbor listed once.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices()];
        for e in &self.edges {
            adj[e.u].push(e.v);
            adj[e.v].push(e.u);
        }
        adj
    }

    /// Unnormalized joint probability of a full assignment.
    pub fn weight(&self, x: &[usize]) -> f64 {
        let mut w: f64 = x.iter().zip(&self.node_potentials).map(|(&xi, p)| p[xi]).product();
        for e in &self.edges {
            w *= e.potential.get(x[e.u], x[e.v]);
        }
        w
    }

    /// Exact marginals by summing over every joint assignment. Refuses
    /// models with more than 2^22 states.
    pub fn enumerate_marginals(&self) -> Result<Vec<Vec<f64>>, AlgoError> {
        self.validate()?;
        let states = self.cards.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k));
        match states {
            Some(s) if s <= 1 << 22 => {}
            _ => return Err(AlgoError::InvalidModel("too many joint states to enumerate".into())),
        }
        let mut marg: Vec<Vec<f64>> = self.cards.iter().map(|&k| vec![0.0; k]).collect();
        let mut x = vec![0usize; self.num_vertices()];
        let mut z = 0.0;
        loop {
            let w = self.weight(&x);
            z += w;
            for (m, &xi) in marg.iter_mut().zip(&x) {
                m[xi] += w;
            }
            // mixed-radix increment
            let mut i = 0;
            while i < x.len() {
                x[i] += 1;
                if x[i] < self.cards[i] {
                    break;
                }
                x[i] = 0;
                i += 1;
            }
            if i == x.len() {
                break;
            }
        }
        for m in &mut marg {
            for p in m.iter_mut() {
                *p /= z;
            }
        }
        Ok(marg)
    }

    /// Random tree over `n` variables: vertex `i > 0` attaches to a uniformly
    /// chosen earlier vertex. Potentials are drawn from `[0.1, 1]`.
    pub fn random_tree(n: usize, card: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mrf = PairwiseMrf::new();
        for _ in 0..n {
            let p = (0..card).map(|_| rng.gen_range(0.1..1.0)).collect();
            mrf.add_variable(p);
        }
        for i in 1..n {
            let j = rng.gen_range(0..i);
            let data = (0..card * card).map(|_| rng.gen_range(0.1..1.0)).collect();
            let m = Matrix::new(card, card, data).expect("square potential");
            mrf.add_edge(j, i, 0, m).expect("valid tree edge");
        }
        mrf
    }
}

/// Parameters for a noisy-image grid model.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    /// Two or three extents; axis 0 varies fastest in the vertex order.
    pub dims: Vec<usize>,
    pub card: usize,
    /// Smoothing used to sample the hidden labels.
    pub truth_lambda: f64,
    /// Smoothing baked into the edge potentials. Parameter learning uses
    /// 1.0 and supplies the real value through the SDT.
    pub edge_lambda: f64,
    /// Standard deviation of the observation noise, in label units.
    pub sigma: f64,
    pub seed: u64,
}

impl GridSpec {
    pub fn new(dims: &[usize], card: usize) -> Self {
        GridSpec { dims: dims.to_vec(), card, truth_lambda: 2.0, edge_lambda: 2.0, sigma: 1.0, seed: 0 }
    }
}

/// Vertex pairs of an axis-aligned grid, each undirected pair once
/// (lower index first), with its axis.
pub fn grid_pairs(dims: &[usize]) -> Vec<(usize, usize, u8)> {
    let mut ext = [1usize; 3];
    ext[..dims.len()].copy_from_slice(dims);
    let idx = |x: usize, y: usize, z: usize| x + ext[0] * (y + ext[1] * z);
    let mut pairs = Vec::new();
    for z in 0..ext[2] {
        for y in 0..ext[1] {
            for x in 0..ext[0] {
                let v = idx(x, y, z);
                if x + 1 < ext[0] {
                    pairs.push((v, idx(x + 1, y, z), 0));
                }
                if y + 1 < ext[1] {
                    pairs.push((v, idx(x, y + 1, z), 1));
                }
                if z + 1 < ext[2] {
                    pairs.push((v, idx(x, y, z + 1), 2));
                }
            }
        }
    }
    pairs
}

/// Builds a grid model and returns it with the hidden labels it was
/// generated from. Labels are drawn from the Laplace smoothness prior
/// (sequential Gibbs, 100 sweeps) and observed with Gaussian noise; node
/// potentials are the Gaussian likelihoods of the observations.
pub fn grid(spec: &GridSpec) -> Result<(PairwiseMrf, Vec<usize>), AlgoError> {
    if !(2..=3).contains(&spec.dims.len()) || spec.dims.contains(&0) || spec.card < 2 {
        return Err(AlgoError::InvalidModel("grid needs 2 or 3 positive extents and card >= 2".into()));
    }
    if !(spec.sigma > 0.0 && spec.truth_lambda > 0.0 && spec.edge_lambda > 0.0) {
        return Err(AlgoError::InvalidModel("grid parameters must be positive".into()));
    }
    let n: usize = spec.dims.iter().product();
    let k = spec.card;
    let pairs = grid_pairs(&spec.dims);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut prior = PairwiseMrf::new();
    for _ in 0..n {
        prior.add_variable(vec![1.0; k]);
    }
    let smooth = laplace(k, spec.truth_lambda);
    for &(u, v, axis) in &pairs {
        prior.add_edge(u, v, axis, smooth.clone())?;
    }
    let mut truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    sequential_gibbs(&prior, &mut truth, 100, &mut rng);

    let noise = Normal::new(0.0, spec.sigma).expect("positive sigma");
    let mut mrf = PairwiseMrf::new();
    for &t in &truth {
        let obs = t as f64 + noise.sample(&mut rng);
        let p =
            (0..k).map(|x| (-(x as f64 - obs).powi(2) / (2.0 * spec.sigma * spec.sigma)).exp().max(1e-300)).collect();
        mrf.add_variable(p);
    }
    let edge = laplace(k, spec.edge_lambda);
    for &(u, v, axis) in &pairs {
        mrf.add_edge(u, v, axis, edge.clone())?;
    }
    Ok((mrf, truth))
}

/// Plain single-threaded Gibbs sweeps in vertex order, updating `x` in
/// place.
pub fn sequential_gibbs(mrf: &PairwiseMrf, x: &mut [usize], sweeps: usize, rng: &mut impl Rng) {
    // incident (edge index, is_u) per vertex
    let mut inc = vec![Vec::new(); mrf.num_vertices()];
    for (i, e) in mrf.edges.iter().enumerate() {
        inc[e.u].push((i, true));
        inc[e.v].push((i, false));
    }
    let mut q = Vec::new();
    for _ in 0..sweeps {
        for v in 0..mrf.num_vertices() {
            q.clear();
            q.extend_from_slice(&mrf.node_potentials[v]);
            for &(i, is_u) in &inc[v] {
                let e = &mrf.edges[i];
                for (xv, w) in q.iter_mut().enumerate() {
                    *w *= if is_u { e.potential.get(xv, x[e.v]) } else { e.potential.get(x[e.u], xv) };
                }
            }
            x[v] = sample_index(&q, rng.gen::<f64>());
        }
    }
}

/// Inverse-CDF draw from unnormalized weights given `u` in `[0, 1)`.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut t = u * total;
    for (i, &w) in weights.iter().enumerate() {
        if t < w {
            return i;
        }
        t -= w;
    }
    weights.len() - 1
}
