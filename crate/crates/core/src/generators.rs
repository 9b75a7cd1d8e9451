//! Seeded synthetic instances: mixed Ising grids and random MRFs.
//!
//! All draws come from [`crate::rng`], so a model is a pure function of its
//! arguments.

use crate::error::{MrfError, Result};
use crate::model::PairwiseMrf;
use crate::rng::{self, Rng};

/// Default bound on Ising node potentials.
pub const NODE_POTENTIAL_BOUND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsingSpec {
    pub rows: usize,
    pub cols: usize,
    /// Couplings are drawn from `U[-beta, beta]`.
    pub beta: f64,
    /// Node potentials are drawn from `U[-bound, bound]`.
    pub node_potential_bound: f64,
    pub seed: u64,
}

impl IsingSpec {
    pub fn new(rows: usize, cols: usize, beta: f64, seed: u64) -> Self {
        IsingSpec { rows, cols, beta, node_potential_bound: NODE_POTENTIAL_BOUND, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(MrfError::InvalidConfig("grid needs at least one row and column".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(MrfError::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.node_potential_bound >= 0.0 && self.node_potential_bound.is_finite()) {
            return Err(MrfError::InvalidConfig("node potential bound must be nonnegative".into()));
        }
        Ok(())
    }

    /// Number of grid edges, `2rc − r − c`.
    pub fn num_edges(&self) -> usize {
        self.rows * (self.cols - 1) + self.cols * (self.rows - 1)
    }
}

/// Binary 4-neighbor grid with node `r·cols + c`.
///
/// Draw order: one `u` per node in index order (unary `(u, −u)`), then one
/// coupling `d` per edge, visiting nodes in order and taking the right
/// neighbor before the lower one. Edge tables are `[d, −d, −d, d]`.
pub fn gen_ising_grid(spec: &IsingSpec) -> Result<PairwiseMrf> {
    spec.validate()?;
    let n = spec.rows * spec.cols;
    let mut rng = rng::seeded(spec.seed);
    let mut mrf = PairwiseMrf::new(vec![2; n])?;
    let b = spec.node_potential_bound;
    for i in 0..n {
        let u = rng::uniform(&mut rng, -b, b);
        mrf.set_unary(i, vec![u, -u])?;
    }
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let i = r * spec.cols + c;
            if c + 1 < spec.cols {
                add_coupling(&mut mrf, &mut rng, i, i + 1, spec.beta)?;
            }
            if r + 1 < spec.rows {
                add_coupling(&mut mrf, &mut rng, i, i + spec.cols, spec.beta)?;
            }
        }
    }
    Ok(mrf)
}

fn add_coupling(mrf: &mut PairwiseMrf, rng: &mut Rng, i: usize, j: usize, beta: f64) -> Result<()> {
    let d = rng::uniform(rng, -beta, beta);
    mrf.add_edge(i, j, vec![d, -d, -d, d])?;
    Ok(())
}

/// Connected random MRF with `k` labels per node.
///
/// A random spanning tree (each node `v ≥ 1` attaches to a uniform earlier
/// node) is drawn first, then every remaining pair `(i, j)`, in lexicographic
/// order, is added with probability `density`. Tables are filled with
/// `U[0, potential_scale)` in lexicographic edge order.
pub fn gen_random_mrf(n: usize, k: usize, density: f64, potential_scale: f64, seed: u64) -> Result<PairwiseMrf> {
    if k < 2 {
        return Err(MrfError::InvalidConfig(format!("need k >= 2, got {k}")));
    }
    gen_random_mrf_with_domains(vec![k; n], density, potential_scale, seed)
}

/// [`gen_random_mrf`] with per-node label counts.
pub fn gen_random_mrf_with_domains(
    domains: Vec<usize>,
    density: f64,
    potential_scale: f64,
    seed: u64,
) -> Result<PairwiseMrf> {
    let n = domains.len();
    if n < 2 {
        return Err(MrfError::InvalidConfig(format!("need n >= 2, got {n}")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(MrfError::InvalidConfig(format!("density must lie in (0, 1], got {density}")));
    }
    check_scale(potential_scale)?;
    let mut rng = rng::seeded(seed);
    let mut adjacent = vec![false; n * n];
    for v in 1..n {
        let parent = rng::index(&mut rng, v);
        adjacent[parent * n + v] = true;
    }
    for i in 0..n {
        for j in i + 1..n {
            if !adjacent[i * n + j] && (density >= 1.0 || rng::unit(&mut rng) < density) {
                adjacent[i * n + j] = true;
            }
        }
    }
    let mut mrf = PairwiseMrf::new(domains)?;
    for i in 0..n {
        for j in i + 1..n {
            if adjacent[i * n + j] {
                let len = mrf.domain_size(i) * mrf.domain_size(j);
                let table = (0..len).map(|_| rng::uniform(&mut rng, 0.0, potential_scale)).collect();
                mrf.add_edge(i, j, table)?;
            }
        }
    }
    Ok(mrf)
}

/// Random tree with per-node label counts; node `v ≥ 1` attaches to a
/// uniform earlier node.
pub fn gen_random_tree(domains: Vec<usize>, potential_scale: f64, seed: u64) -> Result<PairwiseMrf> {
    let n = domains.len();
    if n == 0 {
        return Err(MrfError::InvalidConfig("tree needs at least one node".into()));
    }
    check_scale(potential_scale)?;
    let mut rng = rng::seeded(seed);
    let mut mrf = PairwiseMrf::new(domains)?;
    for v in 1..n {
        let parent = rng::index(&mut rng, v);
        let len = mrf.domain_size(parent) * mrf.domain_size(v);
        let table = (0..len).map(|_| rng::uniform(&mut rng, 0.0, potential_scale)).collect();
        mrf.add_edge(parent, v, table)?;
    }
    Ok(mrf)
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(MrfError::InvalidConfig(format!("potential scale must be positive, got {scale}")));
    }
    Ok(())
}
