//! Pairwise Markov random fields, beliefs, assignments and the MAP objectives.
//!
//! A model is a list of undirected edges, each owning a dense row-major
//! `k_i × k_j` table inside a single flat buffer. Looking an edge up from the
//! `j` side yields a transposed [`TableView`] over the same storage.
//!
//! The solvers work on models with nonnegative tables and no unary terms.
//! [`PairwiseMrf::absorb_unary`] and [`PairwiseMrf::normalize_nonnegative`]
//! produce such a model while keeping every assignment's score recoverable.

use std::collections::HashMap;

use crate::error::{MrfError, Result};

/// Simplex tolerance for belief sums.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
/// Belief entries in `(-NONNEGATIVE_TOLERANCE, 0)` are clamped to zero.
pub const NONNEGATIVE_TOLERANCE: f64 = 1e-12;

/// Largest joint state space [`PairwiseMrf::brute_force_map`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    offset: usize,
}

/// One edge seen from one of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub edge: usize,
    pub neighbor: usize,
    /// True when the owning node indexes the rows of the stored table.
    pub node_is_row: bool,
}

/// Read-only view of an edge table, oriented so rows belong to the viewer.
#[derive(Debug, Clone, Copy)]
pub struct TableView<'a> {
    data: &'a [f64],
    stored_cols: usize,
    transposed: bool,
}

impl<'a> TableView<'a> {
    pub fn rows(&self) -> usize {
        if self.transposed {
            self.stored_cols
        } else {
            self.data.len() / self.stored_cols
        }
    }

    pub fn cols(&self) -> usize {
        if self.transposed {
            self.data.len() / self.stored_cols
        } else {
            self.stored_cols
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        if self.transposed {
            self.data[c * self.stored_cols + r]
        } else {
            self.data[r * self.stored_cols + c]
        }
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    /// Underlying row-major storage, in stored (not viewed) orientation.
    pub fn raw(&self) -> &'a [f64] {
        self.data
    }

    /// `out[r] = Σ_c view(r, c) · weights[c]`.
    pub fn mul_vec_into(&self, weights: &[f64], out: &mut [f64]) {
        debug_assert_eq!(weights.len(), self.cols());
        debug_assert_eq!(out.len(), self.rows());
        if self.transposed {
            // Stored as cols × rows: accumulate stored rows scaled by weights.
            out.iter_mut().for_each(|o| *o = 0.0);
            for (c, &w) in weights.iter().enumerate() {
                let row = &self.data[c * self.stored_cols..(c + 1) * self.stored_cols];
                for (o, &t) in out.iter_mut().zip(row) {
                    *o += t * w;
                }
            }
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                let row = &self.data[r * self.stored_cols..(r + 1) * self.stored_cols];
                let mut acc = 0.0;
                for (&t, &w) in row.iter().zip(weights) {
                    acc += t * w;
                }
                *o = acc;
            }
        }
    }
}

/// An undirected pairwise MRF with optional unary terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMrf {
    domains: Vec<usize>,
    edges: Vec<Edge>,
    tables: Vec<f64>,
    unary: Vec<Option<Vec<f64>>>,
    adjacency: Vec<Vec<Incidence>>,
    edge_index: HashMap<(usize, usize), usize>,
}

impl PairwiseMrf {
    pub fn new(domains: Vec<usize>) -> Result<Self> {
        if let Some(node) = domains.iter().position(|&k| k == 0) {
            return Err(MrfError::InvalidModel(format!("node {node} has an empty domain")));
        }
        let n = domains.len();
        Ok(PairwiseMrf {
            domains,
            edges: Vec::new(),
            tables: Vec::new(),
            unary: vec![None; n],
            adjacency: vec![Vec::new(); n],
            edge_index: HashMap::new(),
        })
    }

    /// Adds edge `(i, j)` with a row-major `k_i × k_j` table. Returns its index.
    pub fn add_edge(&mut self, i: usize, j: usize, table: Vec<f64>) -> Result<usize> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(MrfError::InvalidModel(format!("self-loop on node {i}")));
        }
        let key = (i.min(j), i.max(j));
        if self.edge_index.contains_key(&key) {
            return Err(MrfError::InvalidModel(format!("duplicate edge ({i}, {j})")));
        }
        let expected = self.domains[i] * self.domains[j];
        if table.len() != expected {
            return Err(MrfError::Shape(format!(
                "edge ({i}, {j}) table has {} entries, expected {expected}",
                table.len()
            )));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(MrfError::InvalidModel(format!("edge ({i}, {j}) has a non-finite entry")));
        }
        let index = self.edges.len();
        self.edges.push(Edge { i, j, offset: self.tables.len() });
        self.tables.extend_from_slice(&table);
        self.adjacency[i].push(Incidence { edge: index, neighbor: j, node_is_row: true });
        self.adjacency[j].push(Incidence { edge: index, neighbor: i, node_is_row: false });
        self.edge_index.insert(key, index);
        Ok(index)
    }

    pub fn set_unary(&mut self, node: usize, values: Vec<f64>) -> Result<()> {
        self.check_node(node)?;
        if values.len() != self.domains[node] {
            return Err(MrfError::Shape(format!(
                "unary for node {node} has {} entries, expected {}",
                values.len(),
                self.domains[node]
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MrfError::InvalidModel(format!("unary for node {node} has a non-finite entry")));
        }
        self.unary[node] = Some(values);
        Ok(())
    }

    pub fn clear_unary(&mut self, node: usize) {
        if let Some(u) = self.unary.get_mut(node) {
            *u = None;
        }
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i >= self.domains.len() {
            return Err(MrfError::InvalidModel(format!(
                "node {i} out of range (model has {} nodes)",
                self.domains.len()
            )));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.domains.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn domain_size(&self, i: usize) -> usize {
        self.domains[i]
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn max_domain(&self) -> usize {
        self.domains.iter().copied().max().unwrap_or(0)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[Incidence] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn unary(&self, i: usize) -> Option<&[f64]> {
        self.unary[i].as_deref()
    }

    pub fn has_unaries(&self) -> bool {
        self.unary.iter().any(Option::is_some)
    }

    /// Stored row-major table of edge `e`.
    pub fn table(&self, e: usize) -> &[f64] {
        let edge = &self.edges[e];
        let len = self.domains[edge.i] * self.domains[edge.j];
        &self.tables[edge.offset..edge.offset + len]
    }

    fn table_mut(&mut self, e: usize) -> &mut [f64] {
        let edge = self.edges[e];
        let len = self.domains[edge.i] * self.domains[edge.j];
        &mut self.tables[edge.offset..edge.offset + len]
    }

    pub fn edge_between(&self, i: usize, j: usize) -> Option<usize> {
        self.edge_index.get(&(i.min(j), i.max(j))).copied()
    }

    /// `θ_ij` oriented with `i` on the rows; `theta(j, i)` is its transpose.
    pub fn theta(&self, i: usize, j: usize) -> Option<TableView<'_>> {
        let e = self.edge_between(i, j)?;
        Some(self.oriented(e, self.edges[e].i == i))
    }

    /// View of the table behind `inc`, oriented towards the owning node.
    pub fn incidence_view(&self, inc: &Incidence) -> TableView<'_> {
        self.oriented(inc.edge, inc.node_is_row)
    }

    fn oriented(&self, e: usize, node_is_row: bool) -> TableView<'_> {
        let edge = &self.edges[e];
        TableView {
            data: self.table(e),
            stored_cols: self.domains[edge.j],
            transposed: !node_is_row,
        }
    }

    pub fn check_assignment(&self, a: &Assignment) -> Result<()> {
        if a.len() != self.num_nodes() {
            return Err(MrfError::InvalidAssignment(format!(
                "assignment has {} labels, model has {} nodes",
                a.len(),
                self.num_nodes()
            )));
        }
        for (i, (&x, &k)) in a.labels().iter().zip(&self.domains).enumerate() {
            if x >= k {
                return Err(MrfError::InvalidAssignment(format!(
                    "label {x} out of range for node {i} (domain {k})"
                )));
            }
        }
        Ok(())
    }

    /// `Σ_(i,j) θ_ij(a_i, a_j)`, plus unary terms when present.
    pub fn evaluate_assignment(&self, a: &Assignment) -> Result<f64> {
        self.check_assignment(a)?;
        let x = a.labels();
        let mut total = 0.0;
        for (e, edge) in self.edges.iter().enumerate() {
            total += self.table(e)[x[edge.i] * self.domains[edge.j] + x[edge.j]];
        }
        for (i, u) in self.unary.iter().enumerate() {
            if let Some(u) = u {
                total += u[x[i]];
            }
        }
        Ok(total)
    }

    /// The bilinear MAP objective `Σ_(i,j) Σ p_i(x_i) p_j(x_j) θ_ij(x_i, x_j)`.
    ///
    /// Unary terms, if still present, contribute `Σ_i Σ p_i(x_i) u_i(x_i)` so
    /// that integral beliefs always reproduce [`Self::evaluate_assignment`].
    pub fn qp_objective(&self, p: &Beliefs) -> Result<f64> {
        self.check_beliefs_shape(p)?;
        let mut total = 0.0;
        for (e, edge) in self.edges.iter().enumerate() {
            let table = self.table(e);
            let kj = self.domains[edge.j];
            let pi = p.node(edge.i);
            let pj = p.node(edge.j);
            for (xi, &wi) in pi.iter().enumerate() {
                if wi == 0.0 {
                    continue;
                }
                let row = &table[xi * kj..(xi + 1) * kj];
                let mut acc = 0.0;
                for (&t, &wj) in row.iter().zip(pj) {
                    acc += t * wj;
                }
                total += wi * acc;
            }
        }
        for (i, u) in self.unary.iter().enumerate() {
            if let Some(u) = u {
                total += u.iter().zip(p.node(i)).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(total)
    }

    pub fn check_beliefs_shape(&self, p: &Beliefs) -> Result<()> {
        if p.num_nodes() != self.num_nodes() {
            return Err(MrfError::Shape(format!(
                "beliefs cover {} nodes, model has {}",
                p.num_nodes(),
                self.num_nodes()
            )));
        }
        for i in 0..self.num_nodes() {
            if p.node(i).len() != self.domains[i] {
                return Err(MrfError::Shape(format!(
                    "node {i} belief has {} entries, domain is {}",
                    p.node(i).len(),
                    self.domains[i]
                )));
            }
        }
        Ok(())
    }

    /// Shifts every table with a negative entry up by `-min` so all entries
    /// are nonnegative. Construction already rejects non-finite entries.
    pub fn normalize_nonnegative(&self) -> (PairwiseMrf, ObjectiveOffset) {
        let mut out = self.clone();
        let mut per_edge = vec![0.0; self.num_edges()];
        for (e, shift) in per_edge.iter_mut().enumerate() {
            let table = out.table_mut(e);
            let min = table.iter().copied().fold(f64::INFINITY, f64::min);
            if min < 0.0 {
                *shift = -min;
                table.iter_mut().for_each(|v| *v -= min);
            }
        }
        let shift_total = per_edge.iter().sum();
        (out, ObjectiveOffset { shift_total, per_edge })
    }

    /// Folds each unary `u_i` into the incident tables, adding `u_i(x_i)/deg(i)`
    /// to every entry of row `x_i` (oriented towards `i`).
    pub fn absorb_unary(&self) -> Result<PairwiseMrf> {
        let mut out = self.clone();
        for i in 0..self.num_nodes() {
            let Some(u) = out.unary[i].take() else { continue };
            let deg = out.adjacency[i].len();
            if deg == 0 {
                if u.iter().all(|&v| v == 0.0) {
                    continue;
                }
                return Err(MrfError::UnaryOnIsolatedNode { node: i });
            }
            let share: Vec<f64> = u.iter().map(|&v| v / deg as f64).collect();
            let incidences = out.adjacency[i].clone();
            for inc in incidences {
                let cols = out.domains[out.edges[inc.edge].j];
                let table = out.table_mut(inc.edge);
                if inc.node_is_row {
                    for (xi, &s) in share.iter().enumerate() {
                        table[xi * cols..(xi + 1) * cols].iter_mut().for_each(|v| *v += s);
                    }
                } else {
                    for row in table.chunks_mut(cols) {
                        row.iter_mut().zip(&share).for_each(|(v, &s)| *v += s);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exhaustive MAP. Ties resolve to the lexicographically smallest assignment.
    pub fn brute_force_map(&self) -> Result<(Assignment, f64)> {
        let space = self.domains.iter().map(|&k| k as u128).product::<u128>();
        if space > BRUTE_FORCE_LIMIT {
            return Err(MrfError::InvalidModel(format!(
                "joint state space {space} too large to enumerate"
            )));
        }
        let n = self.num_nodes();
        let mut labels = vec![0usize; n];
        let mut best = (Assignment(labels.clone()), f64::NEG_INFINITY);
        loop {
            let a = Assignment(labels.clone());
            let v = self.evaluate_assignment(&a)?;
            if v > best.1 {
                best = (a, v);
            }
            // Odometer with the last node fastest.
            let mut pos = n;
            loop {
                if pos == 0 {
                    return Ok(best);
                }
                pos -= 1;
                labels[pos] += 1;
                if labels[pos] < self.domains[pos] {
                    break;
                }
                labels[pos] = 0;
            }
        }
    }

    /// Number of connected components (isolated nodes count as components).
    pub fn count_components(&self) -> usize {
        let n = self.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut components = n;
        for edge in &self.edges {
            let (a, b) = (find(&mut parent, edge.i), find(&mut parent, edge.j));
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
        components
    }

    pub fn is_forest(&self) -> bool {
        self.num_edges() + self.count_components() == self.num_nodes()
    }
}

/// Constants added to edge tables by [`PairwiseMrf::normalize_nonnegative`].
///
/// Every assignment of the shifted model scores exactly `shift_total` more
/// than on the original model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectiveOffset {
    pub shift_total: f64,
    pub per_edge: Vec<f64>,
}

impl ObjectiveOffset {
    pub fn to_original(&self, shifted_objective: f64) -> f64 {
        shifted_objective - self.shift_total
    }
}

/// One label per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(labels: Vec<usize>) -> Self {
        Assignment(labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Assignment(v)
    }
}

impl std::ops::Index<usize> for Assignment {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// Per-node probability vectors: the decision variables of the QPs.
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    nodes: Vec<Vec<f64>>,
}

impl Beliefs {
    /// Validates nonnegativity and normalization; entries within
    /// [`NONNEGATIVE_TOLERANCE`] below zero are clamped to zero.
    pub fn from_vecs(mut nodes: Vec<Vec<f64>>) -> Result<Self> {
        for (i, p) in nodes.iter_mut().enumerate() {
            if p.is_empty() {
                return Err(MrfError::Shape(format!("node {i} has an empty belief vector")));
            }
            for v in p.iter_mut() {
                if !v.is_finite() || *v <= -NONNEGATIVE_TOLERANCE {
                    return Err(MrfError::InvalidModel(format!(
                        "node {i} belief entry {v} is not a probability"
                    )));
                }
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(MrfError::InvalidModel(format!("node {i} beliefs sum to {sum}")));
            }
        }
        Ok(Beliefs { nodes })
    }

    pub(crate) fn from_vecs_unchecked(nodes: Vec<Vec<f64>>) -> Self {
        Beliefs { nodes }
    }

    pub fn uniform(domains: &[usize]) -> Self {
        Beliefs {
            nodes: domains.iter().map(|&k| vec![1.0 / k as f64; k]).collect(),
        }
    }

    pub fn indicator(domains: &[usize], a: &Assignment) -> Result<Self> {
        if a.len() != domains.len() {
            return Err(MrfError::InvalidAssignment(format!(
                "assignment has {} labels for {} nodes",
                a.len(),
                domains.len()
            )));
        }
        let mut nodes = Vec::with_capacity(domains.len());
        for (i, (&k, &x)) in domains.iter().zip(a.labels()).enumerate() {
            if x >= k {
                return Err(MrfError::InvalidAssignment(format!(
                    "label {x} out of range for node {i}"
                )));
            }
            let mut p = vec![0.0; k];
            p[x] = 1.0;
            nodes.push(p);
        }
        Ok(Beliefs { nodes })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.nodes
    }

    pub fn into_vecs(self) -> Vec<Vec<f64>> {
        self.nodes
    }

    /// Largest deviation from the simplex: `max(|Σp − 1|, −min p)`.
    pub fn simplex_violation(&self) -> f64 {
        self.nodes
            .iter()
            .map(|p| {
                let sum: f64 = p.iter().sum();
                let min = p.iter().copied().fold(f64::INFINITY, f64::min);
                (sum - 1.0).abs().max(-min)
            })
            .fold(0.0, f64::max)
    }

    pub fn is_on_simplex(&self) -> bool {
        self.nodes.iter().all(|p| {
            let sum: f64 = p.iter().sum();
            (sum - 1.0).abs() <= SIMPLEX_TOLERANCE && p.iter().all(|&v| v > -NONNEGATIVE_TOLERANCE)
        })
    }

    /// Per-node argmax; ties go to the lowest label.
    pub fn decode(&self) -> Assignment {
        Assignment(self.nodes.iter().map(|p| argmax(p)).collect())
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
