//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use mrfqp::generators::gen_random_mrf_with_domains;
use mrfqp::rng;
use mrfqp::{Assignment, Beliefs, PairwiseMrf};

/// Score of `labels`, read straight from the raw tables.
pub fn score(mrf: &PairwiseMrf, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (e, edge) in mrf.edges().iter().enumerate() {
        let kj = mrf.domain_size(edge.j);
        total += mrf.table(e)[labels[edge.i] * kj + labels[edge.j]];
    }
    for (i, &x) in labels.iter().enumerate() {
        if let Some(u) = mrf.unary(i) {
            total += u[x];
        }
    }
    total
}

/// Exhaustive MAP by recursion over nodes.
pub fn brute_force(mrf: &PairwiseMrf) -> (Vec<usize>, f64) {
    fn go(mrf: &PairwiseMrf, labels: &mut Vec<usize>, best: &mut (Vec<usize>, f64)) {
        if labels.len() == mrf.num_nodes() {
            let s = score(mrf, labels);
            if s > best.1 {
                *best = (labels.clone(), s);
            }
            return;
        }
        for x in 0..mrf.domain_size(labels.len()) {
            labels.push(x);
            go(mrf, labels, best);
            labels.pop();
        }
    }
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    go(mrf, &mut Vec::new(), &mut best);
    best
}

/// Every assignment of a small model.
pub fn all_assignments(domains: &[usize]) -> Vec<Assignment> {
    let mut out = vec![Vec::new()];
    for &k in domains {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k).map(move |x| {
                    let mut next = prefix.clone();
                    next.push(x);
                    next
                })
            })
            .collect();
    }
    out.into_iter().map(Assignment::new).collect()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (r, &x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (r + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Maximizer of `g·p − ½ Σ den·p²` over the simplex by projected gradient.
pub fn subproblem_oracle(g: &[f64], den: &[f64]) -> Vec<f64> {
    let step = 1.0 / den.iter().copied().fold(0.0, f64::max);
    let mut p = vec![1.0 / g.len() as f64; g.len()];
    for _ in 0..100_000 {
        let ascent: Vec<f64> = (0..p.len()).map(|x| p[x] + step * (g[x] - den[x] * p[x])).collect();
        let next = project_simplex(&ascent);
        let moved = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        p = next;
        if moved < 1e-16 {
            break;
        }
    }
    p
}

/// `d_i(x) = Σ_j Σ_xj |θ_ij(x, x_j)| / 2`, from the raw tables.
pub fn diagonal(mrf: &PairwiseMrf) -> Vec<Vec<f64>> {
    let mut d: Vec<Vec<f64>> = mrf.domains().iter().map(|&k| vec![0.0; k]).collect();
    for (e, edge) in mrf.edges().iter().enumerate() {
        let kj = mrf.domain_size(edge.j);
        for (idx, &v) in mrf.table(e).iter().enumerate() {
            d[edge.i][idx / kj] += v.abs() / 2.0;
            d[edge.j][idx % kj] += v.abs() / 2.0;
        }
    }
    d
}

/// Relaxed objective `Σ p d + Σ p_i θ p_j − Σ p² d`.
pub fn convex_objective(mrf: &PairwiseMrf, d: &[Vec<f64>], p: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (e, edge) in mrf.edges().iter().enumerate() {
        let kj = mrf.domain_size(edge.j);
        for (idx, &v) in mrf.table(e).iter().enumerate() {
            total += p[edge.i][idx / kj] * p[edge.j][idx % kj] * v;
        }
    }
    for (pi, di) in p.iter().zip(d) {
        for (&v, &dv) in pi.iter().zip(di) {
            total += v * dv - v * v * dv;
        }
    }
    total
}

fn convex_gradient(mrf: &PairwiseMrf, d: &[Vec<f64>], p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut g: Vec<Vec<f64>> = p
        .iter()
        .zip(d)
        .map(|(pi, di)| pi.iter().zip(di).map(|(&v, &dv)| dv - 2.0 * v * dv).collect())
        .collect();
    for (e, edge) in mrf.edges().iter().enumerate() {
        let kj = mrf.domain_size(edge.j);
        for (idx, &v) in mrf.table(e).iter().enumerate() {
            let (a, b) = (idx / kj, idx % kj);
            g[edge.i][a] += v * p[edge.j][b];
            g[edge.j][b] += v * p[edge.i][a];
        }
    }
    g
}

/// Maximum of the relaxed objective by accelerated projected gradient ascent
/// with step `1/L`, `L = 4·max d` (a Gershgorin bound on the Hessian).
pub fn convex_oracle(mrf: &PairwiseMrf, iterations: usize) -> f64 {
    let d = diagonal(mrf);
    let lipschitz = 4.0 * d.iter().flatten().copied().fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let uniform: Vec<Vec<f64>> = mrf.domains().iter().map(|&k| vec![1.0 / k as f64; k]).collect();
    let mut x = uniform.clone();
    let mut y = uniform;
    let mut t = 1.0f64;
    let mut best = convex_objective(mrf, &d, &x);
    for _ in 0..iterations {
        let g = convex_gradient(mrf, &d, &y);
        let next: Vec<Vec<f64>> = y
            .iter()
            .zip(&g)
            .map(|(yi, gi)| {
                let ascent: Vec<f64> = yi.iter().zip(gi).map(|(a, b)| a + step * b).collect();
                project_simplex(&ascent)
            })
            .collect();
        let value = convex_objective(mrf, &d, &next);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let moved = next
            .iter()
            .flatten()
            .zip(x.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if value < best {
            // Momentum overshot: restart from the last accepted point.
            t = 1.0;
            y = x.clone();
            continue;
        }
        best = value;
        y = next
            .iter()
            .zip(&x)
            .map(|(ni, xi)| ni.iter().zip(xi).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect())
            .collect();
        x = next;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    best
}

/// One multiplicative EM update for node `i`, coded from the update rule:
/// `p'(x) = p(x) Σ_j Σ_xj θ_ij(x, x_j) p_j(x_j) / C`.
pub fn em_update(mrf: &PairwiseMrf, p: &Beliefs, i: usize) -> Vec<f64> {
    let k = mrf.domain_size(i);
    let mut support = vec![0.0; k];
    for (e, edge) in mrf.edges().iter().enumerate() {
        let kj = mrf.domain_size(edge.j);
        let t = mrf.table(e);
        if edge.i == i {
            for x in 0..k {
                for y in 0..kj {
                    support[x] += t[x * kj + y] * p.node(edge.j)[y];
                }
            }
        } else if edge.j == i {
            let ki = mrf.domain_size(edge.i);
            for x in 0..k {
                for y in 0..ki {
                    support[x] += t[y * kj + x] * p.node(edge.i)[y];
                }
            }
        }
    }
    let numerator: Vec<f64> = (0..k).map(|x| p.node(i)[x] * support[x]).collect();
    let c: f64 = numerator.iter().sum();
    numerator.into_iter().map(|v| v / c).collect()
}

/// Connected random model with `n ∈ [2, max_n]` nodes, domains in `[2, max_k]`,
/// density in `[0.2, 1]`, tables from `U[0, scale)`.
pub fn random_instance(seed: u64, max_n: usize, max_k: usize, scale: f64) -> PairwiseMrf {
    let mut r = rng::seeded(rng::derive_seed(seed, &[0xa11ce]));
    let n = 2 + rng::index(&mut r, max_n - 1);
    let domains = (0..n).map(|_| 2 + rng::index(&mut r, max_k - 1)).collect();
    let density = rng::uniform(&mut r, 0.2, 1.0);
    gen_random_mrf_with_domains(domains, density, scale, seed).unwrap()
}

/// [`random_instance`] with a fixed `k` for every node.
pub fn random_instance_k(seed: u64, max_n: usize, k: usize) -> PairwiseMrf {
    let mut r = rng::seeded(rng::derive_seed(seed, &[0xb0b]));
    let n = 2 + rng::index(&mut r, max_n - 1);
    let density = rng::uniform(&mut r, 0.2, 1.0);
    gen_random_mrf_with_domains(vec![k; n], density, 1.0, seed).unwrap()
}

/// Random signed unaries on every node.
pub fn with_unaries(mut mrf: PairwiseMrf, seed: u64) -> PairwiseMrf {
    let mut r = rng::seeded(seed);
    for i in 0..mrf.num_nodes() {
        let u = (0..mrf.domain_size(i)).map(|_| rng::uniform(&mut r, -0.5, 0.5)).collect();
        mrf.set_unary(i, u).unwrap();
    }
    mrf
}

pub fn random_beliefs(domains: &[usize], seed: u64) -> Beliefs {
    let mut r = rng::seeded(seed);
    Beliefs::from_vecs(
        domains
            .iter()
            .map(|&k| {
                let raw: Vec<f64> = (0..k).map(|_| rng::unit_open(&mut r)).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect(),
    )
    .unwrap()
}
