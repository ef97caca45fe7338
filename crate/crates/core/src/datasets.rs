//! Seeded generators for the synthetic benchmarks and the lower-bound point
//! arrangements.

use nalgebra::DMatrix;
use petgraph::algo::{connected_components, dijkstra};
use petgraph::graph::{NodeIndex, UnGraph};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::plan::{CostSpec, LabeledPointCloud};
use crate::rng::SeedStream;

/// Noise variance of the moons before the affine map.
pub const MOON_NOISE_VAR: f64 = 0.5;
/// Half the separation between the two moons.
pub const MOON_OFFSET: [f64; 2] = [0.5, 0.25];
/// Means of the eight Gaussians.
pub const EIGHT_MEANS: [[f64; 2]; 8] = [
    [1.0, 0.0],
    [-1.0, 0.0],
    [0.0, 1.0],
    [0.0, -1.0],
    [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
    [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2],
    [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2],
    [-std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2],
];

fn normal(var: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, var.max(0.0).sqrt())
        .map_err(|e| Error::InvalidParameter(format!("variance {var}: {e}")))
}

/// Split `n` into `parts` sizes differing by at most one, larger first.
fn even_split(n: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|k| n / parts + usize::from(k < n % parts)).collect()
}

/// Two moons in `X` (mapped by `3x − (1, 1)`) and eight Gaussians in `Y`.
pub fn gen_moons_gaussians(
    n: usize,
    noise_sigma2: f64,
    seed: u64,
) -> Result<(LabeledPointCloud, LabeledPointCloud)> {
    if n < 8 {
        return Err(Error::InvalidParameter(format!("n = {n} < 8")));
    }
    let seeds = SeedStream::new(seed);
    let mut rng = seeds.rng("moons");
    let moon_noise = normal(MOON_NOISE_VAR)?;
    let mut x = DMatrix::zeros(n, 2);
    let mut xl = Vec::with_capacity(n);
    let sizes = even_split(n, 2);
    let mut row = 0;
    for (moon, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let theta = rng.random::<f64>() * std::f64::consts::PI;
            let (px, py) = if moon == 0 {
                (theta.cos() - MOON_OFFSET[0], theta.sin() - MOON_OFFSET[1])
            } else {
                (theta.cos() + MOON_OFFSET[0], -theta.sin() + MOON_OFFSET[1])
            };
            let nx = moon_noise.sample(&mut rng);
            let ny = moon_noise.sample(&mut rng);
            x[(row, 0)] = 3.0 * (px + nx) - 1.0;
            x[(row, 1)] = 3.0 * (py + ny) - 1.0;
            xl.push(moon);
            row += 1;
        }
    }
    let mut rng = seeds.rng("gaussians");
    let noise = normal(noise_sigma2)?;
    let mut y = DMatrix::zeros(n, 2);
    let mut yl = Vec::with_capacity(n);
    let mut row = 0;
    for (k, &size) in even_split(n, 8).iter().enumerate() {
        for _ in 0..size {
            for d in 0..2 {
                y[(row, d)] = EIGHT_MEANS[k][d] + noise.sample(&mut rng);
            }
            yl.push(k);
            row += 1;
        }
    }
    Ok((
        LabeledPointCloud::new(x, Some(xl), seed)?,
        LabeledPointCloud::new(y, Some(yl), seed)?,
    ))
}

/// Planted clusters at the basis vectors of `ℝᴷ`; see
/// [`gen_shifted_gaussians_perturbed`].
pub fn gen_shifted_gaussians(
    n: usize,
    k: usize,
    sigma2: f64,
    seed: u64,
) -> Result<(LabeledPointCloud, LabeledPointCloud, Vec<usize>)> {
    gen_shifted_gaussians_perturbed(n, k, sigma2, 0.1, seed)
}

/// `X` cluster `k` is `N(e_k, σ²/√n I)`, `Y` cluster `k` is
/// `N(e_k + ξ_k, σ²/√n I)` with `ξ_k ~ N(0, perturbation/√n I)`. Cluster
/// sizes are one each plus a uniform multinomial split of the remaining
/// `n − K` points; both sides share the same label blocks.
pub fn gen_shifted_gaussians_perturbed(
    n: usize,
    k: usize,
    sigma2: f64,
    perturbation: f64,
    seed: u64,
) -> Result<(LabeledPointCloud, LabeledPointCloud, Vec<usize>)> {
    if k == 0 || k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let seeds = SeedStream::new(seed);
    let root_n = (n as f64).sqrt();
    let mut rng = seeds.rng("sizes");
    let mut sizes = vec![1usize; k];
    for _ in 0..n - k {
        sizes[rng.random_range(0..k)] += 1;
    }
    let mut rng = seeds.rng("shift");
    let shift = normal(perturbation / root_n)?;
    let shifted: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            (0..k)
                .map(|d| f64::from(u8::from(c == d)) + shift.sample(&mut rng))
                .collect()
        })
        .collect();
    let noise = normal(sigma2 / root_n)?;
    let mut labels = Vec::with_capacity(n);
    for (c, &s) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat_n(c, s));
    }
    let mut rng = seeds.rng("x");
    let x = DMatrix::from_fn(n, k, |_, _| 0.0);
    let mut x = x;
    for (i, &c) in labels.iter().enumerate() {
        for d in 0..k {
            x[(i, d)] = f64::from(u8::from(c == d)) + noise.sample(&mut rng);
        }
    }
    let mut rng = seeds.rng("y");
    let mut y = DMatrix::zeros(n, k);
    for (i, &c) in labels.iter().enumerate() {
        for d in 0..k {
            y[(i, d)] = shifted[c][d] + noise.sample(&mut rng);
        }
    }
    Ok((
        LabeledPointCloud::new(x, Some(labels.clone()), seed)?,
        LabeledPointCloud::new(y, Some(labels.clone()), seed)?,
        labels,
    ))
}

/// Shortest-path distances on a weighted stochastic block model graph with
/// `k` blocks of `cluster_size` vertices. Resamples up to 100 times until the
/// graph is connected.
pub fn gen_sbm_cost(
    k: usize,
    cluster_size: usize,
    p: f64,
    q: f64,
    weight_range: (f64, f64),
    seed: u64,
) -> Result<(CostSpec, Vec<usize>)> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("p = {p}, q = {q}")));
    }
    let (lo, hi) = weight_range;
    if !(lo > 0.0) || hi < lo {
        return Err(Error::InvalidParameter(format!("weights [{lo}, {hi}]")));
    }
    let n = k * cluster_size;
    if n == 0 {
        return Err(Error::InvalidParameter("empty graph".into()));
    }
    let labels: Vec<usize> = (0..n).map(|i| i / cluster_size).collect();
    let mut rng = SeedStream::new(seed).rng("sbm");
    const ATTEMPTS: usize = 100;
    for _ in 0..ATTEMPTS {
        let mut graph = UnGraph::<(), f64>::with_capacity(n, 0);
        let nodes: Vec<NodeIndex> = (0..n).map(|_| graph.add_node(())).collect();
        for i in 0..n {
            for j in i + 1..n {
                let prob = if labels[i] == labels[j] { p } else { q };
                if rng.random::<f64>() < prob {
                    let w = if hi > lo { rng.random_range(lo..hi) } else { lo };
                    graph.add_edge(nodes[i], nodes[j], w);
                }
            }
        }
        if connected_components(&graph) != 1 {
            continue;
        }
        let mut dist = DMatrix::zeros(n, n);
        for (s, &src) in nodes.iter().enumerate() {
            let reach = dijkstra(&graph, src, None, |e| *e.weight());
            for (t, &dst) in nodes.iter().enumerate() {
                dist[(s, t)] = reach[&dst];
            }
        }
        let sym = (&dist + dist.transpose()) * 0.5;
        return Ok((CostSpec::Dense(sym), labels));
    }
    Err(Error::Disconnected(ATTEMPTS))
}

/// `T(x) = x + 2 sgn(x) ⊙ (e₁ + e₂)`.
pub fn hypercube_map(x: &mut [f64]) {
    for v in x.iter_mut().take(2) {
        if *v > 0.0 {
            *v += 2.0;
        } else if *v < 0.0 {
            *v -= 2.0;
        }
    }
}

/// `X ~ U[−1, 1]ᵈ` and `Y = T(X')` for an independent sample `X'`.
pub fn gen_fragmented_hypercube(
    n: usize,
    d: usize,
    seed: u64,
) -> Result<(LabeledPointCloud, LabeledPointCloud)> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("d = {d} < 2")));
    }
    let seeds = SeedStream::new(seed);
    let mut rng = seeds.rng("x");
    let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let mut rng = seeds.rng("y");
    let mut y = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    for i in 0..n {
        let mut row: Vec<f64> = y.row(i).iter().copied().collect();
        hypercube_map(&mut row);
        for (t, v) in row.into_iter().enumerate() {
            y[(i, t)] = v;
        }
    }
    Ok((
        LabeledPointCloud::new(x, None, seed)?,
        LabeledPointCloud::new(y, None, seed)?,
    ))
}

/// Point types used by the lower-bound arrangements.
pub const LB_PAIR: usize = 0;
pub const LB_MIDDLE: usize = 1;
pub const LB_LEFT: usize = 2;
pub const LB_RIGHT: usize = 3;

fn lb_types(k: usize) -> Vec<usize> {
    let mut t = vec![LB_PAIR, LB_MIDDLE];
    t.extend(std::iter::repeat_n(LB_LEFT, k));
    t.extend(std::iter::repeat_n(LB_RIGHT, k));
    t
}

fn check_lb(k: usize, eps: f64) -> Result<()> {
    if k == 0 || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("k = {k}, eps = {eps}")));
    }
    Ok(())
}

fn lb_clouds(x: Vec<[f64; 2]>, y: Vec<[f64; 2]>, k: usize) -> Result<(LabeledPointCloud, LabeledPointCloud)> {
    let to = |p: &[[f64; 2]]| DMatrix::from_fn(p.len(), 2, |i, d| p[i][d]);
    Ok((
        LabeledPointCloud::new(to(&x), Some(lb_types(k)), 0)?,
        LabeledPointCloud::new(to(&y), Some(lb_types(k)), 0)?,
    ))
}

/// Euclidean arrangement on `2k + 2` points per side.
///
/// `X = [P, M, L¹…Lᵏ, R¹…Rᵏ]` and `Y = [Q, M, L¹…Lᵏ, R¹…Rᵏ]` with
/// `P = (0, ε)`, `Q = (2, ε)`, `M = (1, −ε)`, `Lⁱ = (0, −iε/k)` and
/// `Rⁱ = (2, −iε/k)`. The optimal Monge map is the identity.
pub fn build_euclidean_lb(k: usize, eps: f64) -> Result<(LabeledPointCloud, LabeledPointCloud)> {
    check_lb(k, eps)?;
    let mut x = vec![[0.0, eps], [1.0, -eps]];
    let mut y = vec![[2.0, eps], [1.0, -eps]];
    for side in [0.0, 2.0] {
        for i in 1..=k {
            let p = [side, -(i as f64) * eps / k as f64];
            x.push(p);
            y.push(p);
        }
    }
    lb_clouds(x, y, k)
}

/// Squared-Euclidean arrangement on `2k + 2` points per side.
///
/// `X = [P₁, P₂, k×(0, 2), k×(2, 0)]` and `Y = [Q₁, Q₂, k×(0, 2), k×(2, 0)]`
/// with `P₁ = (1 + ε, 2)`, `P₂ = (1 − ε, 0)`, `Q₁ = (2, 1)`, `Q₂ = (0, 1)`.
/// The optimal Monge map is the identity.
pub fn build_sqeuclidean_lb(k: usize, eps: f64) -> Result<(LabeledPointCloud, LabeledPointCloud)> {
    check_lb(k, eps)?;
    let mut x = vec![[1.0 + eps, 2.0], [1.0 - eps, 0.0]];
    let mut y = vec![[2.0, 1.0], [0.0, 1.0]];
    for corner in [[0.0, 2.0], [2.0, 0.0]] {
        for _ in 0..k {
            x.push(corner);
            y.push(corner);
        }
    }
    lb_clouds(x, y, k)
}

/// Block labels `(X, Y)` of the two-cluster solution that ignores the Monge
/// map in both arrangements: the first `X` point joins the left corners, the
/// second joins the right corners, and on `Y` the roles of the first two
/// points are swapped.
pub fn lb_non_monge_labels(k: usize) -> (Vec<usize>, Vec<usize>) {
    let mut x = vec![0, 1];
    let mut y = vec![1, 0];
    for labels in [&mut x, &mut y] {
        labels.extend(std::iter::repeat_n(0, k));
        labels.extend(std::iter::repeat_n(1, k));
    }
    (x, y)
}

/// Standard normal draw, exposed for instance generators in tests and sweeps.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}
