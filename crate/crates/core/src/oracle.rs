//! Exhaustive optima on tiny instances and the approximation-bound checks
//! built on them.
//!
//! All partition costs here use the `lrot_cost` scale for uniform masses:
//! `(1/n) Σ_k (1/|X_k|) Σ_{i∈X_k, j∈Y_k} C(i, j)`.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fullrank::exact_assignment;
use crate::plan::{CostSpec, Permutation};
use crate::registration::monge_register;
use crate::rng::SeedStream;

/// Largest `n` accepted by [`brute_hard_lrot`].
pub const MAX_BIPARTITION_N: usize = 10;
/// Largest `n` accepted by [`brute_gen_kmeans`].
pub const MAX_PARTITION_N: usize = 12;
/// Largest `K` accepted by either enumeration.
pub const MAX_ORACLE_K: usize = 3;
/// Slack used by [`verify_approximation_bound`].
pub const BOUND_SLACK: f64 = 1e-9;

/// All labelings of `[n]` into at most `k` blocks in restricted-growth form
/// (first occurrence order), so each set partition appears once.
pub fn set_partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n == 0 || k == 0 {
        return out;
    }
    let mut labels = vec![0usize; n];
    fn rec(i: usize, used: usize, k: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == labels.len() {
            out.push(labels.clone());
            return;
        }
        for l in 0..(used + 1).min(k) {
            labels[i] = l;
            rec(i + 1, used.max(l + 1), k, labels, out);
        }
    }
    rec(1, 1, k, &mut labels, &mut out);
    out
}

fn check_size(cost: &CostSpec, k: usize, n_cap: usize) -> Result<DMatrix<f64>> {
    let (n, m) = (cost.nrows(), cost.ncols());
    if n != m {
        return Err(Error::Rectangular { n, m });
    }
    if n > n_cap || k > MAX_ORACLE_K {
        return Err(Error::TooLarge(format!("n = {n}, K = {k}")));
    }
    if k == 0 || k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    cost.to_dense()
}

/// Optimum of the hard low-rank problem.
#[derive(Debug, Clone, PartialEq)]
pub struct HardOptimum {
    pub cost: f64,
    pub x_labels: Vec<usize>,
    pub y_labels: Vec<usize>,
}

/// Best `Y` labeling for fixed `X` blocks: each block `k` of `Y` must have
/// the size of `X` block `k`. Dynamic program over the remaining capacities.
fn best_matching_y(c: &DMatrix<f64>, x_labels: &[usize]) -> (f64, Vec<usize>) {
    let n = x_labels.len();
    let k = x_labels.iter().max().unwrap() + 1;
    let mut sizes = [0usize; MAX_ORACLE_K];
    for &l in x_labels {
        sizes[l] += 1;
    }
    // w[j][b] = (1/|X_b|) Σ_{i∈X_b} C(i, j)
    let mut w = vec![[0.0f64; MAX_ORACLE_K]; n];
    for (i, &l) in x_labels.iter().enumerate() {
        for (j, wj) in w.iter_mut().enumerate() {
            wj[l] += c[(i, j)];
        }
    }
    for wj in w.iter_mut() {
        for b in 0..k {
            wj[b] /= sizes[b] as f64;
        }
    }
    // dp over (j, c0, c1); block 2 count is implied.
    let dim = n + 1;
    let idx = |j: usize, c0: usize, c1: usize| (j * dim + c0) * dim + c1;
    let mut dp = vec![f64::INFINITY; dim * dim * dim];
    let mut choice = vec![u8::MAX; dim * dim * dim];
    dp[idx(0, 0, 0)] = 0.0;
    for j in 0..n {
        for c0 in 0..=sizes[0].min(j) {
            for c1 in 0..=sizes[1].min(j - c0) {
                let c2 = j - c0 - c1;
                let cur = dp[idx(j, c0, c1)];
                if !cur.is_finite() || c2 > sizes[2] {
                    continue;
                }
                for b in 0..k {
                    let (n0, n1, n2) = match b {
                        0 => (c0 + 1, c1, c2),
                        1 => (c0, c1 + 1, c2),
                        _ => (c0, c1, c2 + 1),
                    };
                    if n0 > sizes[0] || n1 > sizes[1] || n2 > sizes[2] {
                        continue;
                    }
                    let v = cur + w[j][b];
                    let t = idx(j + 1, n0, n1);
                    if v < dp[t] {
                        dp[t] = v;
                        choice[t] = b as u8;
                    }
                }
            }
        }
    }
    let mut labels = vec![0usize; n];
    let (mut c0, mut c1) = (sizes[0], sizes[1]);
    for j in (0..n).rev() {
        let b = choice[idx(j + 1, c0, c1)] as usize;
        labels[j] = b;
        match b {
            0 => c0 -= 1,
            1 => c1 -= 1,
            _ => {}
        }
    }
    (dp[idx(n, sizes[0], sizes[1])], labels)
}

fn argmin_by_index<T: Send>(items: Vec<(f64, usize, T)>) -> Option<(f64, T)> {
    items
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(c, _, t)| (c, t))
}

/// Exhaustive hard low-rank optimum over pairs of partitions with at most
/// `K` blocks and matched block sizes. Requires `n == m ≤ 10` and `K ≤ 3`.
pub fn brute_hard_lrot(cost: &CostSpec, k: usize) -> Result<HardOptimum> {
    let c = check_size(cost, k, MAX_BIPARTITION_N)?;
    let n = c.nrows();
    let parts = set_partitions(n, k);
    let scored: Vec<_> = parts
        .into_par_iter()
        .enumerate()
        .map(|(idx, xl)| {
            let (v, yl) = best_matching_y(&c, &xl);
            (v / n as f64, idx, (xl, yl))
        })
        .collect();
    let (cost, (x_labels, y_labels)) = argmin_by_index(scored).expect("nonempty enumeration");
    Ok(HardOptimum { cost, x_labels, y_labels })
}

/// `(1/n) Σ_k (1/|C_k|) Σ_{i,j∈C_k} C(i, j)` for a single labeling.
pub fn single_partition_cost(c: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (i, &li) in labels.iter().enumerate() {
        sizes[li] += 1;
        for (j, &lj) in labels.iter().enumerate() {
            if li == lj {
                sums[li] += c[(i, j)];
            }
        }
    }
    let total: f64 = sums
        .iter()
        .zip(&sizes)
        .filter(|(_, &s)| s > 0)
        .map(|(v, &s)| v / s as f64)
        .sum();
    total / labels.len() as f64
}

/// Exhaustive minimum of the generalized K-means objective on a registered
/// cost over partitions with at most `K` blocks. Requires `n ≤ 12`, `K ≤ 3`.
pub fn brute_gen_kmeans(registered: &CostSpec, k: usize) -> Result<(f64, Vec<usize>)> {
    let c = check_size(registered, k, MAX_PARTITION_N)?;
    let scored: Vec<_> = set_partitions(c.nrows(), k)
        .into_par_iter()
        .enumerate()
        .map(|(idx, l)| (single_partition_cost(&c, &l), idx, l))
        .collect();
    Ok(argmin_by_index(scored).expect("nonempty enumeration"))
}

/// Exact K-means distortion `Σ_k Σ_{i∈C_k} ‖x_i − μ_k‖²` by enumeration.
pub fn brute_kmeans(points: &DMatrix<f64>, k: usize) -> Result<(f64, Vec<usize>)> {
    let n = points.nrows();
    let c = CostSpec::Dense(DMatrix::from_fn(n, n, |i, j| (points.row(i) - points.row(j)).norm_squared()));
    let (v, labels) = brute_gen_kmeans(&c, k)?;
    Ok((0.5 * n as f64 * v, labels))
}

/// Ratio of the rank-`n` optimum to the rank-`K` hard optimum; 1 when both
/// vanish.
pub fn true_gamma(cost: &CostSpec, k: usize) -> Result<f64> {
    let sigma = exact_assignment(cost)?;
    let opt_n = sigma.cost(cost);
    let opt_k = brute_hard_lrot(cost, k)?.cost;
    Ok(gamma_ratio(opt_n, opt_k))
}

fn gamma_ratio(opt_n: f64, opt_k: f64) -> f64 {
    if opt_k <= 1e-15 {
        1.0
    } else {
        (opt_n / opt_k).clamp(0.0, 1.0)
    }
}

/// Cost classes with distinct approximation factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostClass {
    /// Metrics of negative type, e.g. Euclidean distance: `1 + γ`.
    NegativeType,
    /// Kernel-induced costs, e.g. squared Euclidean: `1 + γ + √(2γ)`.
    Kernel,
    /// General metrics, using the asymmetry envelope `ρ ≤ 1`: `2 + γ`.
    Metric,
}

impl CostClass {
    pub fn factor(self, gamma: f64) -> f64 {
        match self {
            CostClass::NegativeType => 1.0 + gamma,
            CostClass::Kernel => 1.0 + gamma + (2.0 * gamma).sqrt(),
            CostClass::Metric => 2.0 + gamma,
        }
    }
}

impl std::str::FromStr for CostClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative-type" | "negative_type" | "l2" => Ok(CostClass::NegativeType),
            "kernel" | "sqeuclidean" | "sql2" => Ok(CostClass::Kernel),
            "metric" => Ok(CostClass::Metric),
            other => Err(Error::InvalidParameter(format!("cost class {other}"))),
        }
    }
}

/// Intermediate values of a bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Optimum of the registered problem.
    pub lhs: f64,
    pub opt_k: f64,
    pub opt_n: f64,
    pub gamma: f64,
    pub factor: f64,
    pub bound: f64,
    pub holds: bool,
    pub sigma: Permutation,
    pub registered_labels: Vec<usize>,
}

/// Solve the registered problem exactly and compare it with the factor times
/// the hard rank-`K` optimum.
pub fn verify_approximation_bound(cost: &CostSpec, k: usize, class: CostClass) -> Result<BoundReport> {
    let sigma = exact_assignment(cost)?;
    let registered = monge_register(cost, &sigma)?;
    let (lhs, registered_labels) = brute_gen_kmeans(&registered, k)?;
    let opt_k = brute_hard_lrot(cost, k)?.cost;
    let opt_n = sigma.cost(cost);
    let gamma = gamma_ratio(opt_n, opt_k);
    let factor = class.factor(gamma);
    let bound = factor * opt_k;
    Ok(BoundReport {
        lhs,
        opt_k,
        opt_n,
        gamma,
        factor,
        bound,
        holds: lhs <= bound + BOUND_SLACK,
        sigma,
        registered_labels,
    })
}

/// `min(A/B, B/A)` for the within-cluster intra-dataset sums `A` on `X` and
/// `B` on `Y`, with `Y` blocks given by `σ` of the `X` blocks.
pub fn asymmetry_coefficient(
    cxx: &DMatrix<f64>,
    cyy: &DMatrix<f64>,
    labels: &[usize],
    sigma: &Permutation,
) -> Result<f64> {
    let n = labels.len();
    if cxx.shape() != (n, n) || cyy.shape() != (n, n) || sigma.len() != n {
        return Err(Error::Dimension("intra-dataset costs".into()));
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                sx += cxx[(i, j)];
                sy += cyy[(sigma.apply(i), sigma.apply(j))];
            }
        }
    }
    if sx <= 0.0 && sy <= 0.0 {
        return Ok(1.0);
    }
    if sx <= 0.0 || sy <= 0.0 {
        return Ok(0.0);
    }
    Ok((sx / sy).min(sy / sx))
}

/// Certified lower bound on the balanced two-block registered optimum in
/// unscaled units `Σ_k (1/|C_k|) Σ_{i,j∈C_k} C̃(i, j)`.
///
/// Block type counts are enumerated. For given counts, a member `i` of type
/// `A` pays at least its diagonal entry plus, for every type `B`, the sum of
/// its smallest entries towards the other members of `B` in the block; the
/// block then pays at least the `c_A` cheapest such members of each type.
pub fn sigma_respecting_lower_bound(registered: &DMatrix<f64>, types: &[usize]) -> Result<f64> {
    let n = types.len();
    if registered.shape() != (n, n) || n < 2 || n % 2 == 1 {
        return Err(Error::Dimension(format!("{n} points for a balanced split")));
    }
    let t = types.iter().max().unwrap() + 1;
    let members: Vec<Vec<usize>> = (0..t).map(|a| (0..n).filter(|&i| types[i] == a).collect()).collect();
    let count: Vec<usize> = members.iter().map(Vec::len).collect();
    // prefix[i][b][r] = sum of the r smallest C̃(i, j), j of type b, j ≠ i.
    let prefix: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            members
                .iter()
                .map(|js| {
                    let mut row: Vec<f64> = js.iter().filter(|&&j| j != i).map(|&j| registered[(i, j)]).collect();
                    row.sort_by(f64::total_cmp);
                    let mut p = Vec::with_capacity(row.len() + 1);
                    p.push(0.0);
                    for v in row {
                        p.push(p.last().unwrap() + v);
                    }
                    p
                })
                .collect()
        })
        .collect();
    let half = n / 2;
    let block = |c: &[usize]| -> f64 {
        let mut total = 0.0;
        for a in 0..t {
            if c[a] == 0 {
                continue;
            }
            let mut pay: Vec<f64> = members[a]
                .iter()
                .map(|&i| {
                    let mut v = registered[(i, i)];
                    for b in 0..t {
                        let r = if a == b { c[b] - 1 } else { c[b] };
                        v += prefix[i][b][r];
                    }
                    v
                })
                .collect();
            pay.sort_by(f64::total_cmp);
            total += pay[..c[a]].iter().sum::<f64>();
        }
        total / half as f64
    };
    let mut best = f64::INFINITY;
    let mut c1 = vec![0usize; t];
    fn rec(
        a: usize,
        left: usize,
        count: &[usize],
        c1: &mut Vec<usize>,
        best: &mut f64,
        block: &dyn Fn(&[usize]) -> f64,
    ) {
        if a == count.len() {
            if left == 0 {
                let c2: Vec<usize> = count.iter().zip(c1.iter()).map(|(n, c)| n - c).collect();
                *best = best.min(block(c1) + block(&c2));
            }
            return;
        }
        let rest: usize = count[a + 1..].iter().sum();
        for v in left.saturating_sub(rest)..=count[a].min(left) {
            c1[a] = v;
            rec(a + 1, left - v, count, c1, best, block);
        }
        c1[a] = 0;
    }
    rec(0, half, &count, &mut c1, &mut best, &block);
    Ok(best)
}

/// Exact balanced two-block registered optimum by enumeration, in the same
/// units as [`sigma_respecting_lower_bound`]. Requires even `n ≤ 20`.
pub fn brute_balanced_bipartition(registered: &DMatrix<f64>) -> Result<(f64, Vec<usize>)> {
    let n = registered.nrows();
    if registered.ncols() != n || n % 2 == 1 || n < 2 {
        return Err(Error::Dimension(format!("{n} points for a balanced split")));
    }
    if n > 20 {
        return Err(Error::TooLarge(format!("n = {n}")));
    }
    let half = n / 2;
    let masks: Vec<u32> = (0u32..1 << (n - 1))
        .filter(|m| m.count_ones() as usize == half - 1)
        .collect();
    let scored: Vec<_> = masks
        .into_par_iter()
        .enumerate()
        .map(|(idx, m)| {
            let labels: Vec<usize> = (0..n)
                .map(|i| if i == 0 || m & (1 << (i - 1)) != 0 { 0 } else { 1 })
                .collect();
            (single_partition_cost(registered, &labels) * n as f64, idx, labels)
        })
        .collect();
    Ok(argmin_by_index(scored).expect("nonempty enumeration"))
}

/// Random square instance of the given class on `n` points per side.
///
/// Negative type: Euclidean distances of uniform points in `[0, 1]²`.
/// Kernel: squared Euclidean distances of the same. Metric: shortest-path
/// distances of a complete graph on `2n` nodes with edge weights uniform on
/// `[0.1, 1]`, `X` the first `n` nodes and `Y` the rest.
pub fn random_instance(class: CostClass, n: usize, seed: u64) -> Result<CostSpec> {
    let mut rng = SeedStream::new(seed).rng("instance");
    let mut pts = |m: usize| DMatrix::from_fn(m, 2, |_, _| rng.random::<f64>());
    match class {
        CostClass::NegativeType => {
            let (x, y) = (pts(n), pts(n));
            CostSpec::euclidean(&x, &y)
        }
        CostClass::Kernel => {
            let (x, y) = (pts(n), pts(n));
            Ok(CostSpec::Dense(CostSpec::sq_euclidean(x, y)?.to_dense()?))
        }
        CostClass::Metric => {
            let m = 2 * n;
            let mut d = DMatrix::from_element(m, m, f64::INFINITY);
            for i in 0..m {
                d[(i, i)] = 0.0;
                for j in i + 1..m {
                    let w = rng.random_range(0.1..1.0);
                    d[(i, j)] = w;
                    d[(j, i)] = w;
                }
            }
            for k in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        let via = d[(i, k)] + d[(k, j)];
                        if via < d[(i, j)] {
                            d[(i, j)] = via;
                        }
                    }
                }
            }
            CostSpec::dense(d.view((0, n), (n, n)).into_owned())
        }
    }
}
