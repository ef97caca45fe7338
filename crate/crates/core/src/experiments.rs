//! Benchmark drivers shared by the command line, the examples and the
//! acceptance tests.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::datasets::{gen_fragmented_hypercube, gen_moons_gaussians, gen_shifted_gaussians};
use crate::error::Result;
use crate::fullrank::{exact_assignment, SinkhornConfig};
use crate::pipeline::{transport_cluster, w2_estimate, InitStrategy, Registration, TcConfig};
use crate::plan::CostSpec;
use crate::rng::SeedStream;

/// Population value of `W₂²` on the fragmented hypercube.
pub const HYPERCUBE_W2: f64 = 8.0;

/// Default sample sizes of the estimation benchmark.
pub const DEFAULT_N_GRID: [usize; 8] = [29, 36, 44, 54, 66, 80, 98, 119];

/// GKMS iteration cap of the sensitivity sweep; runs stop on convergence.
pub const SWEEP_GKMS_ITERS: usize = 5000;

/// Default entropic regularization grid of the sensitivity sweep.
pub const DEFAULT_EPSILONS: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

/// Plug-in `W₂²` between two empirical measures of equal size.
pub fn plugin_w2(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let cost = CostSpec::sq_euclidean(x.clone(), y.clone())?;
    Ok(exact_assignment(&cost)?.cost(&cost))
}

/// Rank-`K` estimate of `W₂²` from the barycentres of a transport clustering
/// started from a random factor.
pub fn tc_w2(x: &DMatrix<f64>, y: &DMatrix<f64>, rank: usize, seed: u64) -> Result<f64> {
    tc_w2_with(x, y, rank, InitStrategy::Random, seed)
}

/// [`tc_w2`] with an explicit initialization strategy.
pub fn tc_w2_with(x: &DMatrix<f64>, y: &DMatrix<f64>, rank: usize, init: InitStrategy, seed: u64) -> Result<f64> {
    let cost = CostSpec::sq_euclidean(x.clone(), y.clone())?;
    let mut cfg = TcConfig::new(rank, seed);
    cfg.init = init;
    let out = transport_cluster(Some(x), Some(y), &cost, &cfg)?;
    w2_estimate(&out.plan, x, y)
}

/// Mean absolute errors at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct W2Row {
    pub n: usize,
    pub plugin_error: f64,
    pub tc_error: f64,
    pub plugin_mean: f64,
    pub tc_mean: f64,
}

/// Fresh hypercube samples per `(n, run)`; rows sorted by `n`.
pub fn w2_benchmark(n_grid: &[usize], d: usize, rank: usize, runs: usize, seed: u64) -> Result<Vec<W2Row>> {
    w2_benchmark_with(n_grid, d, rank, runs, InitStrategy::Random, seed)
}

/// [`w2_benchmark`] with an explicit initialization strategy for the
/// low-rank estimate.
pub fn w2_benchmark_with(
    n_grid: &[usize],
    d: usize,
    rank: usize,
    runs: usize,
    init: InitStrategy,
    seed: u64,
) -> Result<Vec<W2Row>> {
    let seeds = SeedStream::new(seed);
    let jobs: Vec<(usize, usize)> = n_grid
        .iter()
        .flat_map(|&n| (0..runs).map(move |r| (n, r)))
        .collect();
    let est: Vec<(usize, f64, f64)> = jobs
        .into_par_iter()
        .map(|(n, r)| {
            let s = seeds.derive(&format!("w2/{n}/{r}"));
            let (x, y) = gen_fragmented_hypercube(n, d, s)?;
            let p = plugin_w2(&x.points, &y.points)?;
            let t = tc_w2_with(&x.points, &y.points, rank.min(n), init, s)?;
            Ok((n, p, t))
        })
        .collect::<Result<_>>()?;
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    Ok(grid
        .into_iter()
        .map(|n| {
            let rows: Vec<_> = est.iter().filter(|e| e.0 == n).collect();
            let m = rows.len() as f64;
            let mean = |f: &dyn Fn(&(usize, f64, f64)) -> f64| rows.iter().map(|e| f(e)).sum::<f64>() / m;
            W2Row {
                n,
                plugin_error: mean(&|e| (e.1 - HYPERCUBE_W2).abs()),
                tc_error: mean(&|e| (e.2 - HYPERCUBE_W2).abs()),
                plugin_mean: mean(&|e| e.1),
                tc_mean: mean(&|e| e.2),
            }
        })
        .collect())
}

/// Final cost per regularization strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub parameter: f64,
    pub cost: f64,
}

/// Kantorovich-registered runs on one moons/eight-Gaussians instance, one per
/// `ε`, all other settings and seeds shared. Each `ε` is relative to
/// `max |C|`, and GKMS runs to convergence.
pub fn epsilon_sweep(n: usize, rank: usize, sigma2: f64, epsilons: &[f64], seed: u64) -> Result<Vec<SweepRow>> {
    let (x, y) = gen_moons_gaussians(n, sigma2, seed)?;
    let cost = CostSpec::sq_euclidean(x.points.clone(), y.points.clone())?;
    let scale = cost.max_abs();
    epsilons
        .par_iter()
        .map(|&eps| {
            let mut cfg = TcConfig::new(rank, seed);
            cfg.registration = Registration::Kantorovich;
            cfg.sinkhorn = SinkhornConfig::with_epsilon(eps * scale);
            cfg.gkms.max_iters = SWEEP_GKMS_ITERS;
            let out = transport_cluster(Some(&x.points), Some(&y.points), &cost, &cfg)?;
            Ok(SweepRow { parameter: eps, cost: out.cost })
        })
        .collect()
}

/// Final costs from the two initialization strategies on one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitAblation {
    pub registered: f64,
    pub random: f64,
    pub registered_init: Option<f64>,
}

/// Registered versus random initialization on shifted Gaussians with
/// `rank` planted clusters.
pub fn init_ablation(n: usize, rank: usize, sigma2: f64, seed: u64) -> Result<InitAblation> {
    let (x, y, _) = gen_shifted_gaussians(n, rank, sigma2, seed)?;
    let cost = CostSpec::sq_euclidean(x.points.clone(), y.points.clone())?;
    let run = |init: InitStrategy| {
        let mut cfg = TcConfig::new(rank, seed);
        cfg.init = init;
        transport_cluster(Some(&x.points), Some(&y.points), &cost, &cfg)
    };
    let reg = run(InitStrategy::Registered)?;
    let rnd = run(InitStrategy::Random)?;
    Ok(InitAblation {
        registered: reg.cost,
        random: rnd.cost,
        registered_init: reg.init_cost,
    })
}

/// Final cost for each rank on a fixed instance.
pub fn rank_sweep(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cost: &CostSpec,
    ranks: &[usize],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut ranks = ranks.to_vec();
    ranks.sort_unstable();
    ranks
        .par_iter()
        .map(|&k| {
            let out = transport_cluster(Some(x), Some(y), cost, &TcConfig::new(k, seed))?;
            Ok(SweepRow { parameter: k as f64, cost: out.cost })
        })
        .collect()
}
