use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use transport_clustering::datasets::{
    build_euclidean_lb, build_sqeuclidean_lb, gen_fragmented_hypercube, gen_moons_gaussians, gen_sbm_cost,
    gen_shifted_gaussians, lb_non_monge_labels,
};
use transport_clustering::evaluation::{ami, ari, cta};
use transport_clustering::experiments::{
    epsilon_sweep, init_ablation, rank_sweep, w2_benchmark_with, DEFAULT_EPSILONS, DEFAULT_N_GRID, HYPERCUBE_W2,
};
use transport_clustering::fullrank::{exact_assignment, SinkhornConfig};
use transport_clustering::genkmeans::round_to_hard;
use transport_clustering::oracle::{random_instance, sigma_respecting_lower_bound, verify_approximation_bound, CostClass};
use transport_clustering::pipeline::{
    transport_cluster, transport_cluster_kantorovich, InitStrategy, Registration, Solver, TcConfig, TcResult,
};
use transport_clustering::registration::monge_register;
use transport_clustering::rng::SeedStream;
use transport_clustering::{partition_cost, CostSpec, LabeledPointCloud, Permutation, ProbVector};

use crate::error::{CliError, CliResult};
use crate::io::{read_matrix, read_points, read_weights, write_json, write_matrix, write_points, write_rows};
use crate::{
    AblateArgs, CostClassArg, Dataset, EstimateArgs, GenerateArgs, InitArg, LowerBound, Metric, RegistrationArg,
    SolveArgs, SolverArg, Sweep, VerifyArgs,
};

fn name_of<E: ValueEnum>(v: &E) -> String {
    v.to_possible_value().map(|p| p.get_name().to_owned()).unwrap_or_default()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn init_strategy(a: InitArg) -> InitStrategy {
    match a {
        InitArg::Registered => InitStrategy::Registered,
        InitArg::Random => InitStrategy::Random,
    }
}

// generate

#[derive(Serialize)]
struct Manifest {
    dataset: String,
    seed: u64,
    n_x: usize,
    n_y: usize,
    dim: usize,
    files: Vec<PathBuf>,
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let (x, y, cost) = match a.dataset {
        Dataset::Moons8g => {
            let (x, y) = gen_moons_gaussians(a.n, a.sigma2, a.seed)?;
            (x, y, None)
        }
        Dataset::ShiftedGaussians => {
            let (x, y, _) = gen_shifted_gaussians(a.n, a.k, a.sigma2, a.seed)?;
            (x, y, None)
        }
        Dataset::Sbm => {
            if a.k == 0 || a.n < a.k {
                return Err(CliError::Usage(format!("need n >= k >= 1, got n = {}, k = {}", a.n, a.k)));
            }
            let (cost, labels) = gen_sbm_cost(a.k, a.n / a.k, a.p, a.q, (a.weight_lo, a.weight_hi), a.seed)?;
            let ids = DMatrix::from_fn(labels.len(), 1, |i, _| i as f64);
            let side = LabeledPointCloud::new(ids, Some(labels), a.seed)?;
            (side.clone(), side, Some(cost.to_dense()?))
        }
        Dataset::Hypercube => {
            let (x, y) = gen_fragmented_hypercube(a.n, a.d, a.seed)?;
            (x, y, None)
        }
        Dataset::LbEuclidean => {
            let (x, y) = build_euclidean_lb(a.k, a.eps_geom)?;
            (x, y, None)
        }
        Dataset::LbSqeuclidean => {
            let (x, y) = build_sqeuclidean_lb(a.k, a.eps_geom)?;
            (x, y, None)
        }
    };

    create_dir(&a.out)?;
    let mut files = vec![a.out.join("X.csv"), a.out.join("Y.csv")];
    write_points(&files[0], &x.points, x.labels.as_deref())?;
    write_points(&files[1], &y.points, y.labels.as_deref())?;
    if let (Some(lx), Some(ly)) = (&x.labels, &y.labels) {
        let path = a.out.join("labels.csv");
        #[derive(Serialize)]
        struct Row {
            label_x: usize,
            label_y: usize,
        }
        let rows: Vec<Row> = lx.iter().zip(ly).map(|(&label_x, &label_y)| Row { label_x, label_y }).collect();
        write_rows(Some(&path), &rows)?;
        files.push(path);
    }
    if let Some(c) = &cost {
        let path = a.out.join("cost.csv");
        write_matrix(&path, c)?;
        files.push(path);
    }
    write_json(
        None,
        &Manifest {
            dataset: name_of(&a.dataset),
            seed: a.seed,
            n_x: x.len(),
            n_y: y.len(),
            dim: x.dim(),
            files,
        },
    )
}

// solve

#[derive(Serialize)]
struct RuntimeMs {
    transport: f64,
    registration: f64,
    init: f64,
    solve: f64,
    total: f64,
}

#[derive(Serialize)]
struct ResolvedConfig {
    rank: usize,
    metric: Option<String>,
    cost_file: Option<PathBuf>,
    epsilon: f64,
    sinkhorn_max_iters: usize,
    sinkhorn_tolerance: f64,
    allow_unconverged_sinkhorn: bool,
    gkms_step: f64,
    gkms_iters: usize,
    gkms_g_floor: f64,
    blend: f64,
    registration: String,
    solver: String,
    init: String,
    exact_threshold: usize,
    seed: u64,
}

#[derive(Serialize)]
struct SolveReport {
    n: usize,
    m: usize,
    cost: f64,
    full_rank_cost: f64,
    gamma_achieved: f64,
    init_cost: Option<f64>,
    iterations: usize,
    cost_history: Vec<f64>,
    solver_used: String,
    sinkhorn_converged: bool,
    psd_defect: Option<f64>,
    ari_x: Option<f64>,
    ari_y: Option<f64>,
    ami_x: Option<f64>,
    ami_y: Option<f64>,
    cta: Option<f64>,
    runtime_ms: RuntimeMs,
    config: ResolvedConfig,
    files: Vec<PathBuf>,
}

fn read_labels(path: &Path, n: usize) -> CliResult<Vec<usize>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 || m.nrows() != n {
        return Err(CliError::parse(path, format!("expected {n} labels in one column")));
    }
    m.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::parse(path, format!("label {v} is not a non-negative integer")))
            }
        })
        .collect()
}

struct Side {
    points: Option<DMatrix<f64>>,
    labels: Option<Vec<usize>>,
}

fn load_side(points: Option<&PathBuf>, labels: Option<&PathBuf>, n: Option<usize>) -> CliResult<Side> {
    let mut side = Side { points: None, labels: None };
    if let Some(p) = points {
        let f = read_points(p)?;
        side.labels = f.labels;
        side.points = Some(f.points);
    }
    if let Some(l) = labels {
        let n = n
            .or(side.points.as_ref().map(|p| p.nrows()))
            .ok_or_else(|| CliError::Usage("labels need points or a cost matrix".into()))?;
        side.labels = Some(read_labels(l, n)?);
    }
    Ok(side)
}

pub fn solve(a: &SolveArgs) -> CliResult<()> {
    let dense = a.cost.as_deref().map(read_matrix).transpose()?;
    let shape = dense.as_ref().map(|c| c.shape());
    let xs = load_side(a.x.as_ref(), a.labels_x.as_ref(), shape.map(|s| s.0))?;
    let ys = load_side(a.y.as_ref(), a.labels_y.as_ref(), shape.map(|s| s.1))?;

    let cost = match (dense, &xs.points, &ys.points) {
        (Some(c), _, _) => CostSpec::dense(c)?,
        (None, Some(x), Some(y)) => match a.metric {
            Metric::Sqeuclidean => CostSpec::sq_euclidean(x.clone(), y.clone())?,
            Metric::Euclidean => CostSpec::euclidean(x, y)?,
        },
        _ => return Err(CliError::Usage("give --x and --y, or --cost".into())),
    };
    let (n, m) = (cost.nrows(), cost.ncols());
    for (side, pts, len) in [("x", &xs.points, n), ("y", &ys.points, m)] {
        if pts.as_ref().is_some_and(|p| p.nrows() != len) {
            return Err(CliError::Usage(format!("--{side} has a different row count than the cost matrix")));
        }
    }

    let mut cfg = TcConfig::new(a.rank, a.seed);
    cfg.sinkhorn = SinkhornConfig::with_epsilon(a.epsilon);
    cfg.gkms.step_size = a.gkms_step;
    cfg.gkms.max_iters = a.gkms_iters;
    cfg.blend_lambda = a.blend;
    cfg.registration = match a.registration {
        RegistrationArg::Monge => Registration::Monge,
        RegistrationArg::Kantorovich => Registration::Kantorovich,
    };
    cfg.solver = match a.solver {
        SolverArg::Gkms => Solver::Gkms,
        SolverArg::Kernel => Solver::KernelReduce,
        SolverArg::Auto => Solver::Auto,
    };
    cfg.init = init_strategy(a.init);
    cfg.allow_unconverged_sinkhorn = !a.strict_sinkhorn;

    let weighted = a.weights_x.is_some() || a.weights_y.is_some();
    let out: TcResult = if weighted {
        if cfg.registration != Registration::Kantorovich {
            return Err(CliError::Usage("weights need --registration kantorovich".into()));
        }
        let weights = |p: Option<&PathBuf>, len: usize| -> CliResult<ProbVector> {
            match p {
                Some(p) => {
                    let w = read_weights(p)?;
                    if w.len() != len {
                        return Err(CliError::parse(p, format!("expected {len} weights")));
                    }
                    Ok(ProbVector::normalized(w)?)
                }
                None => Ok(ProbVector::uniform(len)),
            }
        };
        let (wa, wb) = (weights(a.weights_x.as_ref(), n)?, weights(a.weights_y.as_ref(), m)?);
        transport_cluster_kantorovich(xs.points.as_ref(), ys.points.as_ref(), &wa, &wb, &cost, &cfg)?
    } else {
        transport_cluster(xs.points.as_ref(), ys.points.as_ref(), &cost, &cfg)?
    };

    let found_x = round_to_hard(out.plan.q(), &out.row_marginal).labels;
    let found_y = round_to_hard(out.plan.r(), &out.col_marginal).labels;
    let score = |f: fn(&[usize], &[usize]) -> transport_clustering::Result<f64>,
                 found: &[usize],
                 truth: &Option<Vec<usize>>| {
        truth.as_deref().map(|t| f(found, t)).transpose()
    };
    let cta_value = match (&xs.labels, &ys.labels) {
        (Some(lx), Some(ly)) => Some(cta(&out.plan, lx, ly)?),
        _ => None,
    };

    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(dir)?;
    let files = vec![dir.join("Q.csv"), dir.join("R.csv"), dir.join("g.csv")];
    write_matrix(&files[0], out.plan.q())?;
    write_matrix(&files[1], out.plan.r())?;
    let g = out.plan.g().weights();
    write_matrix(&files[2], &DMatrix::from_column_slice(g.len(), 1, g.as_slice()))?;

    let report = SolveReport {
        n,
        m,
        cost: out.cost,
        full_rank_cost: out.full_rank_cost,
        gamma_achieved: out.gamma,
        init_cost: out.init_cost,
        iterations: out.gkms_iterations,
        cost_history: out.cost_history.clone(),
        solver_used: format!("{:?}", out.solver_used).to_lowercase(),
        sinkhorn_converged: out.sinkhorn_converged,
        psd_defect: out.psd_defect,
        ari_x: score(ari, &found_x, &xs.labels)?,
        ari_y: score(ari, &found_y, &ys.labels)?,
        ami_x: score(ami, &found_x, &xs.labels)?,
        ami_y: score(ami, &found_y, &ys.labels)?,
        cta: cta_value,
        runtime_ms: RuntimeMs {
            transport: out.timings.transport_ms,
            registration: out.timings.registration_ms,
            init: out.timings.init_ms,
            solve: out.timings.solve_ms,
            total: out.timings.total_ms,
        },
        config: ResolvedConfig {
            rank: cfg.rank,
            metric: a.cost.is_none().then(|| name_of(&a.metric)),
            cost_file: a.cost.clone(),
            epsilon: cfg.sinkhorn.epsilon,
            sinkhorn_max_iters: cfg.sinkhorn.max_iters,
            sinkhorn_tolerance: cfg.sinkhorn.tolerance,
            allow_unconverged_sinkhorn: cfg.allow_unconverged_sinkhorn,
            gkms_step: cfg.gkms.step_size,
            gkms_iters: cfg.gkms.max_iters,
            gkms_g_floor: cfg.gkms.g_floor_for(cfg.rank),
            blend: cfg.blend_lambda,
            registration: name_of(&a.registration),
            solver: name_of(&a.solver),
            init: name_of(&a.init),
            exact_threshold: cfg.exact_threshold,
            seed: cfg.seed,
        },
        files,
    };
    write_json(Some(&a.out), &report)
}

// estimate-w2

#[derive(Serialize)]
struct W2Csv {
    n: usize,
    plugin: f64,
    tc: f64,
    truth: f64,
    plugin_error: f64,
    tc_error: f64,
}

pub fn estimate_w2(a: &EstimateArgs) -> CliResult<()> {
    let grid = a.n_grid.clone().unwrap_or_else(|| DEFAULT_N_GRID.to_vec());
    if a.runs == 0 || grid.is_empty() {
        return Err(CliError::Usage("need at least one run and one sample size".into()));
    }
    let rows: Vec<W2Csv> = w2_benchmark_with(&grid, a.d, a.rank, a.runs, init_strategy(a.init), a.seed)?
        .into_iter()
        .map(|r| W2Csv {
            n: r.n,
            plugin: r.plugin_mean,
            tc: r.tc_mean,
            truth: HYPERCUBE_W2,
            plugin_error: r.plugin_error,
            tc_error: r.tc_error,
        })
        .collect();
    write_rows(a.out.as_deref(), &rows)
}

// verify-bounds

#[derive(Serialize)]
struct Violation {
    trial: usize,
    seed: u64,
    lhs: f64,
    bound: f64,
}

#[derive(Serialize)]
struct LowerBoundReport {
    construction: String,
    k: usize,
    eps: f64,
    points: usize,
    monge_cost: f64,
    monge_is_identity: bool,
    registered_lower_bound: f64,
    non_monge_cost: f64,
    ratio: f64,
    min_ratio: f64,
    passed: bool,
}

#[derive(Serialize)]
struct BoundsReport {
    cost_class: String,
    n: usize,
    rank: usize,
    trials: usize,
    violations: Vec<Violation>,
    max_lhs_over_bound: f64,
    mean_gamma: f64,
    lower_bound: Option<LowerBoundReport>,
}

fn lower_bound_check(kind: LowerBound, k: usize, eps: f64, min_ratio: Option<f64>) -> CliResult<Option<LowerBoundReport>> {
    let (x, y, cost, default_ratio) = match kind {
        LowerBound::None => return Ok(None),
        LowerBound::Euclidean => {
            let (x, y) = build_euclidean_lb(k, eps)?;
            let c = CostSpec::euclidean(&x.points, &y.points)?;
            (x, y, c, 1.9)
        }
        LowerBound::Sqeuclidean => {
            let (x, y) = build_sqeuclidean_lb(k, eps)?;
            let c = CostSpec::dense(CostSpec::sq_euclidean(x.points.clone(), y.points.clone())?.to_dense()?)?;
            (x, y, c, 2.85)
        }
    };
    let n = x.len();
    debug_assert_eq!(n, y.len());
    let sigma = exact_assignment(&cost)?;
    let registered = monge_register(&cost, &sigma)?.to_dense()?;
    let types = x.labels.as_deref().unwrap_or_default();
    let forced = sigma_respecting_lower_bound(&registered, types)?;
    let (xl, yl) = lb_non_monge_labels(k);
    let free = partition_cost(&cost, &xl, &yl);
    let ratio = forced / free;
    let min_ratio = min_ratio.unwrap_or(default_ratio);
    Ok(Some(LowerBoundReport {
        construction: name_of(&kind),
        k,
        eps,
        points: n,
        monge_cost: sigma.cost(&cost) * n as f64,
        monge_is_identity: sigma == Permutation::identity(n),
        registered_lower_bound: forced,
        non_monge_cost: free,
        ratio,
        min_ratio,
        passed: ratio >= min_ratio,
    }))
}

pub fn verify_bounds(a: &VerifyArgs) -> CliResult<()> {
    let class = match a.cost_class {
        CostClassArg::L2 => CostClass::NegativeType,
        CostClassArg::Sql2 => CostClass::Kernel,
        CostClassArg::Metric => CostClass::Metric,
    };
    let seeds = SeedStream::new(a.seed);
    let results: Vec<(usize, u64, f64, f64, f64, bool)> = (0..a.trials)
        .into_par_iter()
        .map(|t| {
            let s = seeds.derive(&format!("trial/{t}"));
            let cost = random_instance(class, a.n, s)?;
            let r = verify_approximation_bound(&cost, a.rank, class)?;
            Ok((t, s, r.lhs, r.bound, r.gamma, r.holds))
        })
        .collect::<transport_clustering::Result<_>>()?;

    let violations: Vec<Violation> = results
        .iter()
        .filter(|r| !r.5)
        .map(|&(trial, seed, lhs, bound, _, _)| Violation { trial, seed, lhs, bound })
        .collect();
    let max_ratio = results
        .iter()
        .map(|r| if r.3 > 0.0 { r.2 / r.3 } else if r.2 > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    let mean_gamma = results.iter().map(|r| r.4).sum::<f64>() / results.len().max(1) as f64;
    let lower_bound = lower_bound_check(a.lb, a.lb_k, a.lb_eps, a.lb_min_ratio)?;

    let failures = violations.len() + usize::from(lower_bound.as_ref().is_some_and(|l| !l.passed));
    let report = BoundsReport {
        cost_class: name_of(&a.cost_class),
        n: a.n,
        rank: a.rank,
        trials: a.trials,
        violations,
        max_lhs_over_bound: max_ratio,
        mean_gamma,
        lower_bound,
    };
    write_json(a.out.as_deref(), &report)?;
    if failures > 0 {
        return Err(CliError::Violation(failures));
    }
    Ok(())
}

// ablate

#[derive(Serialize)]
struct EpsilonRow {
    epsilon: f64,
    cost: f64,
}

#[derive(Serialize)]
struct InitRow {
    strategy: &'static str,
    cost: f64,
    init_cost: Option<f64>,
}

#[derive(Serialize)]
struct RankRow {
    rank: usize,
    cost: f64,
}

pub fn ablate(a: &AblateArgs) -> CliResult<()> {
    let out = a.out.as_deref();
    match a.sweep {
        Sweep::Epsilon => {
            let eps = a.epsilons.clone().unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
            let rows: Vec<EpsilonRow> = epsilon_sweep(a.n, a.rank, a.sigma2, &eps, a.seed)?
                .into_iter()
                .map(|r| EpsilonRow { epsilon: r.parameter, cost: r.cost })
                .collect();
            write_rows(out, &rows)
        }
        Sweep::Init => {
            let r = init_ablation(a.n, a.rank, a.sigma2, a.seed)?;
            let rows = [
                InitRow { strategy: "registered", cost: r.registered, init_cost: r.registered_init },
                InitRow { strategy: "random", cost: r.random, init_cost: None },
            ];
            write_rows(out, &rows)
        }
        Sweep::Rank => {
            let (x, y) = gen_moons_gaussians(a.n, a.sigma2, a.seed)?;
            let cost = CostSpec::sq_euclidean(x.points.clone(), y.points.clone())?;
            let rows: Vec<RankRow> = rank_sweep(&x.points, &y.points, &cost, &a.ranks, a.seed)?
                .into_iter()
                .map(|r| RankRow { rank: r.parameter as usize, cost: r.cost })
                .collect();
            write_rows(out, &rows)
        }
    }
}
