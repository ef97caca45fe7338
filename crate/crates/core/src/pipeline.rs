//! End-to-end transport clustering.
//!
//! [`transport_cluster`] solves the square uniform problem: an optimal
//! permutation registers the cost, the registered cost is clustered, and the
//! clustering `Q` is carried across as `R = P_σᵀ Q`.
//! [`transport_cluster_kantorovich`] does the same with an entropic coupling,
//! which also covers `n ≠ m` and non-uniform marginals.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;

use crate::clustering::{kmeans, KMeansConfig};
use crate::error::{Error, Result};
use crate::fullrank::{exact_assignment, extract_permutation, sinkhorn, SinkhornConfig, SinkhornOutput};
use crate::genkmeans::{
    apply_floors, gen_kmeans_cost, gkms_solve, hard_cost, kernel_reduce, round_to_hard, GkmsConfig,
};
use crate::plan::{
    col_sums, full_cost, lrot_cost, CostSpec, Coupling, LowRankPlan, Permutation, ProbVector,
};
use crate::registration::{kantorovich_register, monge_register, recover_second_factor};
use crate::rng::SeedStream;

/// Largest `n` solved by the Hungarian method in the first stage.
pub const EXACT_THRESHOLD: usize = 2048;
/// Largest `n` for which the spectral reduction is attempted.
pub const KERNEL_MAX: usize = 2048;
/// Spectral defect below which the kernel reduction is trusted.
pub const PSD_DEFECT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Registration {
    Monge,
    Kantorovich,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Gkms,
    KernelReduce,
    /// Kernel reduction when the registered cost is numerically CND, GKMS
    /// otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Co-clustering candidates from K-means on both sides.
    Registered,
    /// A random row-feasible factor only.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcConfig {
    pub rank: usize,
    pub sinkhorn: SinkhornConfig,
    pub gkms: GkmsConfig,
    pub kmeans: KMeansConfig,
    pub blend_lambda: f64,
    pub registration: Registration,
    pub solver: Solver,
    pub init: InitStrategy,
    pub seed: u64,
    pub exact_threshold: usize,
    /// Use the rounded coupling even when Sinkhorn ran out of iterations.
    pub allow_unconverged_sinkhorn: bool,
}

impl TcConfig {
    pub fn new(rank: usize, seed: u64) -> Self {
        let seeds = SeedStream::new(seed);
        Self {
            rank,
            sinkhorn: SinkhornConfig::default(),
            gkms: GkmsConfig {
                seed: seeds.derive("gkms"),
                ..GkmsConfig::default()
            },
            kmeans: KMeansConfig::new(rank, seeds.derive("kmeans")),
            blend_lambda: 0.5,
            registration: Registration::Monge,
            solver: Solver::Gkms,
            init: InitStrategy::Registered,
            seed,
            exact_threshold: EXACT_THRESHOLD,
            allow_unconverged_sinkhorn: true,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.rank == 0 || self.rank > n {
            return Err(Error::TooManyClusters { k: self.rank, n });
        }
        if !(0.0..=1.0).contains(&self.blend_lambda) {
            return Err(Error::InvalidParameter(format!(
                "blend lambda {}",
                self.blend_lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub transport_ms: f64,
    pub registration_ms: f64,
    pub init_ms: f64,
    pub solve_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcResult {
    pub plan: LowRankPlan,
    pub row_marginal: ProbVector,
    pub col_marginal: ProbVector,
    /// Monge registration.
    pub sigma: Option<Permutation>,
    /// Kantorovich registration.
    pub coupling: Option<Coupling>,
    /// `lrot_cost(C, plan)`.
    pub cost: f64,
    /// Cost of the full-rank plan used for registration.
    pub full_rank_cost: f64,
    /// `full_rank_cost / cost`, with `0/0 = 1`.
    pub gamma: f64,
    /// Registered cost of the hard initialization, when one was built.
    pub init_cost: Option<f64>,
    pub cost_history: Vec<f64>,
    pub gkms_iterations: usize,
    pub psd_defect: Option<f64>,
    pub solver_used: Solver,
    pub sinkhorn_converged: bool,
    pub timings: StageTimings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Mean entry of `C`, without materializing it.
fn mean_cost(cost: &CostSpec) -> Result<f64> {
    let (n, m) = (cost.nrows(), cost.ncols());
    let ones = DMatrix::from_element(m, 1, 1.0);
    Ok(cost.mul_right(&ones)?.sum() / (n * m) as f64)
}

/// Costs below `1e-12 × |mean(C)|` count as zero.
fn gamma_ratio(full: f64, achieved: f64, scale: f64) -> f64 {
    let zero = 1e-12 * scale.max(f64::MIN_POSITIVE);
    if achieved.abs() <= zero && full.abs() <= zero {
        1.0
    } else if achieved == 0.0 {
        f64::INFINITY
    } else {
        full / achieved
    }
}

/// Which side produced the registered initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSource {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredInit {
    /// Hard labels of the source points.
    pub labels: Vec<usize>,
    pub source: InitSource,
    /// Registered cost of the candidate from `X`.
    pub cost_x: f64,
    /// Registered cost of the candidate from `Y`, pulled back through `σ`.
    pub cost_y: f64,
}

impl RegisteredInit {
    pub fn cost(&self) -> f64 {
        self.cost_x.min(self.cost_y)
    }
}

fn side_configs(cfg: &KMeansConfig, k: usize) -> (KMeansConfig, KMeansConfig) {
    let seeds = SeedStream::new(cfg.seed);
    (
        KMeansConfig {
            k,
            seed: seeds.derive("x"),
            ..*cfg
        },
        KMeansConfig {
            k,
            seed: seeds.derive("y"),
            ..*cfg
        },
    )
}

/// K-means on each side; keeps whichever co-clustering has the lower
/// registered cost (ties favour `X`).
pub fn registered_init(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cost: &CostSpec,
    sigma: &Permutation,
    k: usize,
    cfg: &KMeansConfig,
) -> Result<RegisteredInit> {
    let n = x.nrows();
    if y.nrows() != n || sigma.len() != n {
        return Err(Error::Dimension("registered init needs n == m".into()));
    }
    let registered = monge_register(cost, sigma)?;
    let (cx, cy) = side_configs(cfg, k);
    let lx = kmeans(x, &cx)?.assignment.labels;
    let ly = kmeans(y, &cy)?.assignment.labels;
    let pulled: Vec<usize> = (0..n).map(|i| ly[sigma.apply(i)]).collect();
    let u = ProbVector::uniform(n);
    let cost_x = hard_cost(&registered, &lx, &u)?;
    let cost_y = hard_cost(&registered, &pulled, &u)?;
    Ok(if cost_x <= cost_y {
        RegisteredInit {
            labels: lx,
            source: InitSource::X,
            cost_x,
            cost_y,
        }
    } else {
        RegisteredInit {
            labels: pulled,
            source: InitSource::Y,
            cost_x,
            cost_y,
        }
    })
}

/// Random strictly positive `Q'` with `Q'1 = a`: each row is `a_i` times a
/// flat Dirichlet draw.
pub fn random_factor(a: &ProbVector, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = SeedStream::new(seed).rng("random-factor");
    let mut q = DMatrix::zeros(a.len(), k);
    for i in 0..a.len() {
        let draws: Vec<f64> = (0..k)
            .map(|_| {
                let e: f64 = rng.sample(Exp1);
                e.max(1e-300)
            })
            .collect();
        let s: f64 = draws.iter().sum();
        for (c, v) in draws.into_iter().enumerate() {
            q[(i, c)] = a.get(i) * v / s;
        }
    }
    q
}

/// `λ Q_hard + (1 − λ) Q'` with `Q'` from [`random_factor`].
pub fn blend_init(q_hard: &DMatrix<f64>, a: &ProbVector, lambda: f64, seed: u64) -> DMatrix<f64> {
    if lambda >= 1.0 {
        return q_hard.clone();
    }
    let q_rand = random_factor(a, q_hard.ncols(), seed);
    q_hard * lambda + q_rand * (1.0 - lambda)
}

fn labels_to_factor(labels: &[usize], a: &ProbVector, k: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        q[(i, l)] = a.get(i);
    }
    q
}

/// Moves points into empty clusters: for each empty `k`, the point with the
/// highest `score(i, k)` among clusters with more than one member.
fn repair_empty(labels: &mut [usize], k: usize, score: Option<&DMatrix<f64>>) {
    for c in 0..k {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        if sizes[c] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..labels.len() {
            if sizes[labels[i]] <= 1 {
                continue;
            }
            let s = score.map_or(0.0, |q| q[(i, c)]);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        if let Some((i, _)) = best {
            labels[i] = c;
        }
    }
}

fn hard_plan_from_sigma(labels: &[usize], sigma: &Permutation, k: usize) -> Result<LowRankPlan> {
    let n = labels.len();
    let u = ProbVector::uniform(n);
    let q = labels_to_factor(labels, &u, k);
    let r = crate::registration::permute_rows(&q, sigma.inverse().as_slice());
    let g = ProbVector::normalized(col_sums(&q).iter().copied().collect())?;
    LowRankPlan::new(q, r, g)
}

/// Rank-`K` plan for a square problem with uniform marginals.
///
/// `x` and `y` enable the registered K-means initialization; without them the
/// spectral reduction of the registered cost provides the starting partition.
pub fn transport_cluster(
    x: Option<&DMatrix<f64>>,
    y: Option<&DMatrix<f64>>,
    cost: &CostSpec,
    cfg: &TcConfig,
) -> Result<TcResult> {
    let (n, m) = (cost.nrows(), cost.ncols());
    if cfg.registration == Registration::Kantorovich {
        return transport_cluster_kantorovich(
            x,
            y,
            &ProbVector::uniform(n),
            &ProbVector::uniform(m),
            cost,
            cfg,
        );
    }
    if n != m {
        return Err(Error::Rectangular { n, m });
    }
    cfg.validate(n)?;
    let k = cfg.rank;
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let u = ProbVector::uniform(n);
    let seeds = SeedStream::new(cfg.seed);

    let t = Instant::now();
    let mut sinkhorn_converged = true;
    let sigma = if n <= cfg.exact_threshold {
        exact_assignment(cost)?
    } else {
        let out = run_sinkhorn(cost, &u, &u, cfg, &mut sinkhorn_converged)?;
        extract_permutation(&out.coupling)?
    };
    let full_rank_cost = sigma.cost(cost);
    timings.transport_ms = ms(t);

    let finish = |labels: Vec<usize>,
                  init_cost: Option<f64>,
                  history: Vec<f64>,
                  iterations: usize,
                  psd: Option<f64>,
                  solver: Solver,
                  mut timings: StageTimings|
     -> Result<TcResult> {
        let plan = hard_plan_from_sigma(&labels, &sigma, k)?;
        let achieved = lrot_cost(cost, &plan)?;
        timings.total_ms = ms(start);
        Ok(TcResult {
            plan,
            row_marginal: u.clone(),
            col_marginal: u.clone(),
            sigma: Some(sigma.clone()),
            coupling: None,
            cost: achieved,
            full_rank_cost,
            gamma: gamma_ratio(full_rank_cost, achieved, mean_cost(cost)?.abs()),
            init_cost,
            cost_history: history,
            gkms_iterations: iterations,
            psd_defect: psd,
            solver_used: solver,
            sinkhorn_converged,
            timings,
        })
    };

    if k == 1 {
        return finish(vec![0; n], None, Vec::new(), 0, None, cfg.solver, timings);
    }
    if k == n {
        return finish((0..n).collect(), None, Vec::new(), 0, None, cfg.solver, timings);
    }

    let t = Instant::now();
    let registered = monge_register(cost, &sigma)?;
    timings.registration_ms = ms(t);

    let t = Instant::now();
    let kcfg = KMeansConfig { k, ..cfg.kmeans };
    let want_kernel = matches!(cfg.solver, Solver::KernelReduce | Solver::Auto) && n <= KERNEL_MAX;
    let kernel = if want_kernel || (cfg.init == InitStrategy::Registered && (x.is_none() || y.is_none())) {
        Some(kernel_reduce(&registered, k, &KMeansConfig { seed: seeds.derive("kernel"), ..kcfg })?)
    } else {
        None
    };
    let psd = kernel.as_ref().map(|kr| kr.psd_defect);
    let init_labels = match (cfg.init, x, y) {
        (InitStrategy::Random, _, _) => None,
        (InitStrategy::Registered, Some(x), Some(y)) => {
            Some(registered_init(x, y, cost, &sigma, k, &kcfg)?.labels)
        }
        (InitStrategy::Registered, _, _) => kernel.as_ref().map(|kr| kr.assignment.labels.clone()),
    };
    let init_cost = match &init_labels {
        Some(l) => Some(hard_cost(&registered, l, &u)?),
        None => None,
    };
    timings.init_ms = ms(t);

    let t = Instant::now();
    let use_kernel = match cfg.solver {
        Solver::KernelReduce => kernel.is_some(),
        Solver::Auto => psd.is_some_and(|d| d <= PSD_DEFECT_TOL),
        Solver::Gkms => false,
    };
    let (mut labels, history, iterations, solver_used) = if use_kernel {
        let kr = kernel.as_ref().expect("kernel computed");
        let mut labels = kr.assignment.labels.clone();
        repair_empty(&mut labels, k, None);
        (labels, Vec::new(), 0, Solver::KernelReduce)
    } else {
        let q_hard = match &init_labels {
            Some(l) => labels_to_factor(l, &u, k),
            None => DMatrix::zeros(n, k),
        };
        let lambda = if init_labels.is_some() { cfg.blend_lambda } else { 0.0 };
        let mut q0 = blend_init(&q_hard, &u, lambda, seeds.derive("blend"));
        apply_floors(&mut q0, u.weights(), cfg.gkms.g_floor_for(k), cfg.gkms.entry_floor);
        let out = gkms_solve(&registered, &q0, &cfg.gkms)?;
        let mut labels = round_to_hard(&out.q, &u).labels;
        repair_empty(&mut labels, k, Some(&out.q));
        (labels, out.history, out.iterations, Solver::Gkms)
    };
    if let (Some(il), Some(ic)) = (&init_labels, init_cost) {
        if hard_cost(&registered, &labels, &u)? > ic {
            labels = il.clone();
            repair_empty(&mut labels, k, None);
        }
    }
    timings.solve_ms = ms(t);
    finish(labels, init_cost, history, iterations, psd, solver_used, timings)
}

fn run_sinkhorn(
    cost: &CostSpec,
    a: &ProbVector,
    b: &ProbVector,
    cfg: &TcConfig,
    converged: &mut bool,
) -> Result<SinkhornOutput> {
    match sinkhorn(cost, a, b, &cfg.sinkhorn) {
        Ok(out) => Ok(out),
        Err(Error::NonConvergence { output, .. }) if cfg.allow_unconverged_sinkhorn => {
            *converged = false;
            Ok(*output)
        }
        Err(e) => Err(e),
    }
}

/// Rank-`K` plan between arbitrary marginals via an entropic coupling.
/// The returned `Q` is soft; round it with
/// [`round_to_hard`](crate::genkmeans::round_to_hard) if labels are needed.
pub fn transport_cluster_kantorovich(
    x: Option<&DMatrix<f64>>,
    y: Option<&DMatrix<f64>>,
    a: &ProbVector,
    b: &ProbVector,
    cost: &CostSpec,
    cfg: &TcConfig,
) -> Result<TcResult> {
    let (n, m) = (cost.nrows(), cost.ncols());
    cfg.validate(n)?;
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let seeds = SeedStream::new(cfg.seed);

    let t = Instant::now();
    let mut sinkhorn_converged = true;
    let sk = run_sinkhorn(cost, a, b, cfg, &mut sinkhorn_converged)?;
    let p = sk.coupling;
    let full_rank_cost = full_cost(cost, &p)?;
    timings.transport_ms = ms(t);

    let k = if m == 1 { 1 } else { cfg.rank };
    let finish = |q: DMatrix<f64>,
                  init_cost: Option<f64>,
                  history: Vec<f64>,
                  iterations: usize,
                  psd: Option<f64>,
                  solver: Solver,
                  mut timings: StageTimings|
     -> Result<TcResult> {
        let r = recover_second_factor(&p, a, &q)?;
        let g = ProbVector::normalized(col_sums(&q).iter().copied().collect())?;
        let plan = LowRankPlan::new(q, r, g)?;
        let achieved = lrot_cost(cost, &plan)?;
        timings.total_ms = ms(start);
        Ok(TcResult {
            plan,
            row_marginal: a.clone(),
            col_marginal: b.clone(),
            sigma: None,
            coupling: Some(p.clone()),
            cost: achieved,
            full_rank_cost,
            gamma: gamma_ratio(full_rank_cost, achieved, mean_cost(cost)?.abs()),
            init_cost,
            cost_history: history,
            gkms_iterations: iterations,
            psd_defect: psd,
            solver_used: solver,
            sinkhorn_converged,
            timings,
        })
    };
    if k == 1 {
        let q = DMatrix::from_column_slice(n, 1, a.as_slice());
        return finish(q, None, Vec::new(), 0, None, cfg.solver, timings);
    }

    let t = Instant::now();
    let registered = kantorovich_register(cost, &p, a)?;
    timings.registration_ms = ms(t);

    let t = Instant::now();
    let kcfg = KMeansConfig { k, ..cfg.kmeans };
    let init = match (cfg.init, x, y) {
        (InitStrategy::Random, _, _) => None,
        (InitStrategy::Registered, Some(x), Some(y)) => {
            let (cx, cy) = side_configs(&kcfg, k.min(m));
            let lx = kmeans(x, &KMeansConfig { k, ..cx })?.assignment.labels;
            let ly = kmeans(y, &cy)?.assignment.labels;
            let qx = labels_to_factor(&lx, a, k);
            let ry = labels_to_factor(&ly, b, k);
            let mut scaled = ry;
            for (j, mut row) in scaled.row_iter_mut().enumerate() {
                row /= b.get(j);
            }
            let qy = p.matrix() * scaled;
            let mut best: Option<(DMatrix<f64>, f64)> = None;
            for cand in [qx, qy] {
                let keep: Vec<usize> = (0..k).filter(|&c| cand.column(c).sum() > 0.0).collect();
                let c = gen_kmeans_cost(&registered, &cand.select_columns(&keep), a)?;
                if best.as_ref().is_none_or(|(_, bc)| c < *bc) {
                    best = Some((cand, c));
                }
            }
            best
        }
        (InitStrategy::Registered, _, _) => {
            let kr = kernel_reduce(&registered, k, &KMeansConfig { seed: seeds.derive("kernel"), ..kcfg })?;
            let q = labels_to_factor(&kr.assignment.labels, a, k);
            let c = hard_cost(&registered, &kr.assignment.labels, a)?;
            Some((q, c))
        }
    };
    timings.init_ms = ms(t);

    let t = Instant::now();
    let (q_init, init_cost) = match init {
        Some((q, c)) => (q, Some(c)),
        None => (DMatrix::zeros(n, k), None),
    };
    let lambda = if init_cost.is_some() { cfg.blend_lambda } else { 0.0 };
    let mut q0 = blend_init(&q_init, a, lambda, seeds.derive("blend"));
    apply_floors(&mut q0, a.weights(), cfg.gkms.g_floor_for(k), cfg.gkms.entry_floor);
    let out = gkms_solve(&registered, &q0, &cfg.gkms)?;
    timings.solve_ms = ms(t);
    finish(out.q, init_cost, out.history, out.iterations, None, Solver::Gkms, timings)
}

/// `Σ_j g_j ‖μ_j − ν_j‖²` between the barycentres `μ_j = Qᵀx / g_j` and
/// `ν_j = Rᵀy / g_j`.
pub fn w2_estimate(plan: &LowRankPlan, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if plan.q().nrows() != x.nrows() || plan.r().nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(Error::Dimension("plan and point clouds disagree".into()));
    }
    let g = plan.g();
    if let Some(j) = g.as_slice().iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroMass(j));
    }
    let mu = plan.q().tr_mul(x);
    let nu = plan.r().tr_mul(y);
    Ok((0..g.len())
        .map(|j| {
            let diff = (mu.row(j) - nu.row(j)) / g.get(j);
            g.get(j) * diff.norm_squared()
        })
        .sum())
}
