//! Generalized K-means on a registered cost.
//!
//! The objective is `F(Q) = ⟨C̃, Q diag(1/Qᵀ1) Qᵀ⟩` over `Q ≥ 0` with
//! `Q1 = a`. GKMS takes exponentiated-gradient steps followed by a row
//! rescaling (a one-sided Sinkhorn projection). When the symmetrized cost is
//! conditionally negative definite the problem is exactly kernel K-means, and
//! [`kernel_reduce`] solves it through a spectral embedding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::clustering::{kmeans, KMeansConfig};
use crate::error::{Error, Result};
use crate::plan::{col_sums, row_sums, CostSpec, HardAssignment, ProbVector, MARGINAL_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GkmsConfig {
    /// Step size γ.
    pub step_size: f64,
    pub max_iters: usize,
    /// Floor δ on cluster masses; `None` means `1e-3 / K`.
    pub g_floor: Option<f64>,
    pub entry_floor: f64,
    /// Reject steps that raise the cost and retry with half the step.
    pub monotone_guard: bool,
    /// Stop once the cost moved by less than `1e-10` (relative) over 10 steps.
    pub early_stop: bool,
    pub seed: u64,
}

impl Default for GkmsConfig {
    fn default() -> Self {
        Self {
            step_size: 2.0,
            max_iters: 250,
            g_floor: None,
            entry_floor: 1e-12,
            monotone_guard: true,
            early_stop: true,
            seed: 0,
        }
    }
}

impl GkmsConfig {
    pub fn g_floor_for(&self, k: usize) -> f64 {
        self.g_floor.unwrap_or(1e-3 / k as f64)
    }

    fn validate(&self, k: usize) -> Result<()> {
        let delta = self.g_floor_for(k);
        if !(self.step_size > 0.0) || !(delta > 0.0) || delta * k as f64 > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Iterate of the mirror-descent solver.
#[derive(Debug, Clone, PartialEq)]
pub struct GkmsState {
    pub q: DMatrix<f64>,
    /// Row marginal `a = Q1` fixed at construction.
    pub a: DVector<f64>,
    pub iterate_cost: f64,
    pub iteration: usize,
}

impl GkmsState {
    pub fn new(cost: &CostSpec, q: DMatrix<f64>) -> Result<Self> {
        let a = row_sums(&q);
        let pa = ProbVector::from_dvector(a.clone())?;
        let iterate_cost = gen_kmeans_cost(cost, &q, &pa)?;
        Ok(Self {
            q,
            a,
            iterate_cost,
            iteration: 0,
        })
    }
}

fn check_shapes(cost: &CostSpec, q: &DMatrix<f64>) -> Result<()> {
    if cost.nrows() != cost.ncols() || cost.nrows() != q.nrows() {
        return Err(Error::Dimension(format!(
            "registered cost {}x{} with Q of {} rows",
            cost.nrows(),
            cost.ncols(),
            q.nrows()
        )));
    }
    Ok(())
}

fn inner_marginal(q: &DMatrix<f64>) -> Result<DVector<f64>> {
    let d = col_sums(q);
    match d.iter().position(|&v| !(v > 0.0)) {
        Some(k) => Err(Error::ZeroMass(k)),
        None => Ok(d),
    }
}

/// `F(Q) = Σ_k q_kᵀ C̃ q_k / (1ᵀ q_k)`.
pub fn gen_kmeans_cost(cost: &CostSpec, q: &DMatrix<f64>, a: &ProbVector) -> Result<f64> {
    check_shapes(cost, q)?;
    if a.len() != q.nrows() {
        return Err(Error::Dimension("row marginal length".into()));
    }
    let residual = (row_sums(q) - a.weights()).amax();
    if residual > MARGINAL_TOL {
        return Err(Error::Marginal {
            residual,
            tolerance: MARGINAL_TOL,
        });
    }
    let d = inner_marginal(q)?;
    let cq = cost.mul_right(q)?;
    Ok((0..q.ncols()).map(|k| q.column(k).dot(&cq.column(k)) / d[k]).sum())
}

/// `F` of the hard factor with `Q(i, label_i) = a_i`; empty clusters are
/// skipped.
pub fn hard_cost(cost: &CostSpec, labels: &[usize], a: &ProbVector) -> Result<f64> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut q = DMatrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        q[(i, l)] = a.get(i);
    }
    let keep: Vec<usize> = (0..k).filter(|&c| q.column(c).sum() > 0.0).collect();
    let q = q.select_columns(&keep);
    gen_kmeans_cost(cost, &q, a)
}

/// Exact gradient of [`gen_kmeans_cost`]:
/// `2 S Q D⁻¹ − 1 wᵀ` with `S = (C̃ + C̃ᵀ)/2`, `D = diag(Qᵀ1)` and
/// `w_k = q_kᵀ S q_k / D_k²`.
pub fn gkms_gradient(cost: &CostSpec, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(cost, q)?;
    let d = inner_marginal(q)?;
    let sq = (cost.mul_right(q)? + cost.mul_left_transpose(q)?) * 0.5;
    let mut grad = DMatrix::zeros(q.nrows(), q.ncols());
    for k in 0..q.ncols() {
        let w = q.column(k).dot(&sq.column(k)) / (d[k] * d[k]);
        let scale = 2.0 / d[k];
        for i in 0..q.nrows() {
            grad[(i, k)] = scale * sq[(i, k)] - w;
        }
    }
    Ok(grad)
}

/// Mixes `Q` with `a u_Kᵀ` by the smallest weight that restores both floors.
pub fn apply_floors(q: &mut DMatrix<f64>, a: &DVector<f64>, g_floor: f64, entry_floor: f64) {
    let k = q.ncols();
    let uk = 1.0 / k as f64;
    let mut lambda = 0.0f64;
    for dk in col_sums(q).iter() {
        if *dk < g_floor && uk > *dk {
            lambda = lambda.max((g_floor - dk) / (uk - dk));
        }
    }
    for j in 0..k {
        for i in 0..q.nrows() {
            let v = q[(i, j)];
            let target = a[i] * uk;
            if v < entry_floor && target > v {
                lambda = lambda.max((entry_floor - v) / (target - v));
            }
        }
    }
    let lambda = lambda.min(1.0);
    if lambda > 0.0 {
        for j in 0..k {
            for i in 0..q.nrows() {
                q[(i, j)] = (1.0 - lambda) * q[(i, j)] + lambda * a[i] * uk;
            }
        }
    }
}

fn exp_step(q: &DMatrix<f64>, grad: &DMatrix<f64>, a: &DVector<f64>, gamma: f64) -> DMatrix<f64> {
    let (n, k) = q.shape();
    let mut out = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut mx = f64::NEG_INFINITY;
        for c in 0..k {
            mx = mx.max(q[(i, c)].ln() - gamma * grad[(i, c)]);
        }
        let mut s = 0.0;
        for c in 0..k {
            let v = (q[(i, c)].ln() - gamma * grad[(i, c)] - mx).exp();
            out[(i, c)] = v;
            s += v;
        }
        for c in 0..k {
            out[(i, c)] *= a[i] / s;
        }
    }
    out
}

/// One exponentiated-gradient step with row projection and flooring.
pub fn gkms_step(state: &GkmsState, cost: &CostSpec, cfg: &GkmsConfig) -> Result<GkmsState> {
    let k = state.q.ncols();
    cfg.validate(k)?;
    let grad = gkms_gradient(cost, &state.q)?;
    let pa = ProbVector::from_dvector(state.a.clone())?;
    let max_halvings = if cfg.monotone_guard { 20 } else { 0 };
    let mut gamma = cfg.step_size;
    for _ in 0..=max_halvings {
        let mut next = exp_step(&state.q, &grad, &state.a, gamma);
        apply_floors(&mut next, &state.a, cfg.g_floor_for(k), cfg.entry_floor);
        let c = gen_kmeans_cost(cost, &next, &pa)?;
        if !cfg.monotone_guard || c <= state.iterate_cost {
            return Ok(GkmsState {
                q: next,
                a: state.a.clone(),
                iterate_cost: c,
                iteration: state.iteration + 1,
            });
        }
        gamma *= 0.5;
    }
    Err(Error::StepFailure {
        halvings: max_halvings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GkmsOutput {
    pub q: DMatrix<f64>,
    /// Cost of the initial point followed by the cost after every step.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// True when a step could not decrease the cost or the early-stop rule
    /// fired.
    pub converged: bool,
}

/// Runs [`gkms_step`] up to `cfg.max_iters` times from a strictly positive
/// `Q0`.
pub fn gkms_solve(cost: &CostSpec, q0: &DMatrix<f64>, cfg: &GkmsConfig) -> Result<GkmsOutput> {
    if q0.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter("Q0 must be strictly positive".into()));
    }
    cfg.validate(q0.ncols())?;
    let mut state = GkmsState::new(cost, q0.clone())?;
    let mut history = vec![state.iterate_cost];
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        match gkms_step(&state, cost, cfg) {
            Ok(next) => state = next,
            Err(Error::StepFailure { .. }) => {
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        }
        history.push(state.iterate_cost);
        let t = history.len();
        if cfg.early_stop && t > 10 {
            let last = history[t - 1];
            if (history[t - 11] - last).abs() <= 1e-10 * last.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
    }
    Ok(GkmsOutput {
        q: state.q,
        iterations: state.iteration,
        history,
        converged,
    })
}

/// Row-wise argmax, ties to the lowest column.
pub fn round_to_hard(q: &DMatrix<f64>, a: &ProbVector) -> HardAssignment {
    let labels = q
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    HardAssignment {
        labels,
        row_mass: a.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReduction {
    pub assignment: HardAssignment,
    /// `Σ|negative eigenvalues| / Σ|eigenvalues|` of the centered Gram matrix.
    pub psd_defect: f64,
    /// `U Λ₊^{1/2}` restricted to the positive spectrum.
    pub embedding: DMatrix<f64>,
}

/// Kernel K-means on `G = −½ J Sym(C̃) J` through its spectral embedding.
pub fn kernel_reduce(cost: &CostSpec, k: usize, cfg: &KMeansConfig) -> Result<KernelReduction> {
    let s = cost.symmetrized()?;
    let n = s.nrows();
    let row_mean = DVector::from_iterator(n, s.row_iter().map(|r| r.mean()));
    let grand = row_mean.mean();
    let g = DMatrix::from_fn(n, n, |i, j| -0.5 * (s[(i, j)] - row_mean[i] - row_mean[j] + grand));
    let eig = SymmetricEigen::new(g);
    let total: f64 = eig.eigenvalues.iter().map(|v| v.abs()).sum();
    let negative: f64 = eig.eigenvalues.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let psd_defect = if total > 0.0 { negative / total } else { 0.0 };
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let keep: Vec<usize> = (0..n)
        .filter(|&c| eig.eigenvalues[c] > 1e-12 * top && eig.eigenvalues[c] > 0.0)
        .collect();
    let embedding = if keep.is_empty() {
        DMatrix::zeros(n, 1)
    } else {
        let mut z = eig.eigenvectors.select_columns(&keep);
        for (t, &c) in keep.iter().enumerate() {
            let sv = eig.eigenvalues[c].sqrt();
            z.column_mut(t).scale_mut(sv);
        }
        z
    };
    let km = kmeans(&embedding, &KMeansConfig { k, ..*cfg })?;
    Ok(KernelReduction {
        assignment: km.assignment,
        psd_defect,
        embedding,
    })
}
