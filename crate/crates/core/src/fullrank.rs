//! Full-rank transport: entropic Sinkhorn with exact-marginal rounding, the
//! Hungarian method for square uniform problems, and permutation extraction
//! from a coupling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plan::{marginal_residual, CostSpec, Coupling, Permutation, ProbVector};

/// Sinkhorn parameters. `epsilon` is in cost units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// ∞-norm marginal residual that counts as converged.
    pub tolerance: f64,
    pub log_domain: bool,
    /// Anneal ε geometrically from the cost scale down to `epsilon`.
    pub epsilon_scaling: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_iters: 10_000,
            tolerance: 1e-6,
            log_domain: true,
            epsilon_scaling: true,
        }
    }
}

impl SinkhornConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_iters == 0 || !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Rounded coupling plus diagnostics of the unrounded iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornOutput {
    pub coupling: Coupling,
    pub iterations: usize,
    /// Marginal residual before rounding.
    pub residual: f64,
    pub f: DVector<f64>,
    pub g: DVector<f64>,
}

/// Entropic transport between `a` and `b`, rounded onto `Π(a, b)`.
///
/// Fails with [`Error::NonConvergence`] when the iteration budget runs out with
/// a residual above `10 × tolerance`; the rounded coupling travels with the
/// error.
pub fn sinkhorn(
    cost: &CostSpec,
    a: &ProbVector,
    b: &ProbVector,
    cfg: &SinkhornConfig,
) -> Result<SinkhornOutput> {
    cfg.validate()?;
    let (n, m) = (cost.nrows(), cost.ncols());
    if a.len() != n || b.len() != m {
        return Err(Error::Dimension(format!(
            "cost {n}x{m}, marginals {} and {}",
            a.len(),
            b.len()
        )));
    }
    let c = cost.to_dense()?;
    let rows: Vec<f64> = c.transpose().as_slice().to_vec();
    let cols: Vec<f64> = c.as_slice().to_vec();
    let (f, g, iterations, residual, p) = if cfg.log_domain {
        log_sinkhorn(&rows, &cols, n, m, a, b, cfg)
    } else {
        scaling_sinkhorn(&c, a, b, cfg)
    };
    let matrix = round_to_polytope(p, a.weights(), b.weights());
    let coupling = Coupling::from_parts_unchecked(matrix, a.clone(), b.clone());
    let out = SinkhornOutput {
        coupling,
        iterations,
        residual,
        f,
        g,
    };
    if residual > 10.0 * cfg.tolerance {
        return Err(Error::NonConvergence {
            residual,
            iterations,
            output: Box::new(out),
        });
    }
    Ok(out)
}

/// Terms below `exp(LSE_CUTOFF)` relative to the largest are dropped.
const LSE_CUTOFF: f64 = -36.0;

/// `ε·LSE_j((h_j − row_j)/ε)` for every row of a row-major `len×width` block.
fn soft_min_rows(data: &[f64], width: usize, h: &[f64], eps: f64) -> Vec<f64> {
    data.par_chunks(width)
        .map(|row| {
            let mut mx = f64::NEG_INFINITY;
            for (cij, hj) in row.iter().zip(h) {
                mx = mx.max(hj - cij);
            }
            if mx == f64::NEG_INFINITY {
                return mx;
            }
            let cut = mx + LSE_CUTOFF * eps;
            let s: f64 = row
                .iter()
                .zip(h)
                .filter(|(cij, hj)| *hj - *cij > cut)
                .map(|(cij, hj)| ((hj - cij - mx) / eps).exp())
                .sum();
            mx + eps * s.ln()
        })
        .collect()
}

type Iterate = (DVector<f64>, DVector<f64>, usize, f64, DMatrix<f64>);

fn log_sinkhorn(
    rows: &[f64],
    cols: &[f64],
    n: usize,
    m: usize,
    a: &ProbVector,
    b: &ProbVector,
    cfg: &SinkhornConfig,
) -> Iterate {
    let log_a: Vec<f64> = a.as_slice().iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.as_slice().iter().map(|v| v.ln()).collect();
    let scale = rows.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut schedule = Vec::new();
    if cfg.epsilon_scaling {
        let mut e = scale.max(cfg.epsilon);
        while e > cfg.epsilon {
            schedule.push(e);
            e *= 0.5;
        }
    }
    schedule.push(cfg.epsilon);

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut iterations = 0;
    let last = schedule.len() - 1;
    for (stage, &eps) in schedule.iter().enumerate() {
        let (budget, target) = if stage == last {
            (cfg.max_iters.saturating_sub(iterations), cfg.tolerance)
        } else {
            (100.min(cfg.max_iters.saturating_sub(iterations)), cfg.tolerance.max(1e-4))
        };
        for _ in 0..budget {
            let lse_r = soft_min_rows(rows, m, &g, eps);
            let f_new: Vec<f64> = log_a.iter().zip(&lse_r).map(|(la, l)| eps * la - l).collect();
            let change = f
                .iter()
                .zip(&f_new)
                .zip(a.as_slice())
                .map(|((fo, fnw), ai)| ai * (((fo - fnw) / eps).exp() - 1.0).abs())
                .fold(0.0, f64::max);
            f = f_new;
            let lse_c = soft_min_rows(cols, n, &f, eps);
            g = log_b.iter().zip(&lse_c).map(|(lb, l)| eps * lb - l).collect();
            iterations += 1;
            if change <= target && iterations > 1 {
                break;
            }
        }
    }
    let eps = cfg.epsilon;
    let p = DMatrix::from_fn(n, m, |i, j| ((f[i] + g[j] - rows[i * m + j]) / eps).exp());
    let residual = marginal_residual(&p, a.weights(), b.weights());
    (DVector::from_vec(f), DVector::from_vec(g), iterations, residual, p)
}

fn scaling_sinkhorn(c: &DMatrix<f64>, a: &ProbVector, b: &ProbVector, cfg: &SinkhornConfig) -> Iterate {
    let eps = cfg.epsilon;
    let kernel = c.map(|v| (-v / eps).exp());
    let (n, m) = (c.nrows(), c.ncols());
    let mut u = DVector::from_element(n, 1.0);
    let mut v = DVector::from_element(m, 1.0);
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let kv = &kernel * &v;
        let u_new = a.weights().component_div(&kv);
        let change = u
            .iter()
            .zip(u_new.iter())
            .zip(a.as_slice())
            .map(|((uo, un), ai)| ai * (uo / un - 1.0).abs())
            .fold(0.0, f64::max);
        u = u_new;
        let ktu = kernel.tr_mul(&u);
        v = b.weights().component_div(&ktu);
        iterations += 1;
        if change <= cfg.tolerance && iterations > 1 {
            break;
        }
    }
    let mut p = kernel;
    for j in 0..m {
        for i in 0..n {
            p[(i, j)] *= u[i] * v[j];
        }
    }
    if p.iter().any(|x| !x.is_finite()) {
        p = DMatrix::zeros(n, m);
    }
    let residual = marginal_residual(&p, a.weights(), b.weights());
    let f = u.map(|x| eps * x.ln());
    let g = v.map(|x| eps * x.ln());
    (f, g, iterations, residual, p)
}

/// Projects a nonnegative matrix onto `Π(a, b)`: scale rows down to `a`,
/// columns down to `b`, then add the outer product of the deficits.
pub fn round_to_polytope(mut p: DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    let (n, m) = (p.nrows(), p.ncols());
    for i in 0..n {
        let s = p.row(i).sum();
        if s > a[i] {
            let scale = a[i] / s;
            p.row_mut(i).scale_mut(scale);
        }
    }
    for j in 0..m {
        let s = p.column(j).sum();
        if s > b[j] {
            let scale = b[j] / s;
            p.column_mut(j).scale_mut(scale);
        }
    }
    let err_r = DVector::from_fn(n, |i, _| (a[i] - p.row(i).sum()).max(0.0));
    let err_c = DVector::from_fn(m, |j, _| (b[j] - p.column(j).sum()).max(0.0));
    let total = err_c.sum();
    if total > 0.0 {
        p += err_r * err_c.transpose() / total;
    }
    p
}

/// Minimum-cost permutation, ties resolved toward the lexicographically
/// smallest `σ`.
pub fn exact_assignment(cost: &CostSpec) -> Result<Permutation> {
    let (n, m) = (cost.nrows(), cost.ncols());
    if n != m {
        return Err(Error::Rectangular { n, m });
    }
    if n == 0 {
        return Ok(Permutation::identity(0));
    }
    let c = cost.to_dense()?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    let rows: Vec<f64> = c.transpose().as_slice().to_vec();
    let (assign, u, v) = hungarian(&rows, n);
    let refined = lexicographic_refine(&rows, n, assign.clone(), &u, &v);
    let total = |s: &[usize]| s.iter().enumerate().map(|(i, &j)| rows[i * n + j]).sum::<f64>();
    let scale = rows.iter().fold(1.0f64, |s, x| s.max(x.abs()));
    let best = if total(&refined) <= total(&assign) + 1e-9 * scale {
        refined
    } else {
        assign
    };
    Permutation::new(best)
}

/// Shortest augmenting path Hungarian method on a row-major `n×n` cost.
/// Returns the row-to-column assignment and the dual potentials.
fn hungarian(c: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &c[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    (assign, u[1..].to_vec(), v[1..].to_vec())
}

/// Walks rows in order and moves each onto its smallest admissible column
/// among the zero-reduced-cost edges, keeping a perfect matching alive by
/// alternating paths. Any perfect matching on tight edges is optimal.
fn lexicographic_refine(c: &[f64], n: usize, mut row_to_col: Vec<usize>, u: &[f64], v: &[f64]) -> Vec<usize> {
    let scale = c.iter().fold(1.0f64, |s, x| s.max(x.abs()));
    let tol = 1e-11 * scale;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| c[i * n + j] - u[i] - v[j] <= tol).collect())
        .collect();
    for (i, &j) in row_to_col.iter().enumerate() {
        if !tight[i].contains(&j) {
            return row_to_col;
        }
    }
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let mut fixed_col = vec![false; n];
    let mut prev = vec![usize::MAX; n];
    let mut queue = Vec::with_capacity(n);
    for i in 0..n {
        let free_col = row_to_col[i];
        for &j in &tight[i] {
            if j >= free_col {
                break;
            }
            if fixed_col[j] {
                continue;
            }
            let start = col_to_row[j];
            prev.iter_mut().for_each(|x| *x = usize::MAX);
            queue.clear();
            queue.push(start);
            let mut head = 0;
            let mut found = false;
            'bfs: while head < queue.len() {
                let r = queue[head];
                head += 1;
                for &cc in &tight[r] {
                    if fixed_col[cc] || cc == j || prev[cc] != usize::MAX {
                        continue;
                    }
                    prev[cc] = r;
                    if cc == free_col {
                        found = true;
                        break 'bfs;
                    }
                    queue.push(col_to_row[cc]);
                }
            }
            if found {
                let mut cc = free_col;
                loop {
                    let r = prev[cc];
                    let old = row_to_col[r];
                    row_to_col[r] = cc;
                    col_to_row[cc] = r;
                    if r == start {
                        break;
                    }
                    cc = old;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        fixed_col[row_to_col[i]] = true;
    }
    row_to_col
}

/// Permutation carrying the most mass of a square coupling (maximum
/// log-weight matching).
pub fn extract_permutation(coupling: &Coupling) -> Result<Permutation> {
    let p = coupling.matrix();
    if p.nrows() != p.ncols() {
        return Err(Error::Rectangular {
            n: p.nrows(),
            m: p.ncols(),
        });
    }
    let weights = p.map(|x| -(x + 1e-300).ln());
    exact_assignment(&CostSpec::Dense(weights))
}
