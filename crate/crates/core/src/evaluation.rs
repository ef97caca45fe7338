//! Agreement scores between labelings and transport-quality measures.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::plan::{Coupling, LowRankPlan};

/// A plan in either representation.
#[derive(Debug, Clone, Copy)]
pub enum PlanRef<'a> {
    LowRank(&'a LowRankPlan),
    Full(&'a Coupling),
}

impl<'a> From<&'a LowRankPlan> for PlanRef<'a> {
    fn from(p: &'a LowRankPlan) -> Self {
        PlanRef::LowRank(p)
    }
}

impl<'a> From<&'a Coupling> for PlanRef<'a> {
    fn from(p: &'a Coupling) -> Self {
        PlanRef::Full(p)
    }
}

struct Contingency {
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    n: usize,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "labelings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (a, ka) = compact(a);
    let (b, kb) = compact(b);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&i, &j) in a.iter().zip(&b) {
        table[i][j] += 1;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    Ok(Contingency { table, rows, cols, n: a.len() })
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Returns 1 when the expected and maximal indices
/// coincide.
pub fn ari(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    let c = contingency(labels_a, labels_b)?;
    let index: f64 = c.table.iter().flatten().map(|&v| pairs(v)).sum();
    let sa: f64 = c.rows.iter().map(|&v| pairs(v)).sum();
    let sb: f64 = c.cols.iter().map(|&v| pairs(v)).sum();
    let total = pairs(c.n);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for i in 1..=n {
        t[i] = t[i - 1] + (i as f64).ln();
    }
    t
}

/// Expected mutual information of two labelings with the given class sizes
/// under the hypergeometric model.
pub fn expected_mutual_info(rows: &[usize], cols: &[usize], n: usize) -> f64 {
    let lf = ln_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in rows {
        for &b in cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            for nij in lo..=hi {
                let v = nij as f64;
                let term = v / nf * (nf * v / (a as f64 * b as f64)).ln();
                let log_p = lf[a] + lf[b] + lf[n - a] + lf[n - b]
                    - lf[n]
                    - lf[nij]
                    - lf[a - nij]
                    - lf[b - nij]
                    - lf[n + nij - a - b];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information, normalized by the larger entropy.
pub fn ami(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    let c = contingency(labels_a, labels_b)?;
    if c.rows.len() == c.cols.len() && c.rows.len() <= 1 {
        return Ok(1.0);
    }
    let nf = c.n as f64;
    let mut mi = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0 {
                let v = v as f64;
                mi += v / nf * (nf * v / (c.rows[i] as f64 * c.cols[j] as f64)).ln();
            }
        }
    }
    let emi = expected_mutual_info(&c.rows, &c.cols, c.n);
    let h = entropy(&c.rows, c.n).max(entropy(&c.cols, c.n));
    let denom = h - emi;
    if denom.abs() < 1e-15 {
        return Ok(if (mi - emi).abs() < 1e-15 { 1.0 } else { 0.0 });
    }
    Ok((mi - emi) / denom)
}

fn one_hot_mass(labels: &[usize], classes: usize, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(classes, m.ncols());
    for (i, &l) in labels.iter().enumerate() {
        for k in 0..m.ncols() {
            out[(l, k)] += m[(i, k)];
        }
    }
    out
}

/// Class-to-class mass matrix `ρ(k, k')`. Low-rank plans are handled through
/// their factors.
pub fn class_transfer_matrix(plan: PlanRef<'_>, labels_x: &[usize], labels_y: &[usize]) -> Result<DMatrix<f64>> {
    let (n, m) = match plan {
        PlanRef::LowRank(p) => (p.q().nrows(), p.r().nrows()),
        PlanRef::Full(p) => (p.nrows(), p.ncols()),
    };
    if labels_x.len() != n || labels_y.len() != m {
        return Err(Error::Dimension(format!(
            "labels {}×{} for a {n}×{m} plan",
            labels_x.len(),
            labels_y.len()
        )));
    }
    let classes = labels_x.iter().chain(labels_y).max().map(|&c| c + 1).unwrap_or(0);
    if classes == 0 {
        return Err(Error::InvalidParameter("empty class vocabulary".into()));
    }
    Ok(match plan {
        PlanRef::LowRank(p) => {
            let mut qx = one_hot_mass(labels_x, classes, p.q());
            for (k, g) in p.g().as_slice().iter().enumerate() {
                qx.column_mut(k).scale_mut(1.0 / g);
            }
            let ry = one_hot_mass(labels_y, classes, p.r());
            qx * ry.transpose()
        }
        PlanRef::Full(p) => {
            let px = one_hot_mass(labels_x, classes, p.matrix());
            one_hot_mass(labels_y, classes, &px.transpose()).transpose()
        }
    })
}

/// Fraction of transported mass that stays within a class: `tr(ρ) / Σρ`.
pub fn cta<'a>(plan: impl Into<PlanRef<'a>>, labels_x: &[usize], labels_y: &[usize]) -> Result<f64> {
    let rho = class_transfer_matrix(plan.into(), labels_x, labels_y)?;
    let total = rho.sum();
    if total <= 0.0 {
        return Err(Error::ZeroMass(0));
    }
    Ok((rho.trace() / total).clamp(0.0, 1.0))
}

/// `candidate / reference`.
pub fn relative_cost(candidate: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(Error::InvalidParameter(format!("reference cost {reference}")));
    }
    Ok(candidate / reference)
}
