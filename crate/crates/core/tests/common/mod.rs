#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transport_clustering::{LowRankPlan, ProbVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random::<f64>())
}

pub fn normal_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| transport_clustering::datasets::standard_normal(rng))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.random::<f64>())
}

pub fn random_prob(rng: &mut ChaCha8Rng, n: usize) -> ProbVector {
    ProbVector::normalized((0..n).map(|_| 0.2 + rng.random::<f64>()).collect()).unwrap()
}

pub fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    v
}

/// Iterative proportional fitting of a positive matrix to the given sums.
pub fn fit(mut m: DMatrix<f64>, rows: &[f64], cols: &[f64]) -> DMatrix<f64> {
    for _ in 0..2000 {
        for (i, r) in rows.iter().enumerate() {
            let s = m.row(i).sum();
            m.row_mut(i).scale_mut(r / s);
        }
        for (j, c) in cols.iter().enumerate() {
            let s = m.column(j).sum();
            m.column_mut(j).scale_mut(c / s);
        }
        let err = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (m.row(i).sum() - r).abs())
            .fold(0.0, f64::max);
        if err < 1e-15 {
            break;
        }
    }
    m
}

/// Random row-feasible factor with row sums `a`.
pub fn row_factor(rng: &mut ChaCha8Rng, a: &ProbVector, k: usize) -> DMatrix<f64> {
    let mut q = DMatrix::from_fn(a.len(), k, |_, _| 0.1 + rng.random::<f64>());
    for i in 0..a.len() {
        let s = q.row(i).sum();
        q.row_mut(i).scale_mut(a.get(i) / s);
    }
    q
}

/// Random feasible low-rank plan with its marginals.
pub fn random_plan(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> (LowRankPlan, ProbVector, ProbVector) {
    let a = random_prob(rng, n);
    let b = random_prob(rng, m);
    let g = random_prob(rng, k);
    let q = fit(random_matrix(rng, n, k).add_scalar(0.1), a.as_slice(), g.as_slice());
    let r = fit(random_matrix(rng, m, k).add_scalar(0.1), b.as_slice(), g.as_slice());
    let gq = ProbVector::normalized(q.row_sum().iter().copied().collect()).unwrap();
    let r = fit(r, b.as_slice(), gq.as_slice());
    (LowRankPlan::new(q, r, gq).unwrap(), a, b)
}

pub fn brute_assignment(c: &DMatrix<f64>) -> (f64, Vec<usize>) {
    fn rec(c: &DMatrix<f64>, i: usize, cur: &mut Vec<usize>, used: &mut [bool], acc: f64, best: &mut (f64, Vec<usize>)) {
        let n = c.nrows();
        if i == n {
            if acc < best.0 - 1e-15 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(c, i + 1, cur, used, acc + c[(i, j)], best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    rec(c, 0, &mut Vec::new(), &mut vec![false; c.nrows()], 0.0, &mut best);
    best
}
