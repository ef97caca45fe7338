//! K-means (K-means++ seeding, Lloyd iterations) and PAM-style K-medians.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plan::HardAssignment;
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Relative distortion change that stops Lloyd iterations.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 300,
            tol: 1e-10,
            restarts: 10,
            seed,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.k > n {
            return Err(Error::TooManyClusters { k: self.k, n });
        }
        if self.k == 0 || self.max_iters == 0 || self.restarts == 0 {
            return Err(Error::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: HardAssignment,
    /// `K×d`, one center per row.
    pub centers: DMatrix<f64>,
    pub distortion: f64,
    /// Distortion after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

struct Rows {
    data: Vec<f64>,
    d: usize,
}

impl Rows {
    fn new(points: &DMatrix<f64>) -> Self {
        Self {
            data: points.transpose().as_slice().to_vec(),
            d: points.ncols(),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best of `cfg.restarts` Lloyd runs by distortion; ties go to the lower
/// restart index.
pub fn kmeans(points: &DMatrix<f64>, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.nrows();
    cfg.validate(n)?;
    let rows = Rows::new(points);
    let seeds = SeedStream::new(cfg.seed);
    let runs: Vec<(Vec<usize>, Vec<f64>, f64, Vec<f64>)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| lloyd(&rows, n, cfg, &seeds, r))
        .collect();
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.2.total_cmp(&b.2).then(i.cmp(j)))
        .map(|(_, run)| run)
        .expect("at least one restart");
    let (labels, centers, distortion, history) = best;
    Ok(KMeansResult {
        assignment: HardAssignment::uniform(labels),
        centers: DMatrix::from_row_slice(cfg.k, rows.d, &centers),
        distortion,
        history,
    })
}

fn seed_plus_plus(rows: &Rows, n: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let d = rows.d;
    let mut centers = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centers.extend_from_slice(rows.row(first));
    let mut near: Vec<f64> = (0..n).map(|i| sq_dist(rows.row(i), rows.row(first))).collect();
    for _ in 1..k {
        let total: f64 = near.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in near.iter().enumerate() {
                if *w > 0.0 && t < *w {
                    chosen = i;
                    break;
                }
                t -= w;
            }
            if near[chosen] == 0.0 {
                chosen = near.iter().rposition(|w| *w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.extend_from_slice(rows.row(pick));
        for (i, w) in near.iter_mut().enumerate() {
            *w = w.min(sq_dist(rows.row(i), rows.row(pick)));
        }
    }
    centers
}

fn assign(rows: &Rows, n: usize, k: usize, centers: &[f64], labels: &mut [usize]) -> f64 {
    let d = rows.d;
    let mut total = 0.0;
    for (i, label) in labels.iter_mut().enumerate().take(n) {
        let x = rows.row(i);
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for c in 0..k {
            let dist = sq_dist(x, &centers[c * d..(c + 1) * d]);
            if dist < best {
                best = dist;
                arg = c;
            }
        }
        *label = arg;
        total += best;
    }
    total
}

fn means(rows: &Rows, k: usize, labels: &[usize], centers: &mut [f64]) -> Vec<usize> {
    let d = rows.d;
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * d];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l * d..(l + 1) * d].iter_mut().zip(rows.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for t in 0..d {
                centers[c * d + t] = sums[c * d + t] / counts[c] as f64;
            }
        }
    }
    counts
}

type LloydRun = (Vec<usize>, Vec<f64>, f64, Vec<f64>);

fn lloyd(rows: &Rows, n: usize, cfg: &KMeansConfig, seeds: &SeedStream, restart: usize) -> LloydRun {
    let k = cfg.k;
    let d = rows.d;
    let mut rng = seeds.rng(&format!("kmeans/{restart}"));
    let mut centers = seed_plus_plus(rows, n, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        let old = labels.clone();
        let dist = assign(rows, n, k, &centers, &mut labels);
        history.push(dist);
        let converged = old == labels && history.len() > 1 || prev - dist <= cfg.tol * prev.abs();
        prev = dist;
        let counts = means(rows, k, &labels, &mut centers);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // farthest point from its own center among clusters with > 1 member
            let mut counts_now = vec![0usize; k];
            for &l in &labels {
                counts_now[l] += 1;
            }
            let far = (0..n)
                .filter(|&i| counts_now[labels[i]] > 1)
                .map(|i| {
                    let l = labels[i];
                    (i, sq_dist(rows.row(i), &centers[l * d..(l + 1) * d]))
                })
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, best)) if best >= v => acc,
                    _ => Some((i, v)),
                });
            if let Some((i, _)) = far {
                centers[c * d..(c + 1) * d].copy_from_slice(rows.row(i));
                labels[i] = c;
            }
        }
        if converged && counts.iter().all(|&c| c > 0) {
            break;
        }
    }
    assign(rows, n, k, &centers, &mut labels);
    means(rows, k, &labels, &mut centers);
    let distortion = mean_distortion(rows, k, &labels);
    (labels, centers, distortion, history)
}

fn mean_distortion(rows: &Rows, k: usize, labels: &[usize]) -> f64 {
    let d = rows.d;
    let mut centers = vec![0.0; k * d];
    means(rows, k, labels, &mut centers);
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(rows.row(i), &centers[l * d..(l + 1) * d]))
        .sum()
}

/// `Σ_k Σ_{i∈C_k} ‖x_i − μ_k‖²`.
pub fn kmeans_distortion(points: &DMatrix<f64>, assign: &HardAssignment) -> f64 {
    let k = assign.num_clusters();
    mean_distortion(&Rows::new(points), k, &assign.labels)
}

/// `Σ_k (1/|C_k|) Σ_{i,j∈C_k} ½‖x_i − x_j‖²`, equal to [`kmeans_distortion`].
pub fn pairwise_distortion(points: &DMatrix<f64>, assign: &HardAssignment) -> f64 {
    let rows = Rows::new(points);
    let k = assign.num_clusters();
    let mut sizes = vec![0usize; k];
    for &l in &assign.labels {
        sizes[l] += 1;
    }
    let mut sums = vec![0.0; k];
    let n = assign.len();
    for i in 0..n {
        for j in 0..n {
            if assign.labels[i] == assign.labels[j] {
                sums[assign.labels[i]] += 0.5 * sq_dist(rows.row(i), rows.row(j));
            }
        }
    }
    sums.iter()
        .zip(&sizes)
        .filter(|(_, &s)| s > 0)
        .map(|(v, &s)| v / s as f64)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMediansResult {
    pub assignment: HardAssignment,
    pub medoids: Vec<usize>,
    pub cost: f64,
}

/// K-medians over `n` items under `metric`, by single-swap local search from
/// D-weighted seeding. Best of `cfg.restarts`.
pub fn kmedians<F>(n: usize, metric: F, cfg: &KMeansConfig) -> Result<KMediansResult>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    cfg.validate(n)?;
    let dist: Vec<f64> = (0..n * n).into_par_iter().map(|t| metric(t / n, t % n)).collect();
    let seeds = SeedStream::new(cfg.seed);
    let runs: Vec<(Vec<usize>, f64)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| pam(&dist, n, cfg, &mut seeds.rng(&format!("kmedians/{r}"))))
        .collect();
    let (medoids, cost) = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.1.total_cmp(&b.1).then(i.cmp(j)))
        .map(|(_, run)| run)
        .expect("at least one restart");
    let labels = (0..n)
        .map(|i| {
            let mut best = (f64::INFINITY, 0);
            for (s, &m) in medoids.iter().enumerate() {
                if dist[i * n + m] < best.0 {
                    best = (dist[i * n + m], s);
                }
            }
            best.1
        })
        .collect();
    Ok(KMediansResult {
        assignment: HardAssignment::uniform(labels),
        medoids,
        cost,
    })
}

/// Euclidean K-medians on point rows.
pub fn kmedians_points(points: &DMatrix<f64>, cfg: &KMeansConfig) -> Result<KMediansResult> {
    let rows = Rows::new(points);
    kmedians(points.nrows(), |i, j| sq_dist(rows.row(i), rows.row(j)).sqrt(), cfg)
}

fn pam(dist: &[f64], n: usize, cfg: &KMeansConfig, rng: &mut impl Rng) -> (Vec<usize>, f64) {
    let k = cfg.k;
    let mut medoids = vec![rng.random_range(0..n)];
    let mut near: Vec<f64> = (0..n).map(|i| dist[i * n + medoids[0]]).collect();
    while medoids.len() < k {
        let total: f64 = near.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, w) in near.iter().enumerate() {
                if *w > 0.0 && t < *w {
                    chosen = Some(i);
                    break;
                }
                t -= w;
            }
            chosen.unwrap_or_else(|| near.iter().rposition(|w| *w > 0.0).unwrap_or(0))
        } else {
            (0..n).find(|i| !medoids.contains(i)).unwrap_or(0)
        };
        if medoids.contains(&pick) {
            let alt = (0..n).find(|i| !medoids.contains(i)).unwrap_or(pick);
            medoids.push(alt);
        } else {
            medoids.push(pick);
        }
        for (i, w) in near.iter_mut().enumerate() {
            *w = w.min(dist[i * n + *medoids.last().unwrap()]);
        }
    }
    let cost_of = |meds: &[usize]| -> f64 {
        (0..n)
            .map(|i| meds.iter().map(|&m| dist[i * n + m]).fold(f64::INFINITY, f64::min))
            .sum()
    };
    let mut cost = cost_of(&medoids);
    let scale = dist.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    for _ in 0..cfg.max_iters.max(1) * 10 {
        let mut first = vec![f64::INFINITY; n];
        let mut second = vec![f64::INFINITY; n];
        let mut owner = vec![0usize; n];
        for i in 0..n {
            for (s, &m) in medoids.iter().enumerate() {
                let v = dist[i * n + m];
                if v < first[i] {
                    second[i] = first[i];
                    first[i] = v;
                    owner[i] = s;
                } else if v < second[i] {
                    second[i] = v;
                }
            }
        }
        let mut best = (0.0, usize::MAX, usize::MAX);
        for s in 0..k {
            for o in 0..n {
                if medoids.contains(&o) {
                    continue;
                }
                let delta: f64 = (0..n)
                    .map(|i| {
                        let without = if owner[i] == s { second[i] } else { first[i] };
                        without.min(dist[i * n + o]) - first[i]
                    })
                    .sum();
                if delta < best.0 - 1e-12 * scale {
                    best = (delta, s, o);
                }
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        medoids[best.1] = best.2;
        cost = cost_of(&medoids);
    }
    (medoids, cost)
}
