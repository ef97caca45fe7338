//! Measures, costs, couplings and low-rank factor triples.
//!
//! A rank-`K` plan is stored as `(Q, R, g)` with `P = Q diag(1/g) Rᵀ`. Costs
//! are dense or factored; factored costs are multiplied against thin matrices
//! so the `n×m` matrix is only built when it is small enough.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest `n·m` that may be materialized densely.
pub const DENSE_THRESHOLD: usize = 1 << 26;
/// ∞-norm tolerance on coupling marginals.
pub const MARGINAL_TOL: f64 = 1e-6;
/// Tolerance on the total mass of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    weights: DVector<f64>,
}

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(weights))
    }

    pub fn from_dvector(weights: DVector<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidProbability("empty vector".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidProbability(format!(
                "entry {i} is {}",
                weights[i]
            )));
        }
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidProbability(format!("mass {total} != 1")));
        }
        Ok(Self { weights })
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidProbability(format!("mass {total}")));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: DVector::from_element(n, 1.0 / n as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn as_slice(&self) -> &[f64] {
        self.weights.as_slice()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= SIMPLEX_TOL)
    }
}

/// Transport cost between `n` source and `m` target points.
#[derive(Debug, Clone, PartialEq)]
pub enum CostSpec {
    Dense(DMatrix<f64>),
    /// `C(i, j) = ‖x_i − y_j‖²`; rows of `x` and `y` are points.
    FactoredSqEuclidean { x: DMatrix<f64>, y: DMatrix<f64> },
    /// `C = A Bᵀ`.
    FactoredGeneric { a: DMatrix<f64>, b: DMatrix<f64> },
}

impl CostSpec {
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost matrix".into()));
        }
        Ok(CostSpec::Dense(matrix))
    }

    pub fn sq_euclidean(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::Dimension(format!(
                "point dimensions {} and {}",
                x.ncols(),
                y.ncols()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud".into()));
        }
        Ok(CostSpec::FactoredSqEuclidean { x, y })
    }

    pub fn generic(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "factor ranks {} and {}",
                a.ncols(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost factors".into()));
        }
        Ok(CostSpec::FactoredGeneric { a, b })
    }

    /// Dense matrix of pairwise Euclidean distances.
    pub fn euclidean(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        let sq = Self::sq_euclidean(x.clone(), y.clone())?;
        Ok(CostSpec::Dense(sq.to_dense()?.map(f64::sqrt)))
    }

    pub fn nrows(&self) -> usize {
        match self {
            CostSpec::Dense(c) => c.nrows(),
            CostSpec::FactoredSqEuclidean { x, .. } => x.nrows(),
            CostSpec::FactoredGeneric { a, .. } => a.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            CostSpec::Dense(c) => c.ncols(),
            CostSpec::FactoredSqEuclidean { y, .. } => y.nrows(),
            CostSpec::FactoredGeneric { b, .. } => b.nrows(),
        }
    }

    pub fn is_factored(&self) -> bool {
        !matches!(self, CostSpec::Dense(_))
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            CostSpec::Dense(c) => c[(i, j)],
            CostSpec::FactoredSqEuclidean { x, y } => (0..x.ncols())
                .map(|d| {
                    let t = x[(i, d)] - y[(j, d)];
                    t * t
                })
                .sum(),
            CostSpec::FactoredGeneric { a, b } => {
                (0..a.ncols()).map(|d| a[(i, d)] * b[(j, d)]).sum()
            }
        }
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.to_dense_with_limit(DENSE_THRESHOLD)
    }

    /// Materializes the cost, refusing when `n·m > limit`.
    pub fn to_dense_with_limit(&self, limit: usize) -> Result<DMatrix<f64>> {
        let (n, m) = (self.nrows(), self.ncols());
        if n.saturating_mul(m) > limit {
            return Err(Error::TooDense { n, m, limit });
        }
        Ok(match self {
            CostSpec::Dense(c) => c.clone(),
            CostSpec::FactoredGeneric { a, b } => a * b.transpose(),
            CostSpec::FactoredSqEuclidean { .. } => {
                DMatrix::from_fn(n, m, |i, j| self.entry(i, j))
            }
        })
    }

    /// `C · M` for `M` with `m` rows.
    pub fn mul_right(&self, mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if mat.nrows() != self.ncols() {
            return Err(Error::Dimension(format!(
                "C is {}x{}, right operand has {} rows",
                self.nrows(),
                self.ncols(),
                mat.nrows()
            )));
        }
        Ok(match self {
            CostSpec::Dense(c) => c * mat,
            CostSpec::FactoredGeneric { a, b } => a * (b.transpose() * mat),
            CostSpec::FactoredSqEuclidean { x, y } => sq_mul(x, y, mat),
        })
    }

    /// `Cᵀ · M` for `M` with `n` rows.
    pub fn mul_left_transpose(&self, mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if mat.nrows() != self.nrows() {
            return Err(Error::Dimension(format!(
                "Cᵀ is {}x{}, right operand has {} rows",
                self.ncols(),
                self.nrows(),
                mat.nrows()
            )));
        }
        Ok(match self {
            CostSpec::Dense(c) => c.tr_mul(mat),
            CostSpec::FactoredGeneric { a, b } => b * (a.transpose() * mat),
            CostSpec::FactoredSqEuclidean { x, y } => sq_mul(y, x, mat),
        })
    }

    pub fn transpose(&self) -> CostSpec {
        match self {
            CostSpec::Dense(c) => CostSpec::Dense(c.transpose()),
            CostSpec::FactoredSqEuclidean { x, y } => CostSpec::FactoredSqEuclidean {
                x: y.clone(),
                y: x.clone(),
            },
            CostSpec::FactoredGeneric { a, b } => CostSpec::FactoredGeneric {
                a: b.clone(),
                b: a.clone(),
            },
        }
    }

    /// `(C + Cᵀ)/2` as a dense matrix.
    pub fn symmetrized(&self) -> Result<DMatrix<f64>> {
        if self.nrows() != self.ncols() {
            return Err(Error::Rectangular {
                n: self.nrows(),
                m: self.ncols(),
            });
        }
        let c = self.to_dense()?;
        Ok((&c + c.transpose()) * 0.5)
    }

    /// Median entry; large factored costs are sampled on a regular grid.
    pub fn median(&self) -> f64 {
        let (n, m) = (self.nrows(), self.ncols());
        let stride = ((n * m) as f64 / 1_000_000.0).sqrt().ceil().max(1.0) as usize;
        let mut vals: Vec<f64> = Vec::new();
        for i in (0..n).step_by(stride) {
            for j in (0..m).step_by(stride) {
                vals.push(self.entry(i, j));
            }
        }
        if vals.is_empty() {
            return 0.0;
        }
        let mid = vals.len() / 2;
        vals.select_nth_unstable_by(mid, f64::total_cmp);
        vals[mid]
    }

    pub fn max_abs(&self) -> f64 {
        let (n, m) = (self.nrows(), self.ncols());
        let mut best = 0.0f64;
        for i in 0..n {
            for j in 0..m {
                best = best.max(self.entry(i, j).abs());
            }
        }
        best
    }
}

/// `C·M` for `C(i, j) = ‖u_i − v_j‖²`.
fn sq_mul(u: &DMatrix<f64>, v: &DMatrix<f64>, mat: &DMatrix<f64>) -> DMatrix<f64> {
    let un = row_sq_norms(u);
    let vn = row_sq_norms(v);
    let col_sums = DVector::from_iterator(mat.ncols(), mat.column_iter().map(|c| c.sum()));
    let vn_m = mat.tr_mul(&vn);
    let mut out = u * (v.transpose() * mat) * -2.0;
    for k in 0..mat.ncols() {
        for i in 0..u.nrows() {
            out[(i, k)] += un[i] * col_sums[k] + vn_m[k];
        }
    }
    out
}

pub(crate) fn row_sq_norms(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.nrows(), x.row_iter().map(|r| r.norm_squared()))
}

/// Nonnegative matrix with prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    matrix: DMatrix<f64>,
    row_marginal: ProbVector,
    col_marginal: ProbVector,
}

impl Coupling {
    pub fn new(matrix: DMatrix<f64>, a: ProbVector, b: ProbVector) -> Result<Self> {
        if matrix.nrows() != a.len() || matrix.ncols() != b.len() {
            return Err(Error::Dimension(format!(
                "coupling {}x{} vs marginals {} and {}",
                matrix.nrows(),
                matrix.ncols(),
                a.len(),
                b.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Infeasible(f64::NAN));
        }
        let c = Self {
            matrix,
            row_marginal: a,
            col_marginal: b,
        };
        let residual = c.marginal_residual();
        if residual > MARGINAL_TOL {
            return Err(Error::Marginal {
                residual,
                tolerance: MARGINAL_TOL,
            });
        }
        Ok(c)
    }

    /// Coupling whose marginals are read off the matrix.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let a = ProbVector::new(matrix.row_iter().map(|r| r.sum()).collect())?;
        let b = ProbVector::new(matrix.column_iter().map(|c| c.sum()).collect())?;
        Self::new(matrix, a, b)
    }

    /// The product coupling `a bᵀ`.
    pub fn independent(a: &ProbVector, b: &ProbVector) -> Self {
        Self {
            matrix: a.weights() * b.weights().transpose(),
            row_marginal: a.clone(),
            col_marginal: b.clone(),
        }
    }

    /// The permutation coupling `(1/n) P_σ`.
    pub fn from_permutation(sigma: &Permutation) -> Self {
        let n = sigma.len();
        let mut matrix = DMatrix::zeros(n, n);
        for (i, &j) in sigma.as_slice().iter().enumerate() {
            matrix[(i, j)] = 1.0 / n as f64;
        }
        Self {
            matrix,
            row_marginal: ProbVector::uniform(n),
            col_marginal: ProbVector::uniform(n),
        }
    }

    pub(crate) fn from_parts_unchecked(
        matrix: DMatrix<f64>,
        row_marginal: ProbVector,
        col_marginal: ProbVector,
    ) -> Self {
        Self {
            matrix,
            row_marginal,
            col_marginal,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn row_marginal(&self) -> &ProbVector {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &ProbVector {
        &self.col_marginal
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Largest absolute deviation of a row or column sum from its marginal.
    pub fn marginal_residual(&self) -> f64 {
        marginal_residual(&self.matrix, self.row_marginal.weights(), self.col_marginal.weights())
    }
}

pub(crate) fn marginal_residual(p: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let rows = p
        .row_iter()
        .zip(a.iter())
        .map(|(r, ai)| (r.sum() - ai).abs())
        .fold(0.0, f64::max);
    let cols = p
        .column_iter()
        .zip(b.iter())
        .map(|(c, bj)| (c.sum() - bj).abs())
        .fold(0.0, f64::max);
    rows.max(cols)
}

/// A bijection of `{0, …, n−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    sigma: Vec<usize>,
}

impl Permutation {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let n = sigma.len();
        let mut seen = vec![false; n];
        for &s in &sigma {
            if s >= n || seen[s] {
                return Err(Error::InvalidPermutation(format!(
                    "index {s} out of range or repeated"
                )));
            }
            seen[s] = true;
        }
        Ok(Self { sigma })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sigma: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.sigma
    }

    pub fn apply(&self, i: usize) -> usize {
        self.sigma[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.sigma.len()];
        for (i, &s) in self.sigma.iter().enumerate() {
            inv[s] = i;
        }
        Self { sigma: inv }
    }

    /// `Σ_i C(i, σ(i)) / n`, the cost of the coupling `(1/n) P_σ`.
    pub fn cost(&self, cost: &CostSpec) -> f64 {
        let n = self.sigma.len();
        self.sigma
            .iter()
            .enumerate()
            .map(|(i, &j)| cost.entry(i, j))
            .sum::<f64>()
            / n as f64
    }
}

/// Rank-`K` plan `Q diag(1/g) Rᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPlan {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    g: ProbVector,
}

impl LowRankPlan {
    /// Checks nonnegativity, `Qᵀ1 = Rᵀ1 = g` and `g > 0`.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, g: ProbVector) -> Result<Self> {
        let k = g.len();
        if q.ncols() != k || r.ncols() != k {
            return Err(Error::Dimension(format!(
                "Q has {} columns, R has {}, g has {k} entries",
                q.ncols(),
                r.ncols()
            )));
        }
        if q.iter().chain(r.iter()).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Infeasible(f64::NAN));
        }
        if let Some(i) = g.as_slice().iter().position(|&v| v <= 0.0) {
            return Err(Error::ZeroMass(i));
        }
        let mut residual = 0.0f64;
        for k in 0..k {
            residual = residual
                .max((q.column(k).sum() - g.get(k)).abs())
                .max((r.column(k).sum() - g.get(k)).abs());
        }
        if residual > MARGINAL_TOL {
            return Err(Error::Marginal {
                residual,
                tolerance: MARGINAL_TOL,
            });
        }
        Ok(Self { q, r, g })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn g(&self) -> &ProbVector {
        &self.g
    }

    pub fn rank(&self) -> usize {
        self.g.len()
    }

    pub fn row_marginal(&self) -> DVector<f64> {
        row_sums(&self.q)
    }

    pub fn col_marginal(&self) -> DVector<f64> {
        row_sums(&self.r)
    }

    /// Largest deviation of `Q1` from `a` and `R1` from `b`.
    pub fn marginal_residual(&self, a: &ProbVector, b: &ProbVector) -> Result<f64> {
        if a.len() != self.q.nrows() || b.len() != self.r.nrows() {
            return Err(Error::Dimension("marginal lengths".into()));
        }
        let ra = (self.row_marginal() - a.weights()).amax();
        let rb = (self.col_marginal() - b.weights()).amax();
        Ok(ra.max(rb))
    }

    /// Full invariant check against marginals and a floor on `g`.
    pub fn validate(&self, a: &ProbVector, b: &ProbVector, g_floor: f64) -> Result<()> {
        let residual = self.marginal_residual(a, b)?;
        if residual > MARGINAL_TOL {
            return Err(Error::Marginal {
                residual,
                tolerance: MARGINAL_TOL,
            });
        }
        if let Some(k) = self.g.as_slice().iter().position(|&v| v < g_floor) {
            return Err(Error::ZeroMass(k));
        }
        Ok(())
    }
}

pub(crate) fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

pub(crate) fn col_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

/// One cluster label per point together with the point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct HardAssignment {
    pub labels: Vec<usize>,
    pub row_mass: ProbVector,
}

impl HardAssignment {
    pub fn new(labels: Vec<usize>, row_mass: ProbVector) -> Result<Self> {
        if labels.len() != row_mass.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} masses",
                labels.len(),
                row_mass.len()
            )));
        }
        Ok(Self { labels, row_mass })
    }

    pub fn uniform(labels: Vec<usize>) -> Self {
        let n = labels.len();
        Self {
            labels,
            row_mass: ProbVector::uniform(n),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct clusters, i.e. one past the largest label.
    pub fn num_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn cluster_masses(&self, k: usize) -> Vec<f64> {
        let mut g = vec![0.0; k];
        for (i, &l) in self.labels.iter().enumerate() {
            if l < k {
                g[l] += self.row_mass.get(i);
            }
        }
        g
    }
}

/// Factor matrix of a hard assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct HardFactor {
    pub q: DMatrix<f64>,
    pub g: ProbVector,
    /// Clusters that received no mass.
    pub empty: Vec<usize>,
}

/// Points in `ℝᵈ` (one per row) with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub points: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
    pub seed: u64,
}

impl LabeledPointCloud {
    pub fn new(points: DMatrix<f64>, labels: Option<Vec<usize>>, seed: u64) -> Result<Self> {
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud".into()));
        }
        if let Some(l) = &labels {
            if l.len() > points.nrows() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} points",
                    l.len(),
                    points.nrows()
                )));
            }
        }
        Ok(Self {
            points,
            labels,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Dense coupling `Q diag(1/g) Rᵀ`.
pub fn assemble_plan(plan: &LowRankPlan) -> Result<Coupling> {
    let (n, m) = (plan.q.nrows(), plan.r.nrows());
    if n.saturating_mul(m) > DENSE_THRESHOLD {
        return Err(Error::TooDense {
            n,
            m,
            limit: DENSE_THRESHOLD,
        });
    }
    let mut scaled = plan.q.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col /= plan.g.get(k);
    }
    let p = scaled * plan.r.transpose();
    let a = ProbVector::normalized(row_sums(&plan.q).iter().copied().collect())?;
    let b = ProbVector::normalized(row_sums(&plan.r).iter().copied().collect())?;
    Coupling::new(p, a, b)
}

/// `⟨C, Q diag(1/g) Rᵀ⟩` without forming the `n×m` plan.
pub fn lrot_cost(cost: &CostSpec, plan: &LowRankPlan) -> Result<f64> {
    if cost.nrows() != plan.q.nrows() || cost.ncols() != plan.r.nrows() {
        return Err(Error::Dimension(format!(
            "cost {}x{} vs plan {}x{}",
            cost.nrows(),
            cost.ncols(),
            plan.q.nrows(),
            plan.r.nrows()
        )));
    }
    let cr = cost.mul_right(&plan.r)?;
    Ok((0..plan.rank())
        .map(|k| plan.q.column(k).dot(&cr.column(k)) / plan.g.get(k))
        .sum())
}

/// `⟨C, P⟩`.
pub fn full_cost(cost: &CostSpec, coupling: &Coupling) -> Result<f64> {
    let p = coupling.matrix();
    if cost.nrows() != p.nrows() || cost.ncols() != p.ncols() {
        return Err(Error::Dimension(format!(
            "cost {}x{} vs coupling {}x{}",
            cost.nrows(),
            cost.ncols(),
            p.nrows(),
            p.ncols()
        )));
    }
    Ok(match cost {
        CostSpec::Dense(c) => c.dot(p),
        _ => {
            let mut total = 0.0;
            for j in 0..p.ncols() {
                for i in 0..p.nrows() {
                    let v = p[(i, j)];
                    if v != 0.0 {
                        total += v * cost.entry(i, j);
                    }
                }
            }
            total
        }
    })
}

/// Factor `Q` with `Q(i, label_i) = mass_i`, and its column sums.
pub fn hard_to_factor(assign: &HardAssignment, k: usize) -> Result<HardFactor> {
    let n = assign.len();
    let mut q = DMatrix::zeros(n, k);
    for (i, &l) in assign.labels.iter().enumerate() {
        if l >= k {
            return Err(Error::LabelOutOfRange { label: l, k });
        }
        q[(i, l)] = assign.row_mass.get(i);
    }
    let g_raw = assign.cluster_masses(k);
    let empty = g_raw
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 0.0)
        .map(|(i, _)| i)
        .collect();
    let g = ProbVector::new(g_raw)?;
    Ok(HardFactor { q, g, empty })
}

/// `Σ_k (1/|X_k|) Σ_{i∈X_k, j∈Y_k} C(i, j)` over nonempty blocks.
pub fn partition_cost(cost: &CostSpec, x_labels: &[usize], y_labels: &[usize]) -> f64 {
    let k = x_labels
        .iter()
        .chain(y_labels.iter())
        .max()
        .map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in x_labels {
        sizes[l] += 1;
    }
    let mut sums = vec![0.0; k];
    for (i, &li) in x_labels.iter().enumerate() {
        for (j, &lj) in y_labels.iter().enumerate() {
            if li == lj {
                sums[li] += cost.entry(i, j);
            }
        }
    }
    sums.iter()
        .zip(&sizes)
        .filter(|(_, &s)| s > 0)
        .map(|(v, &s)| v / s as f64)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn half_identity() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5])
    }

    #[test]
    fn assemble_diagonal_factors() {
        let plan =
            LowRankPlan::new(half_identity(), half_identity(), ProbVector::uniform(2)).unwrap();
        let p = assemble_plan(&plan).unwrap();
        assert_abs_diff_eq!(p.matrix(), &half_identity(), epsilon = 1e-15);
    }

    #[test]
    fn assemble_rank_one_is_independent() {
        let a = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let b = ProbVector::new(vec![0.6, 0.4]).unwrap();
        let plan = LowRankPlan::new(
            DMatrix::from_column_slice(3, 1, a.as_slice()),
            DMatrix::from_column_slice(2, 1, b.as_slice()),
            ProbVector::uniform(1),
        )
        .unwrap();
        let p = assemble_plan(&plan).unwrap();
        let expected = Coupling::independent(&a, &b);
        assert_abs_diff_eq!(p.matrix(), expected.matrix(), epsilon = 1e-15);
    }

    #[test]
    fn lrot_cost_trivial_cases() {
        let c = CostSpec::dense(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let diag =
            LowRankPlan::new(half_identity(), half_identity(), ProbVector::uniform(2)).unwrap();
        assert_abs_diff_eq!(lrot_cost(&c, &diag).unwrap(), 0.0);
        let anti = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let cross = LowRankPlan::new(half_identity(), anti, ProbVector::uniform(2)).unwrap();
        assert_abs_diff_eq!(lrot_cost(&c, &cross).unwrap(), 1.0);
    }

    #[test]
    fn full_cost_trivial_cases() {
        let p = Coupling::from_matrix(half_identity()).unwrap();
        let zero = CostSpec::dense(DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(full_cost(&zero, &p).unwrap(), 0.0);
        let eye = CostSpec::dense(DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(full_cost(&eye, &p).unwrap(), 1.0);
    }

    #[test]
    fn hard_to_factor_examples() {
        let f = hard_to_factor(&HardAssignment::uniform(vec![0, 1]), 2).unwrap();
        assert_abs_diff_eq!(f.q, half_identity());
        assert_eq!(f.g.as_slice(), &[0.5, 0.5]);

        let f = hard_to_factor(&HardAssignment::uniform(vec![0, 0, 0]), 1).unwrap();
        assert_abs_diff_eq!(f.q, DMatrix::from_element(3, 1, 1.0 / 3.0), epsilon = 1e-15);

        let f = hard_to_factor(&HardAssignment::uniform(vec![0, 0, 1, 2]), 3).unwrap();
        assert_eq!(f.g.as_slice(), &[0.5, 0.25, 0.25]);

        let f = hard_to_factor(&HardAssignment::uniform(vec![0, 0, 2]), 3).unwrap();
        assert_eq!(f.empty, vec![1]);

        assert!(matches!(
            hard_to_factor(&HardAssignment::uniform(vec![0, 3]), 2),
            Err(Error::LabelOutOfRange { label: 3, k: 2 })
        ));
    }

    #[test]
    fn factored_products_match_dense() {
        let x = DMatrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.4);
        let y = DMatrix::from_fn(4, 3, |i, j| ((i * 2 + j * 5) % 7) as f64 * 0.2 - 0.1);
        let m = DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 * 0.1);
        let mt = DMatrix::from_fn(5, 2, |i, j| (i * j) as f64 * 0.1 + 0.05);
        let f = CostSpec::sq_euclidean(x, y).unwrap();
        let d = CostSpec::Dense(f.to_dense().unwrap());
        assert_abs_diff_eq!(f.mul_right(&m).unwrap(), d.mul_right(&m).unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            f.mul_left_transpose(&mt).unwrap(),
            d.mul_left_transpose(&mt).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dense_threshold_is_enforced() {
        let f = CostSpec::sq_euclidean(DMatrix::zeros(10, 1), DMatrix::zeros(10, 1)).unwrap();
        assert!(matches!(f.to_dense_with_limit(50), Err(Error::TooDense { .. })));
        assert!(f.to_dense_with_limit(100).is_ok());
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![1, 0, 2]).is_ok());
        assert!(Permutation::new(vec![1, 1, 2]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        let s = Permutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(s.inverse().inverse(), s);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::uniform(4).is_uniform());
    }
}
