//! Registering a cost onto one side of a full-rank plan.
//!
//! With a permutation `σ` the registered cost is `C̃ = C P_σᵀ`, i.e.
//! `C̃(i, j) = C(i, σ(j))`. With a soft plan `P` it is `C Pᵀ diag(1/a)`, and
//! the second factor is recovered as `R = Pᵀ diag(1/a) Q`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::plan::{col_sums, row_sq_norms, row_sums, CostSpec, Coupling, Permutation, ProbVector};

/// `C̃(i, j) = C(i, σ(j))`, keeping factored costs factored.
pub fn monge_register(cost: &CostSpec, sigma: &Permutation) -> Result<CostSpec> {
    let (n, m) = (cost.nrows(), cost.ncols());
    if n != m || sigma.len() != n {
        return Err(Error::Dimension(format!(
            "cost {n}x{m} with permutation of length {}",
            sigma.len()
        )));
    }
    let s = sigma.as_slice();
    Ok(match cost {
        CostSpec::Dense(c) => CostSpec::Dense(DMatrix::from_fn(n, n, |i, j| c[(i, s[j])])),
        CostSpec::FactoredSqEuclidean { x, y } => CostSpec::FactoredSqEuclidean {
            x: x.clone(),
            y: permute_rows(y, s),
        },
        CostSpec::FactoredGeneric { a, b } => CostSpec::FactoredGeneric {
            a: a.clone(),
            b: permute_rows(b, s),
        },
    })
}

/// Row `j` of the output is row `s[j]` of the input.
pub fn permute_rows(m: &DMatrix<f64>, s: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(s.len(), m.ncols(), |j, d| m[(s[j], d)])
}

/// `C = A Bᵀ` for a squared-Euclidean cost.
fn sq_factors(x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let xn = row_sq_norms(x);
    let yn = row_sq_norms(y);
    let a = DMatrix::from_fn(x.nrows(), d + 2, |i, k| match k {
        0 => xn[i],
        1 => 1.0,
        _ => x[(i, k - 2)],
    });
    let b = DMatrix::from_fn(y.nrows(), d + 2, |j, k| match k {
        0 => 1.0,
        1 => yn[j],
        _ => -2.0 * y[(j, k - 2)],
    });
    (a, b)
}

fn check_mass(w: &ProbVector) -> Result<()> {
    match w.as_slice().iter().position(|&v| v <= 0.0) {
        Some(i) => Err(Error::ZeroMass(i)),
        None => Ok(()),
    }
}

/// `C Pᵀ diag(1/a)` (`n×n`); factored inputs stay factored as
/// `A (diag(1/a) P B)ᵀ`.
pub fn kantorovich_register(cost: &CostSpec, plan: &Coupling, a: &ProbVector) -> Result<CostSpec> {
    check_mass(a)?;
    let p = plan.matrix();
    if cost.nrows() != p.nrows() || cost.ncols() != p.ncols() || a.len() != p.nrows() {
        return Err(Error::Dimension(format!(
            "cost {}x{}, plan {}x{}, marginal {}",
            cost.nrows(),
            cost.ncols(),
            p.nrows(),
            p.ncols(),
            a.len()
        )));
    }
    let inv_a = a.weights().map(|v| 1.0 / v);
    Ok(match cost {
        CostSpec::Dense(c) => {
            let mut out = c * p.transpose();
            for (j, mut col) in out.column_iter_mut().enumerate() {
                col *= inv_a[j];
            }
            CostSpec::Dense(out)
        }
        CostSpec::FactoredGeneric { a: fa, b: fb } => {
            let mut pb = p * fb;
            for (i, mut row) in pb.row_iter_mut().enumerate() {
                row *= inv_a[i];
            }
            CostSpec::FactoredGeneric { a: fa.clone(), b: pb }
        }
        CostSpec::FactoredSqEuclidean { x, y } => {
            let (fa, fb) = sq_factors(x, y);
            let mut pb = p * fb;
            for (i, mut row) in pb.row_iter_mut().enumerate() {
                row *= inv_a[i];
            }
            CostSpec::FactoredGeneric { a: fa, b: pb }
        }
    })
}

/// `diag(1/b) Pᵀ C` (`m×m`), the registration seen from the target side.
pub fn kantorovich_register_target(cost: &CostSpec, plan: &Coupling, b: &ProbVector) -> Result<CostSpec> {
    let pt = Coupling::new(
        plan.matrix().transpose(),
        plan.col_marginal().clone(),
        plan.row_marginal().clone(),
    )?;
    let registered = kantorovich_register(&cost.transpose(), &pt, b)?;
    Ok(registered.transpose())
}

/// `R = Pᵀ diag(1/a) Q`, checked against `R1 = b` and `Rᵀ1 = Qᵀ1`.
pub fn recover_second_factor(plan: &Coupling, a: &ProbVector, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_mass(a)?;
    let p = plan.matrix();
    if q.nrows() != p.nrows() || a.len() != p.nrows() {
        return Err(Error::Dimension(format!(
            "plan has {} rows, Q has {}",
            p.nrows(),
            q.nrows()
        )));
    }
    let mut scaled = q.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row /= a.get(i);
    }
    let r = p.tr_mul(&scaled);
    let b = plan.col_marginal().weights();
    let res_b = (row_sums(&r) - b).amax();
    let res_g = (col_sums(&r) - col_sums(q)).amax();
    let residual = res_b.max(res_g);
    if residual > 1e-5 {
        return Err(Error::Infeasible(residual));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn monge_identity_and_swap() {
        let c = CostSpec::dense(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(monge_register(&c, &Permutation::identity(2)).unwrap(), c);
        let swapped = monge_register(&c, &Permutation::new(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(
            swapped,
            CostSpec::Dense(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 4.0, 3.0]))
        );
    }

    #[test]
    fn kantorovich_with_permutation_is_monge() {
        let c = CostSpec::dense(DMatrix::from_fn(4, 4, |i, j| (i * 3 + j * j) as f64)).unwrap();
        let s = Permutation::new(vec![2, 0, 3, 1]).unwrap();
        let p = Coupling::from_permutation(&s);
        let k = kantorovich_register(&c, &p, &ProbVector::uniform(4)).unwrap();
        let m = monge_register(&c, &s).unwrap();
        assert_abs_diff_eq!(k.to_dense().unwrap(), m.to_dense().unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn kantorovich_independent_is_rank_one() {
        let c = DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 + 0.5);
        let a = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let b = ProbVector::new(vec![0.4, 0.6]).unwrap();
        let p = Coupling::independent(&a, &b);
        let k = kantorovich_register(&CostSpec::Dense(c.clone()), &p, &a)
            .unwrap()
            .to_dense()
            .unwrap();
        let cb = &c * b.weights();
        for j in 0..3 {
            assert_abs_diff_eq!(k.column(j).into_owned(), cb.clone(), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_mass_rejected() {
        let c = CostSpec::dense(DMatrix::zeros(2, 2)).unwrap();
        let a = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let p = Coupling::independent(&a, &ProbVector::uniform(2));
        assert!(matches!(kantorovich_register(&c, &p, &a), Err(Error::ZeroMass(1))));
    }

    #[test]
    fn recover_single_cluster_gives_b() {
        let a = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let b = ProbVector::new(vec![0.4, 0.6]).unwrap();
        let p = Coupling::independent(&a, &b);
        let q = DMatrix::from_column_slice(3, 1, a.as_slice());
        let r = recover_second_factor(&p, &a, &q).unwrap();
        assert_abs_diff_eq!(r, DMatrix::from_column_slice(2, 1, b.as_slice()), epsilon = 1e-15);
    }

    #[test]
    fn recover_permutation_permutes_rows() {
        let s = Permutation::new(vec![1, 2, 0]).unwrap();
        let p = Coupling::from_permutation(&s);
        let q = DMatrix::from_row_slice(3, 2, &[1.0 / 3.0, 0.0, 0.0, 1.0 / 3.0, 0.0, 1.0 / 3.0]);
        let r = recover_second_factor(&p, &ProbVector::uniform(3), &q).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(r.row(s.apply(i)).into_owned(), q.row(i).into_owned(), epsilon = 1e-15);
        }
    }
}
