mod common;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use transport_clustering::evaluation::{ami, ari, cta, expected_mutual_info, relative_cost};
use transport_clustering::{assemble_plan, Coupling, LowRankPlan, ProbVector};

fn pair_count_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            in_a += f64::from(u8::from(sa));
            in_b += f64::from(u8::from(sb));
            both += f64::from(u8::from(sa && sb));
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    let expected = in_a * in_b / total;
    (both - expected) / (0.5 * (in_a + in_b) - expected)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

fn direct_emi(rows: &[usize], cols: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    let mut s = 0.0;
    for &a in rows {
        for &b in cols {
            for nij in 1..=a.min(b) {
                if a + b > n + nij {
                    continue;
                }
                let v = nij as f64;
                let p = factorial(a) * factorial(b) * factorial(n - a) * factorial(n - b)
                    / (factorial(n) * factorial(nij) * factorial(a - nij) * factorial(b - nij) * factorial(n + nij - a - b));
                s += v / nf * (nf * v / (a * b) as f64).ln() * p;
            }
        }
    }
    s
}

#[test]
fn ari_examples() {
    let a = [0, 0, 1, 1, 2, 2];
    assert_eq!(ari(&a, &a).unwrap(), 1.0);
    assert_abs_diff_eq!(ari(&a, &[5, 5, 3, 3, 9, 9]).unwrap(), 1.0, epsilon = 1e-15);
    let v = ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
    assert_abs_diff_eq!(v, pair_count_ari(&[0, 0, 1, 1], &[0, 1, 0, 1]), epsilon = 1e-15);
    assert_abs_diff_eq!(v, -0.5, epsilon = 1e-15);
    assert!(ari(&[0, 1], &[0]).is_err());
}

#[test]
fn ami_examples() {
    let a = [0, 0, 1, 1, 2, 2];
    assert_abs_diff_eq!(ami(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(ami(&a, &[0; 6]).unwrap(), 0.0, epsilon = 1e-12);
    assert!(ami(&[0, 1], &[0]).is_err());
}

#[test]
fn expected_mutual_info_matches_direct_sum() {
    // a = (0,0,0,1,1,2), b = (0,0,1,1,1,1)
    let rows = [3, 2, 1];
    let cols = [2, 4];
    assert_abs_diff_eq!(expected_mutual_info(&rows, &cols, 6), direct_emi(&rows, &cols, 6), epsilon = 1e-14);
    let rows = [2, 2, 2];
    let cols = [3, 3];
    assert_abs_diff_eq!(expected_mutual_info(&rows, &cols, 6), direct_emi(&rows, &cols, 6), epsilon = 1e-14);
}

#[test]
fn cta_examples() {
    let id = Coupling::from_matrix(DMatrix::identity(4, 4) * 0.25).unwrap();
    let labels = [0, 1, 1, 0];
    assert_eq!(cta(&id, &labels, &labels).unwrap(), 1.0);
    assert_eq!(cta(&id, &labels, &[2, 2, 3, 3]).unwrap(), 0.0);
}

#[test]
fn cta_matches_double_loop() {
    let mut rng = common::rng(81);
    let (plan, _, _) = common::random_plan(&mut rng, 7, 5, 3);
    let lx = [0, 1, 2, 0, 1, 2, 0];
    let ly = [2, 1, 0, 0, 1];
    let p = assemble_plan(&plan).unwrap();
    let (mut diag, mut total) = (0.0, 0.0);
    for i in 0..7 {
        for j in 0..5 {
            total += p.matrix()[(i, j)];
            if lx[i] == ly[j] {
                diag += p.matrix()[(i, j)];
            }
        }
    }
    assert_abs_diff_eq!(cta(&p, &lx, &ly).unwrap(), diag / total, epsilon = 1e-12);
    assert_abs_diff_eq!(cta(&plan, &lx, &ly).unwrap(), diag / total, epsilon = 1e-12);
}

#[test]
fn relative_cost_examples() {
    assert_eq!(relative_cost(3.0, 3.0).unwrap(), 1.0);
    assert_eq!(relative_cost(2.0, 4.0).unwrap(), 0.5);
    assert!(relative_cost(1.0, 0.0).is_err());
}

fn labels(max_k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..max_k, 2..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn scores_are_symmetric_and_bounded((a, b) in (2usize..40).prop_flat_map(|n| (prop::collection::vec(0usize..5, n), prop::collection::vec(0usize..5, n)))) {
        let (x, y) = (ari(&a, &b).unwrap(), ari(&b, &a).unwrap());
        prop_assert!((x - y).abs() < 1e-12);
        prop_assert!(x <= 1.0 + 1e-12);
        let (x, y) = (ami(&a, &b).unwrap(), ami(&b, &a).unwrap());
        prop_assert!((x - y).abs() < 1e-12);
        prop_assert!(x <= 1.0 + 1e-12);
    }

    #[test]
    fn ari_equals_pair_counting(a in labels(4), seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let b: Vec<usize> = a.iter().map(|&l| (l + rand::Rng::random_range(&mut rng, 0..2)) % 4).collect();
        let direct = pair_count_ari(&a, &b);
        if direct.is_finite() {
            prop_assert!((ari(&a, &b).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn scores_ignore_label_names(a in labels(5), b_seed in any::<u64>(), shift in 1usize..50) {
        let mut rng = common::rng(b_seed);
        let b: Vec<usize> = a.iter().map(|_| rand::Rng::random_range(&mut rng, 0..3)).collect();
        let renamed: Vec<usize> = a.iter().map(|&l| (l * 7 + shift) % 97).collect();
        prop_assert!((ari(&a, &b).unwrap() - ari(&renamed, &b).unwrap()).abs() < 1e-12);
        prop_assert!((ami(&a, &b).unwrap() - ami(&renamed, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cta_is_a_fraction(seed in any::<u64>(), n in 1usize..20, m in 1usize..20, k in 1usize..4, classes in 1usize..4) {
        let mut rng = common::rng(seed);
        let (plan, _, _) = common::random_plan(&mut rng, n, m, k);
        let lx: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..classes)).collect();
        let ly: Vec<usize> = (0..m).map(|_| rand::Rng::random_range(&mut rng, 0..classes)).collect();
        let low = cta(&plan, &lx, &ly).unwrap();
        let full = cta(&assemble_plan(&plan).unwrap(), &lx, &ly).unwrap();
        prop_assert!((0.0..=1.0).contains(&low));
        prop_assert!((low - full).abs() < 1e-10);
        let single = cta(&plan, &vec![0; n], &vec![0; m]).unwrap();
        prop_assert!((single - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rank_one_plan_cta_is_class_overlap() {
    let a = ProbVector::uniform(4);
    let b = ProbVector::uniform(4);
    let plan = LowRankPlan::new(
        DMatrix::from_column_slice(4, 1, a.as_slice()),
        DMatrix::from_column_slice(4, 1, b.as_slice()),
        ProbVector::uniform(1),
    )
    .unwrap();
    assert_abs_diff_eq!(cta(&plan, &[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.5, epsilon = 1e-15);
}
