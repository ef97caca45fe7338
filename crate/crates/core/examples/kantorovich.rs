// Unequal sizes and non-uniform weights through an entropic coupling.

use transport_clustering::genkmeans::round_to_hard;
use transport_clustering::pipeline::{transport_cluster_kantorovich, TcConfig};
use transport_clustering::fullrank::SinkhornConfig;
use transport_clustering::{datasets, CostSpec, ProbVector, Result};

pub fn run() -> Result<()> {
    let (x, _) = datasets::gen_moons_gaussians(120, 0.05, 4)?;
    let (_, y) = datasets::gen_moons_gaussians(80, 0.05, 5)?;
    let a = ProbVector::normalized((0..120).map(|i| 1.0 + (i % 3) as f64).collect())?;
    let b = ProbVector::uniform(80);
    let cost = CostSpec::sq_euclidean(x.points.clone(), y.points.clone())?;

    let cfg = TcConfig {
        sinkhorn: SinkhornConfig::with_epsilon(1e-3),
        ..TcConfig::new(6, 4)
    };
    let out = transport_cluster_kantorovich(Some(&x.points), Some(&y.points), &a, &b, &cost, &cfg)?;
    println!("rank-6 cost {:.5} (entropic full rank {:.5})", out.cost, out.full_rank_cost);
    println!("marginal residual {:.1e}", out.plan.marginal_residual(&a, &b)?);
    println!("cluster masses {:?}", out.plan.g().as_slice().iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>());
    let hard = round_to_hard(out.plan.q(), &a);
    println!("source points per cluster {:?}", (0..6).map(|k| hard.labels.iter().filter(|&&l| l == k).count()).collect::<Vec<_>>());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
