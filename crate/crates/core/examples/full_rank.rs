// Exact assignment, entropic transport, and permutation extraction.

use transport_clustering::fullrank::{exact_assignment, extract_permutation, sinkhorn, SinkhornConfig};
use transport_clustering::{datasets, full_cost, CostSpec, ProbVector, Result};

pub fn run() -> Result<()> {
    let (x, y) = datasets::gen_moons_gaussians(64, 0.05, 9)?;
    let cost = CostSpec::sq_euclidean(x.points.clone(), y.points.clone())?;
    let u = ProbVector::uniform(64);

    let sigma = exact_assignment(&cost)?;
    println!("assignment cost {:.6}", sigma.cost(&cost));

    for eps in [1e-1, 1e-2, 1e-3] {
        let out = sinkhorn(&cost, &u, &u, &SinkhornConfig::with_epsilon(eps * cost.median()))?;
        let extracted = extract_permutation(&out.coupling)?;
        println!(
            "eps {eps:>6}: coupling {:.6}, extracted {:.6}, {} iterations, residual {:.1e}",
            full_cost(&cost, &out.coupling)?,
            extracted.cost(&cost),
            out.iterations,
            out.residual
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
