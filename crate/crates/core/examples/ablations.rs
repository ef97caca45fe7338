// Regularization, initialization and rank sweeps at a small size.

use transport_clustering::datasets::gen_moons_gaussians;
use transport_clustering::experiments::{epsilon_sweep, init_ablation, rank_sweep};
use transport_clustering::{CostSpec, Result};

pub fn run() -> Result<()> {
    for row in epsilon_sweep(256, 10, 0.1, &[1e-4, 1e-2, 1e-1], 8)? {
        println!("epsilon {:>7}: cost {:.4}", row.parameter, row.cost);
    }

    let init = init_ablation(256, 8, 0.1, 8)?;
    println!("init registered {:.5}, random {:.5}", init.registered, init.random);

    let (x, y) = gen_moons_gaussians(128, 0.1, 8)?;
    let cost = CostSpec::sq_euclidean(x.points.clone(), y.points.clone())?;
    for row in rank_sweep(&x.points, &y.points, &cost, &[1, 2, 4, 8, 16, 32], 8)? {
        println!("rank {:>3}: cost {:.4}", row.parameter, row.cost);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
