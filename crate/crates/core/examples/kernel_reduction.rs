// Spectral route for registered costs that are conditionally negative
// definite, with GKMS as the fallback.

use nalgebra::DMatrix;
use transport_clustering::pipeline::{transport_cluster, Solver, TcConfig};
use transport_clustering::{datasets, CostSpec, Result};

pub fn run() -> Result<()> {
    let (x, y, _) = datasets::gen_shifted_gaussians(150, 5, 0.05, 12)?;

    // Image of X under x ↦ A x + b with A positive definite.
    let a = DMatrix::from_fn(5, 5, |i, j| if i == j { 1.5 } else { 0.1 });
    let mut pushed = &x.points * &a;
    for mut row in pushed.row_iter_mut() {
        row.add_scalar_mut(0.3);
    }

    let instances = [
        ("affine image", pushed.clone(), CostSpec::sq_euclidean(x.points.clone(), pushed)?),
        ("sq-euclidean", y.points.clone(), CostSpec::sq_euclidean(x.points.clone(), y.points.clone())?),
        ("euclidean", y.points.clone(), CostSpec::euclidean(&x.points, &y.points)?),
    ];
    for (name, target, cost) in &instances {
        for solver in [Solver::Gkms, Solver::Auto] {
            let cfg = TcConfig {
                solver,
                ..TcConfig::new(5, 12)
            };
            let out = transport_cluster(Some(&x.points), Some(target), cost, &cfg)?;
            println!(
                "{name:>12} {solver:?}: cost {:.5}, used {:?}, psd defect {}",
                out.cost,
                out.solver_used,
                out.psd_defect.map_or("-".into(), |d| format!("{d:.1e}"))
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
