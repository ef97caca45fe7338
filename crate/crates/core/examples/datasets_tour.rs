// Every synthetic generator, summarized.

use transport_clustering::datasets::{
    build_euclidean_lb, build_sqeuclidean_lb, gen_fragmented_hypercube, gen_moons_gaussians, gen_sbm_cost,
    gen_shifted_gaussians,
};
use transport_clustering::Result;

pub fn run() -> Result<()> {
    let (x, y) = gen_moons_gaussians(256, 0.1, 1)?;
    println!("moons/8 gaussians: {} x {} and {} x {}", x.len(), x.dim(), y.len(), y.dim());

    let (x, _, labels) = gen_shifted_gaussians(100, 5, 0.1, 1)?;
    let sizes: Vec<usize> = (0..5).map(|k| labels.iter().filter(|&&l| l == k).count()).collect();
    println!("shifted gaussians: {} points in R^{}, cluster sizes {sizes:?}", x.len(), x.dim());

    let (cost, labels) = gen_sbm_cost(3, 10, 0.5, 0.25, (1.0, 2.0), 1)?;
    let m = cost.to_dense()?;
    println!("sbm: {} vertices, {} blocks, diameter {:.3}", labels.len(), 3, m.max());

    let (x, y) = gen_fragmented_hypercube(50, 10, 1)?;
    println!("hypercube: {} points in R^{}, target |y_0| max {:.3}", x.len(), y.dim(), y.points.column(0).amax());

    let (x, _) = build_euclidean_lb(3, 0.1)?;
    let (s, _) = build_sqeuclidean_lb(3, 0.1)?;
    println!("lower-bound arrangements: {} and {} points per side", x.len(), s.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
