// Arrangements where the registered problem is forced away from the
// optimal rank-2 solution.

use transport_clustering::datasets::{build_euclidean_lb, build_sqeuclidean_lb, lb_non_monge_labels};
use transport_clustering::fullrank::exact_assignment;
use transport_clustering::oracle::sigma_respecting_lower_bound;
use transport_clustering::registration::monge_register;
use transport_clustering::{partition_cost, CostSpec, Result};

pub fn run() -> Result<()> {
    let (k, eps) = (200, 1e-3);

    let (x, y) = build_euclidean_lb(k, eps)?;
    let cost = CostSpec::euclidean(&x.points, &y.points)?;
    report("euclidean", &cost, x.labels.as_deref().unwrap_or_default(), k)?;

    let (x, y) = build_sqeuclidean_lb(k, eps)?;
    let cost = CostSpec::dense(CostSpec::sq_euclidean(x.points.clone(), y.points.clone())?.to_dense()?)?;
    report("sq-euclidean", &cost, x.labels.as_deref().unwrap_or_default(), k)
}

fn report(name: &str, cost: &CostSpec, types: &[usize], k: usize) -> Result<()> {
    let sigma = exact_assignment(cost)?;
    let registered = monge_register(cost, &sigma)?.to_dense()?;
    let forced = sigma_respecting_lower_bound(&registered, types)?;
    let (xl, yl) = lb_non_monge_labels(k);
    let free = partition_cost(cost, &xl, &yl);
    println!(
        "{name}: monge {:.6}, registered optimum >= {forced:.4}, free optimum <= {free:.4}, ratio {:.4}",
        sigma.cost(cost) * sigma.len() as f64,
        forced / free
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
