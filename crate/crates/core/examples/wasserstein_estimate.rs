// Plug-in versus low-rank estimates of W₂² on the fragmented hypercube,
// whose population value is 8.

use transport_clustering::datasets::gen_fragmented_hypercube;
use transport_clustering::experiments::{plugin_w2, tc_w2, HYPERCUBE_W2};
use transport_clustering::Result;

pub fn run() -> Result<()> {
    println!("{:>5} {:>10} {:>10}", "n", "plug-in", "rank 10");
    for (i, n) in [30usize, 60, 120].into_iter().enumerate() {
        let (x, y) = gen_fragmented_hypercube(n, 30, 100 + i as u64)?;
        let plugin = plugin_w2(&x.points, &y.points)?;
        let low = tc_w2(&x.points, &y.points, 10, 100 + i as u64)?;
        println!("{n:>5} {plugin:>10.3} {low:>10.3}");
    }
    println!("truth {HYPERCUBE_W2}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
