// Exact check of the registered-problem bound on small random instances.

use transport_clustering::oracle::{random_instance, verify_approximation_bound, CostClass};
use transport_clustering::Result;

pub fn run() -> Result<()> {
    for class in [CostClass::NegativeType, CostClass::Kernel, CostClass::Metric] {
        let mut worst: f64 = 0.0;
        let mut violations = 0;
        for seed in 0..50 {
            let cost = random_instance(class, 6, seed)?;
            let rep = verify_approximation_bound(&cost, 2, class)?;
            if !rep.holds {
                violations += 1;
            }
            if rep.bound > 0.0 {
                worst = worst.max(rep.lhs / rep.bound);
            }
        }
        println!("{class:?}: {violations} violations, max lhs/bound {worst:.4}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
