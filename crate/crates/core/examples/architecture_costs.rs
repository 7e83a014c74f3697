//! Memory, multiplication and communication counts for every deployment.
//!
//! ```text
//! cargo run --example architecture_costs
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sls_deploy::architecture::{build, cost_report, Architecture};
use sls_deploy::report::{comparison_text, ComparisonRow};
use sls_deploy::simulator::{compare_to_reference, random_disturbance, spof_sweep};
use sls_deploy::synthesis::{synthesize_h2, SynthesisProblem};
use sls_deploy::{LtiSystem, Result};

pub fn run() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sys = LtiSystem::random_stable(&mut rng, 6, 2, 0.7);
    let resp = synthesize_h2(&SynthesisProblem::new(sys.clone(), 5))?.response;

    let d = random_disturbance(1, 6, 50, 1.0);
    let mut rows = Vec::new();
    for arch in Architecture::ALL {
        let graph = build(arch, &sys, &resp)?;
        let sweep = spof_sweep(&graph, &sys, 1, 5)?;
        let paralyzing = sweep.paralyzing_nodes().into_iter().map(String::from).collect();
        let deviation = compare_to_reference(&graph, &sys, &resp, &d, 50)?;
        rows.push(ComparisonRow::new(&cost_report(&graph)?, paralyzing, deviation));
    }
    println!("Nx = 6, Nu = 2, T = 5\n");
    print!("{}", comparison_text(&rows));

    let cost = cost_report(&build(Architecture::Conservative, &sys, &resp)?)?;
    println!("\nconservative, per node (dense)");
    println!("{:<6}{:>8}{:>8}{:>8}", "node", "memory", "mults", "comm");
    for n in &cost.per_node {
        println!(
            "{:<6}{:>8}{:>8}{:>8}",
            n.node, n.dense.memory_scalars, n.dense.mults_per_step, n.dense.comm_scalars_per_step
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
