//! Killing single nodes: a central hub silences every actuator, a
//! distributed sensor only removes its own share of the control action.
//!
//! ```text
//! cargo run --example failure_injection
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sls_deploy::architecture::{build, Architecture};
use sls_deploy::simulator::{random_disturbance, simulate, spof_sweep, superposition_check};
use sls_deploy::synthesis::{synthesize_h2, SynthesisProblem};
use sls_deploy::{FailureEvent, LtiSystem, Result};

pub fn run() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sys = LtiSystem::random_stable(&mut rng, 4, 2, 0.8);
    let resp = synthesize_h2(&SynthesisProblem::new(sys.clone(), 3))?.response;
    let h = 20;
    let t_fail = 6;
    let d = random_disturbance(2, 4, h, 1.0);

    let cases = [
        (Architecture::Centralized, "controller"),
        (Architecture::GlobalState, "gsk"),
        (Architecture::Naive, "s0"),
        (Architecture::Conservative, "a1"),
    ];
    println!("|u[t]|_inf after killing one node at t = {t_fail}");
    for (arch, node) in cases {
        let g = build(arch, &sys, &resp)?;
        let tr = simulate(&g, &sys, &d, h, &[FailureEvent::new(node, t_fail)])?;
        let norms: Vec<String> = tr.u[t_fail - 1..t_fail + 5].iter().map(|u| format!("{:.3}", u.amax())).collect();
        println!("  {:<13}{:<11}{}", arch.name(), node, norms.join(" "));
    }

    let g = build(Architecture::Naive, &sys, &resp)?;
    let chk = superposition_check(&g, &sys, &d, h, &FailureEvent::new("s2", t_fail))?;
    println!("\nnaive, s2 killed: failed = healthy - response to suppressed messages, residual {:.1e}", chk.residual);
    println!("  {} messages suppressed", chk.failed.suppressed.len());

    println!("\nsingle points of failure");
    for arch in Architecture::ALL {
        let sweep = spof_sweep(&build(arch, &sys, &resp)?, &sys, 1, 5)?;
        println!("  {:<13}{:?}", arch.name(), sweep.paralyzing_nodes());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
