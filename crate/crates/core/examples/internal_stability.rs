//! Unit impulses on the `x`, `u` and `δ` summing junctions of the simplified
//! loop. Eight of the nine responses are FIR; `δ -> x` passes through the
//! open-loop plant and fades like `ρ(A)^t`.
//!
//! ```text
//! cargo run --example internal_stability
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sls_deploy::simulator::{internal_stability_report, StabilityReport};
use sls_deploy::synthesis::{synthesize_h2, SynthesisProblem};
use sls_deploy::{LtiSystem, Result};

pub fn run() -> Result<()> {
    for rho in [0.5, 0.95] {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sys = LtiSystem::random_stable(&mut rng, 4, 2, rho);
        let resp = synthesize_h2(&SynthesisProblem::new(sys.clone(), 6))?.response;
        for h in [StabilityReport::default_horizon(6), 400] {
            let rep = internal_stability_report(&sys, resp.phi_u_blocks(), h, 1e-6)?;
            println!("rho(A) = {rho}, H = {h}");
            print!("{}", rep.to_text());
            println!();
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
