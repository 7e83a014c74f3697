//! The simplified realization (one convolution on the reconstructed
//! disturbance) against the standard two-convolution one.
//!
//! ```text
//! cargo run --example realizations
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sls_deploy::realization::run_closed_loop;
use sls_deploy::simulator::random_disturbance;
use sls_deploy::synthesis::{synthesize_h2, SynthesisProblem};
use sls_deploy::{LtiSystem, Result, SimplifiedRealization, StandardRealization};

pub fn run() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sys = LtiSystem::random_stable(&mut rng, 5, 2, 0.8);
    let resp = synthesize_h2(&SynthesisProblem::new(sys.clone(), 4))?.response;
    let d = random_disturbance(11, 5, 40, 1.0);

    let mut simplified = SimplifiedRealization::from_response(sys.clone(), &resp)?;
    let mut standard = StandardRealization::new(resp.clone());
    let a = run_closed_loop(&sys, &mut simplified, &d, 40)?;
    let b = run_closed_loop(&sys, &mut standard, &d, 40)?;

    println!("5 states, 2 inputs, T = 4, 40 steps of uniform noise");
    println!("max |x|            {:.4}", a.x.iter().map(|v| v.amax()).fold(0.0, f64::max));
    println!("max deviation      {:.2e}", a.max_deviation(&b));
    // With a correct model the reconstructed disturbance is the disturbance.
    let recon = a.delta.iter().zip(&d).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max);
    println!("max |delta - d|    {recon:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
