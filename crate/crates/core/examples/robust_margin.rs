//! Robustness of a controller designed for `A_s` on the plant `A_s + A_u`.
//! A margin below 1 guarantees a stable loop; above 1 anything can happen.
//!
//! ```text
//! cargo run --example robust_margin
//! ```

use nalgebra::DMatrix;
use sls_deploy::realization::run_closed_loop;
use sls_deploy::simulator::random_disturbance;
use sls_deploy::synthesis::{robust_stability_margin, synthesize_h2, SynthesisProblem};
use sls_deploy::{LtiSystem, Result, StandardRealization};

pub fn run() -> Result<()> {
    let a_s = 1.2;
    let model = LtiSystem::scalar(a_s, 1.0)?;
    let resp = synthesize_h2(&SynthesisProblem::new(model.clone(), 3))?.response;
    let d = random_disturbance(4, 1, 300, 1.0);
    println!("designed for a = {a_s}, T = 3");
    println!("{:>6}{:>10}{:>14}", "A_u", "margin", "max |x|");
    for k in -6..=6 {
        let a_u = 0.25 * k as f64;
        let margin = robust_stability_margin(model.a(), &DMatrix::from_element(1, 1, a_u), resp.phi_x_blocks())?;
        let plant = LtiSystem::scalar(a_s + a_u, 1.0)?;
        let mut ctl = StandardRealization::new(resp.clone());
        let tr = run_closed_loop(&plant, &mut ctl, &d, 300)?;
        let peak = tr.x.iter().map(|v| v.amax()).fold(0.0, f64::max);
        println!("{a_u:>6.2}{margin:>10.3}{peak:>14.3e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
