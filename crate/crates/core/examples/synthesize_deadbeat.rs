//! H2 synthesis of a finite impulse response closed loop.
//!
//! A scalar plant reaches the origin in `T` steps; a 3-state chain with a
//! sparsity mask keeps the controller local.
//!
//! ```text
//! cargo run --example synthesize_deadbeat
//! ```

use nalgebra::DMatrix;
use sls_deploy::synthesis::{synthesize_h2, SynthesisProblem};
use sls_deploy::{LtiSystem, Result};

pub fn run() -> Result<()> {
    let sys = LtiSystem::scalar(1.0, 1.0)?;
    let out = synthesize_h2(&SynthesisProblem::new(sys, 2))?;
    println!("scalar a = 1, b = 1, T = 2");
    for tau in 1..=2 {
        println!(
            "  tau {tau}: phi_x {:>8.5}  phi_u {:>8.5}",
            out.response.phi_x(tau)[(0, 0)],
            out.response.phi_u(tau)[(0, 0)]
        );
    }
    println!("  objective {:.6}, residual {:.1e}", out.objective, out.achievability.residual);

    // Chain x0 <- x1 <- x2 with an actuator on every state.
    let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.4, 0.0, 0.0, 0.9, 0.4, 0.0, 0.0, 0.9]);
    let sys = LtiSystem::new(a, DMatrix::identity(3, 3))?;
    // Each actuator may only use its own state and its downstream neighbour.
    let mask_u = DMatrix::from_fn(3, 3, |i, j| j == i || j == i + 1);
    let prob = SynthesisProblem::new(sys, 3)
        .with_weights(DMatrix::identity(3, 3), DMatrix::identity(3, 3) * 0.5)
        .with_masks(None, Some(mask_u));
    let out = synthesize_h2(&prob)?;
    println!("\nchain, T = 3, banded Phi_u");
    for tau in 1..=3 {
        println!("  Phi_u[{tau}] = {:.4}", out.response.phi_u(tau));
    }
    println!("  objective {:.6}, residual {:.1e}", out.objective, out.achievability.residual);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
