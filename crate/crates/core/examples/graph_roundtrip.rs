//! Architecture graphs are plain data: serialize one, load it back and run
//! the loaded copy.
//!
//! ```text
//! cargo run --example graph_roundtrip
//! ```

use sls_deploy::architecture::{build, Architecture, ArchitectureGraph};
use sls_deploy::simulator::{impulse, simulate};
use sls_deploy::synthesis::{synthesize_h2, SynthesisProblem};
use sls_deploy::{LtiSystem, Result};

pub fn run() -> Result<()> {
    let sys = LtiSystem::new(
        nalgebra::DMatrix::from_row_slice(2, 2, &[0.6, 0.3, 0.2, 0.7]),
        nalgebra::DMatrix::identity(2, 2),
    )?;
    let resp = synthesize_h2(&SynthesisProblem::new(sys.clone(), 3))?.response;
    let graph = build(Architecture::Conservative, &sys, &resp)?;
    let json = serde_json::to_string_pretty(&graph)?;
    let loaded = ArchitectureGraph::from_json(&json)?;
    println!("{} nodes, {} links, {} bytes of JSON", loaded.nodes.len(), loaded.links.len(), json.len());
    for node in &loaded.nodes {
        println!("  {:<4}{} blocks", node.name, node.blocks.len());
    }
    let a = simulate(&graph, &sys, &impulse(2, 0), 6, &[])?;
    let b = simulate(&loaded, &sys, &impulse(2, 0), 6, &[])?;
    assert!(a.x == b.x && a.u == b.u, "reloaded graph must reproduce the original bit for bit");
    println!("impulse response identical after reload");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
