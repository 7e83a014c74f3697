//! Drive a whole comparison from an experiment file, the same path the
//! `slsdeploy` binary takes.
//!
//! ```text
//! cargo run --example experiment_file
//! ```

use std::path::Path;

use sls_deploy::experiment::{run as run_command, Command, ExperimentSpec};
use sls_deploy::Result;

pub fn run() -> Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/two_by_two.json");
    let exp = ExperimentSpec::from_path(&path)?.resolve()?;
    for cmd in [Command::Synthesize, Command::Compare] {
        let out = run_command(cmd, &exp)?;
        print!("{}", out.stdout);
        let files: Vec<String> = out.files.iter().map(|(name, _)| name.display().to_string()).collect();
        println!("would write {files:?}\n");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
