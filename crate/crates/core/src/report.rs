//! Side-by-side comparison of architectures, laid out with properties as
//! rows and architectures as columns.

use serde::{Deserialize, Serialize};

use crate::architecture::{Architecture, CostReport, NodeCost};
use crate::error::Result;

/// One architecture's column of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub architecture: Architecture,
    pub single_point_of_failure: bool,
    pub paralyzing_nodes: Vec<String>,
    pub memory_dense: usize,
    pub memory_nnz: usize,
    pub buffers: usize,
    pub mults_dense: usize,
    pub mults_nnz: usize,
    pub comm_dense: usize,
    pub comm_nnz: usize,
    pub max_node_memory: usize,
    pub max_node_memory_at: String,
    pub max_node_mults: usize,
    pub max_node_mults_at: String,
    pub max_node_comm: usize,
    pub max_node_comm_at: String,
    pub max_deviation: f64,
}

fn busiest(nodes: &[NodeCost], f: impl Fn(&NodeCost) -> usize) -> (usize, String) {
    nodes
        .iter()
        .map(|n| (f(n), n.node.clone()))
        .fold((0, String::new()), |best, cur| if cur.0 > best.0 { cur } else { best })
}

impl ComparisonRow {
    pub fn new(cost: &CostReport, paralyzing_nodes: Vec<String>, max_deviation: f64) -> Self {
        let (max_node_memory, max_node_memory_at) = busiest(&cost.per_node, |n| n.dense.memory_scalars);
        let (max_node_mults, max_node_mults_at) = busiest(&cost.per_node, |n| n.dense.mults_per_step);
        let (max_node_comm, max_node_comm_at) = busiest(&cost.per_node, |n| n.dense.comm_scalars_per_step);
        ComparisonRow {
            architecture: cost.architecture,
            single_point_of_failure: !paralyzing_nodes.is_empty(),
            paralyzing_nodes,
            memory_dense: cost.dense.memory_scalars,
            memory_nnz: cost.nnz.memory_scalars,
            buffers: cost.dense.buffer_scalars,
            mults_dense: cost.dense.mults_per_step,
            mults_nnz: cost.nnz.mults_per_step,
            comm_dense: cost.dense.comm_scalars_per_step,
            comm_nnz: cost.nnz.comm_scalars_per_step,
            max_node_memory,
            max_node_memory_at,
            max_node_mults,
            max_node_mults_at,
            max_node_comm,
            max_node_comm_at,
            max_deviation,
        }
    }
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "architecture",
        "single_point_of_failure",
        "memory_dense",
        "memory_nnz",
        "buffers",
        "mults_dense",
        "mults_nnz",
        "comm_dense",
        "comm_nnz",
        "max_node_memory",
        "max_node_mults",
        "max_node_comm",
        "max_deviation",
    ])?;
    for r in rows {
        w.write_record([
            r.architecture.name().to_string(),
            yes_no(r.single_point_of_failure).to_string(),
            r.memory_dense.to_string(),
            r.memory_nnz.to_string(),
            r.buffers.to_string(),
            r.mults_dense.to_string(),
            r.mults_nnz.to_string(),
            r.comm_dense.to_string(),
            r.comm_nnz.to_string(),
            r.max_node_memory.to_string(),
            r.max_node_mults.to_string(),
            r.max_node_comm.to_string(),
            format!("{:e}", r.max_deviation),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

type Property = (&'static str, Box<dyn Fn(&ComparisonRow) -> String>);

pub fn comparison_text(rows: &[ComparisonRow]) -> String {
    let props: Vec<Property> = vec![
        ("single point of failure", Box::new(|r| yes_no(r.single_point_of_failure).into())),
        ("memory (dense)", Box::new(|r| r.memory_dense.to_string())),
        ("memory (nnz)", Box::new(|r| r.memory_nnz.to_string())),
        ("buffer scalars", Box::new(|r| r.buffers.to_string())),
        ("mults/step (dense)", Box::new(|r| r.mults_dense.to_string())),
        ("mults/step (nnz)", Box::new(|r| r.mults_nnz.to_string())),
        ("comm/step (dense)", Box::new(|r| r.comm_dense.to_string())),
        ("comm/step (nnz)", Box::new(|r| r.comm_nnz.to_string())),
        ("max node memory", Box::new(|r| format!("{} ({})", r.max_node_memory, r.max_node_memory_at))),
        ("max node mults", Box::new(|r| format!("{} ({})", r.max_node_mults, r.max_node_mults_at))),
        ("max node comm", Box::new(|r| format!("{} ({})", r.max_node_comm, r.max_node_comm_at))),
        ("max deviation", Box::new(|r| format!("{:.2e}", r.max_deviation))),
    ];
    let mut cells: Vec<Vec<String>> = vec![std::iter::once("property".to_string())
        .chain(rows.iter().map(|r| r.architecture.name().to_string()))
        .collect()];
    for (name, f) in &props {
        cells.push(std::iter::once(name.to_string()).chain(rows.iter().map(f)).collect());
    }
    let ncol = rows.len() + 1;
    let widths: Vec<usize> = (0..ncol)
        .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let rule: String = widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("+");
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| if c == 0 { format!(" {cell:<w$} ") } else { format!(" {cell:>w$} ") })
            .collect();
        out.push_str(line.join("|").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&rule);
            out.push('\n');
        }
    }
    out
}

/// Per-node breakdown of one cost report as CSV.
pub fn cost_csv(report: &CostReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "node",
        "memory_dense",
        "buffers",
        "multiplier_dense",
        "mults_dense",
        "comm_dense",
        "memory_nnz",
        "multiplier_nnz",
        "mults_nnz",
        "comm_nnz",
    ])?;
    let total = NodeCost {
        node: "total".into(),
        dense: report.dense,
        nnz: report.nnz,
    };
    for n in report.per_node.iter().chain(std::iter::once(&total)) {
        w.write_record([
            n.node.clone(),
            n.dense.memory_scalars.to_string(),
            n.dense.buffer_scalars.to_string(),
            n.dense.multiplier_scalars.to_string(),
            n.dense.mults_per_step.to_string(),
            n.dense.comm_scalars_per_step.to_string(),
            n.nnz.memory_scalars.to_string(),
            n.nnz.multiplier_scalars.to_string(),
            n.nnz.mults_per_step.to_string(),
            n.nnz.comm_scalars_per_step.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
