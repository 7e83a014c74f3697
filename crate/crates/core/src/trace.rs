//! Closed-loop traces shared by the monolithic realizations and the
//! architecture simulator.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::serde_mat;

/// Silent failure of one node from `t_fail` onward: every message it sends
/// and every input it applies to the plant is zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub node: String,
    pub t_fail: usize,
}

impl FailureEvent {
    pub fn new(node: impl Into<String>, t_fail: usize) -> Self {
        FailureEvent {
            node: node.into(),
            t_fail,
        }
    }
}

/// Where a signal leaves a node: one of the graph's links, or an actuator's
/// input to the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Link(usize),
    Plant(usize),
}

/// A signal a failed node would have emitted had it been healthy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressedMessage {
    pub t: usize,
    pub channel: Channel,
    pub payload: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTrace {
    #[serde(with = "serde_mat::vector_seq")]
    pub x: Vec<DVector<f64>>,
    #[serde(with = "serde_mat::vector_seq")]
    pub u: Vec<DVector<f64>>,
    #[serde(with = "serde_mat::vector_seq")]
    pub delta: Vec<DVector<f64>>,
    /// `links[t][l]` is the payload carried by link `l` during step `t`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suppressed: Vec<SuppressedMessage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl SimTrace {
    pub fn horizon(&self) -> usize {
        self.x.len()
    }

    /// Total scalars sent over all links during step `t`.
    pub fn comm_scalars(&self, t: usize) -> usize {
        self.links.get(t).map_or(0, |ls| ls.iter().map(Vec::len).sum())
    }

    /// `max_t max(‖x_a[t] - x_b[t]‖∞, ‖u_a[t] - u_b[t]‖∞)`.
    pub fn max_deviation(&self, other: &SimTrace) -> f64 {
        let dev = |a: &[DVector<f64>], b: &[DVector<f64>]| {
            a.iter()
                .zip(b)
                .map(|(p, q)| (p - q).amax())
                .fold(0.0, f64::max)
        };
        dev(&self.x, &other.x).max(dev(&self.u, &other.u))
    }

    /// One row per step: `t, x.., u.., delta..`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let nx = self.x.first().map_or(0, |v| v.len());
        let nu = self.u.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..nx).map(|i| format!("x{i}")));
        header.extend((0..nu).map(|k| format!("u{k}")));
        header.extend((0..nx).map(|i| format!("delta{i}")));
        w.write_record(&header)?;
        for t in 0..self.horizon() {
            let mut row = vec![t.to_string()];
            row.extend(self.x[t].iter().map(|v| v.to_string()));
            row.extend(self.u[t].iter().map(|v| v.to_string()));
            row.extend(self.delta[t].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}
