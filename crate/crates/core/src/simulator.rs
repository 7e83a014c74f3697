//! Step-synchronous execution of an [`ArchitectureGraph`] in closed loop
//! with the plant.
//!
//! Each step `t`:
//!
//! 1. sensors read `x[t]`;
//! 2. the graph's phases run in order, every message is delivered within the
//!    step it is sent;
//! 3. actuators apply `u[t]` and delay buffers latch;
//! 4. the plant advances to `x[t+1] = A x[t] + B u[t] + d_x[t+1]`.
//!
//! A failed node keeps computing but every link payload and plant input it
//! emits is zero from `t_fail` on. What it would have sent is recorded in
//! [`SimTrace::suppressed`], which makes failures checkable by superposition.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::architecture::{ArchitectureGraph, Component, NodeKind, PartSource, Port};
use crate::error::{Error, Result};
use crate::lti::LtiSystem;
use crate::realization::{disturbance_at, run_closed_loop, run_injected_loop, SimplifiedRealization};
use crate::synthesis::SystemResponse;
use crate::trace::{Channel, FailureEvent, SimTrace, SuppressedMessage};

/// Additive signal on a link payload or an actuator's plant input at step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub t: usize,
    pub channel: Channel,
    pub payload: Vec<f64>,
}

impl From<SuppressedMessage> for Injection {
    fn from(m: SuppressedMessage) -> Self {
        Injection {
            t: m.t,
            channel: m.channel,
            payload: m.payload,
        }
    }
}

/// `x[0] = e_i`, zero afterwards.
pub fn impulse(nx: usize, i: usize) -> Vec<DVector<f64>> {
    let mut d = DVector::zeros(nx);
    d[i] = 1.0;
    vec![d]
}

/// `len` i.i.d. uniform vectors in `[-amplitude, amplitude]^nx`.
pub fn random_disturbance(seed: u64, nx: usize, len: usize, amplitude: f64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| DVector::from_fn(nx, |_, _| amplitude * rng.random_range(-1.0..=1.0)))
        .collect()
}

pub fn simulate(
    graph: &ArchitectureGraph,
    sys: &LtiSystem,
    d_x: &[DVector<f64>],
    horizon: usize,
    failures: &[FailureEvent],
) -> Result<SimTrace> {
    simulate_with_injections(graph, sys, d_x, horizon, failures, &[])
}

/// [`simulate`] with extra additive signals on links or plant inputs.
/// Injections are added after failure zeroing.
pub fn simulate_with_injections(
    graph: &ArchitectureGraph,
    sys: &LtiSystem,
    d_x: &[DVector<f64>],
    horizon: usize,
    failures: &[FailureEvent],
    injections: &[Injection],
) -> Result<SimTrace> {
    Engine::new(graph, sys, d_x, failures, injections)?.run(horizon)
}

struct Engine<'a> {
    g: &'a ArchitectureGraph,
    sys: &'a LtiSystem,
    d_x: &'a [DVector<f64>],
    failures: Vec<FailureEvent>,
    fail_at: Vec<Option<usize>>,
    injections: &'a [Injection],
    matrices: Vec<Vec<Option<DMatrix<f64>>>>,
    delays: Vec<Vec<DVector<f64>>>,
}

impl<'a> Engine<'a> {
    fn new(
        g: &'a ArchitectureGraph,
        sys: &'a LtiSystem,
        d_x: &'a [DVector<f64>],
        failures: &[FailureEvent],
        injections: &'a [Injection],
    ) -> Result<Self> {
        if g.nx != sys.nx() || g.nu != sys.nu() {
            return Err(Error::dim(
                "simulate::graph",
                format!("Nx={} Nu={}", sys.nx(), sys.nu()),
                format!("Nx={} Nu={}", g.nx, g.nu),
            ));
        }
        for d in d_x {
            sys.check_state(d, "simulate::d_x")?;
        }
        let mut fail_at = vec![None; g.nodes.len()];
        for f in failures {
            let n = g.node_id(&f.node)?;
            fail_at[n] = Some(fail_at[n].map_or(f.t_fail, |t: usize| t.min(f.t_fail)));
        }
        for inj in injections {
            let expected = match inj.channel {
                Channel::Link(l) => g.links.get(l).map(|l| l.dim),
                Channel::Plant(k) => (k < g.nu).then_some(1),
            };
            match expected {
                Some(e) if e == inj.payload.len() => {}
                Some(e) => {
                    return Err(Error::LinkDimension {
                        link: match inj.channel {
                            Channel::Link(l) | Channel::Plant(l) => l,
                        },
                        expected: e,
                        got: inj.payload.len(),
                    })
                }
                None => return Err(Error::Numeric(format!("injection on unknown channel {:?}", inj.channel))),
            }
        }
        let matrices = g
            .nodes
            .iter()
            .map(|n| {
                n.blocks
                    .iter()
                    .map(|b| match &b.component {
                        Component::Multiplier { matrix, .. } => g.matrices.resolve(*matrix).map(Some),
                        _ => Ok(None),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let delays = g
            .nodes
            .iter()
            .map(|n| n.blocks.iter().map(|b| DVector::zeros(b.component.output_dim())).collect())
            .collect();
        Ok(Engine {
            g,
            sys,
            d_x,
            failures: failures.to_vec(),
            fail_at,
            injections,
            matrices,
            delays,
        })
    }

    fn failed(&self, node: usize, t: usize) -> bool {
        self.fail_at[node].is_some_and(|tf| t >= tf)
    }

    fn run(mut self, horizon: usize) -> Result<SimTrace> {
        let (nx, nu) = (self.g.nx, self.g.nu);
        let mut trace = SimTrace {
            failures: self.failures.clone(),
            ..SimTrace::default()
        };
        if !self.sys.is_schur_stable()? {
            trace.flags.push("plant is not Schur stable".into());
        }
        let mut x = disturbance_at(self.d_x, 0, nx);
        for t in 0..horizon {
            let (values, payloads) = self.evaluate(t, &x, &mut trace.suppressed)?;

            let mut u = DVector::zeros(nu);
            for (n, node) in self.g.nodes.iter().enumerate() {
                if let (NodeKind::Actuator(k), Some(port)) = (node.kind, node.plant_input) {
                    let v = read(&values[n], &x, node.kind, port)[0];
                    if self.failed(n, t) {
                        trace.suppressed.push(SuppressedMessage {
                            t,
                            channel: Channel::Plant(k),
                            payload: vec![v],
                        });
                    } else {
                        u[k] = v;
                    }
                }
            }
            for inj in self.injections.iter().filter(|i| i.t == t) {
                if let Channel::Plant(k) = inj.channel {
                    u[k] += inj.payload[0];
                }
            }

            let mut delta = DVector::zeros(nx);
            for p in &self.g.delta_probes {
                let v = read(&values[p.node], &x, self.g.nodes[p.node].kind, p.port);
                for (e, &i) in v.iter().zip(&p.indices) {
                    delta[i] = *e;
                }
            }

            self.latch(&values, &x);
            let next = self.sys.step(&x, &u, &disturbance_at(self.d_x, t + 1, nx))?;
            trace.x.push(std::mem::replace(&mut x, next));
            trace.u.push(u);
            trace.delta.push(delta);
            trace.links.push(payloads.into_iter().map(|p| p.as_slice().to_vec()).collect());
        }
        Ok(trace)
    }

    /// Runs every phase of step `t`; returns block outputs and link payloads.
    #[allow(clippy::type_complexity)]
    fn evaluate(
        &self,
        t: usize,
        x: &DVector<f64>,
        suppressed: &mut Vec<SuppressedMessage>,
    ) -> Result<(Vec<Vec<DVector<f64>>>, Vec<DVector<f64>>)> {
        let g = self.g;
        let mut values = self.delays.clone();
        let mut payloads: Vec<DVector<f64>> = g.links.iter().map(|l| DVector::zeros(l.dim)).collect();
        for phase in &g.schedule {
            for &(n, b) in phase {
                let node = &g.nodes[n];
                let vals = &values[n];
                let rd = |p: Port| read(vals, x, node.kind, p);
                let out = match &node.blocks[b].component {
                    Component::Buffer { input, .. } => rd(*input),
                    Component::DelayBuffer { .. } => continue,
                    Component::Multiplier { input, .. } => {
                        self.matrices[n][b].as_ref().expect("resolved at start") * rd(*input)
                    }
                    Component::Adder { dim, inputs } => {
                        inputs.iter().fold(DVector::zeros(*dim), |acc, p| acc + rd(*p))
                    }
                    Component::Collector { dim, assembly } => {
                        let mut v = DVector::zeros(*dim);
                        for part in assembly {
                            let src = match part.source {
                                PartSource::Link(l) => payloads[l].clone(),
                                PartSource::Local(p) => rd(p),
                            };
                            for (e, &pos) in src.iter().zip(&part.positions) {
                                v[pos] = *e;
                            }
                        }
                        v
                    }
                    Component::Disseminator { input, routes, .. } => {
                        let v = rd(*input);
                        for r in routes {
                            let mut p = DVector::from_iterator(r.indices.len(), r.indices.iter().map(|&i| v[i]));
                            if self.failed(n, t) {
                                suppressed.push(SuppressedMessage {
                                    t,
                                    channel: Channel::Link(r.link),
                                    payload: p.as_slice().to_vec(),
                                });
                                p.fill(0.0);
                            }
                            for inj in self.injections.iter().filter(|i| i.t == t && i.channel == Channel::Link(r.link)) {
                                for (e, add) in p.iter_mut().zip(&inj.payload) {
                                    *e += add;
                                }
                            }
                            payloads[r.link] = p;
                        }
                        DVector::zeros(0)
                    }
                };
                values[n][b] = out;
            }
        }
        Ok((values, payloads))
    }

    /// Delay buffers take their input's value from this step. All new
    /// states are read before any is written.
    fn latch(&mut self, values: &[Vec<DVector<f64>>], x: &DVector<f64>) {
        let mut updates = Vec::new();
        for (n, node) in self.g.nodes.iter().enumerate() {
            for (b, block) in node.blocks.iter().enumerate() {
                if let Component::DelayBuffer { input, .. } = block.component {
                    updates.push((n, b, read(&values[n], x, node.kind, input)));
                }
            }
        }
        for (n, b, v) in updates {
            self.delays[n][b] = v;
        }
    }
}

fn read(values: &[DVector<f64>], x: &DVector<f64>, kind: NodeKind, port: Port) -> DVector<f64> {
    match port {
        Port::Measurement => match kind {
            NodeKind::Sensor(i) => DVector::from_element(1, x[i]),
            _ => unreachable!("validated graphs only measure at sensors"),
        },
        Port::Output { block, offset, len } => values[block].rows(offset, len).into_owned(),
    }
}

/// Max-abs deviation in `x` and `u` between the graph and the monolithic
/// simplified realization on the same disturbance.
pub fn compare_to_reference(
    graph: &ArchitectureGraph,
    sys: &LtiSystem,
    resp: &SystemResponse,
    d_x: &[DVector<f64>],
    horizon: usize,
) -> Result<f64> {
    let arch = simulate(graph, sys, d_x, horizon, &[])?;
    let mut reference = SimplifiedRealization::from_response(sys.clone(), resp)?;
    let expected = run_closed_loop(sys, &mut reference, d_x, horizon)?;
    Ok(arch.max_deviation(&expected))
}

/// Outcome of checking a failed run against the healthy run minus the
/// response to the failed node's suppressed output.
#[derive(Debug, Clone)]
pub struct SuperpositionCheck {
    pub healthy: SimTrace,
    pub failed: SimTrace,
    /// Response to the suppressed signals alone, with no plant disturbance.
    pub contribution: SimTrace,
    /// `max |failed - (healthy - contribution)|` over `x` and `u`.
    pub residual: f64,
}

pub fn superposition_check(
    graph: &ArchitectureGraph,
    sys: &LtiSystem,
    d_x: &[DVector<f64>],
    horizon: usize,
    failure: &FailureEvent,
) -> Result<SuperpositionCheck> {
    let healthy = simulate(graph, sys, d_x, horizon, &[])?;
    let failed = simulate(graph, sys, d_x, horizon, std::slice::from_ref(failure))?;
    let injections: Vec<Injection> = failed.suppressed.iter().cloned().map(Injection::from).collect();
    let contribution = simulate_with_injections(graph, sys, &[], horizon, &[], &injections)?;
    let mut residual = 0.0_f64;
    for t in 0..horizon {
        let dx = &failed.x[t] - (&healthy.x[t] - &contribution.x[t]);
        let du = &failed.u[t] - (&healthy.u[t] - &contribution.u[t]);
        residual = residual.max(dx.amax()).max(du.amax());
    }
    Ok(SuperpositionCheck {
        healthy,
        failed,
        contribution,
        residual,
    })
}

/// Whether `u` is exactly zero at every step from `from` on.
pub fn control_silent_from(trace: &SimTrace, from: usize) -> bool {
    trace.u.iter().skip(from).all(|u| u.iter().all(|v| *v == 0.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpofVerdict {
    pub node: String,
    /// All control inputs are exactly zero once the node's buffered history
    /// has drained (`t ≥ t_fail + T - 1`).
    pub paralyzes: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpofSweep {
    pub t_fail: usize,
    pub horizon: usize,
    pub nodes: Vec<SpofVerdict>,
}

impl SpofSweep {
    pub fn has_single_point_of_failure(&self) -> bool {
        self.nodes.iter().any(|n| n.paralyzes)
    }

    pub fn paralyzing_nodes(&self) -> Vec<&str> {
        self.nodes.iter().filter(|n| n.paralyzes).map(|n| n.node.as_str()).collect()
    }
}

/// Kills each node in turn under a persistent seeded random disturbance.
pub fn spof_sweep(graph: &ArchitectureGraph, sys: &LtiSystem, seed: u64, t_fail: usize) -> Result<SpofSweep> {
    let horizon = t_fail + graph.horizon + 20;
    let d_x = random_disturbance(seed, sys.nx(), horizon, 1.0);
    let drained = t_fail + graph.horizon.saturating_sub(1);
    let nodes = graph
        .nodes
        .iter()
        .map(|node| {
            let trace = simulate(graph, sys, &d_x, horizon, &[FailureEvent::new(&node.name, t_fail)])?;
            Ok(SpofVerdict {
                node: node.name.clone(),
                paralyzes: control_silent_from(&trace, drained),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpofSweep { t_fail, horizon, nodes })
}

/// Worst tail magnitudes of the simplified loop under unit impulses on each
/// summing junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub horizon: usize,
    pub tol: f64,
    /// Rows: injection on `x`, `u`, `δ`. Columns: response in `x`, `u`, `δ`.
    pub grid: [[f64; 3]; 3],
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

pub const STABILITY_TAIL: usize = 10;

pub const CHANNELS: [&str; 3] = ["x", "u", "delta"];

impl StabilityReport {
    pub fn default_horizon(t: usize) -> usize {
        2 * t + 50
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("tail max-abs over the last {STABILITY_TAIL} of {} steps\n", self.horizon);
        s.push_str(&format!("{:<12}{:>14}{:>14}{:>14}\n", "injection", "x", "u", "delta"));
        for (name, row) in CHANNELS.iter().zip(&self.grid) {
            s.push_str(&format!("{:<12}{:>14.3e}{:>14.3e}{:>14.3e}\n", format!("d_{name}"), row[0], row[1], row[2]));
        }
        s.push_str(&format!("{} (tol {:e})\n", if self.passed { "stable" } else { "NOT stable" }, self.tol));
        s
    }
}

pub fn internal_stability_report(
    sys: &LtiSystem,
    phi_u: &[DMatrix<f64>],
    horizon: usize,
    tol: f64,
) -> Result<StabilityReport> {
    let (nx, nu) = (sys.nx(), sys.nu());
    let mut flags = Vec::new();
    if !sys.is_schur_stable()? {
        flags.push("plant is not Schur stable".into());
    }
    let start = horizon.saturating_sub(STABILITY_TAIL);
    let tail = |v: &[DVector<f64>]| v[start..].iter().map(|e| e.amax()).fold(0.0, f64::max);
    let mut grid = [[0.0_f64; 3]; 3];
    for (ch, row) in grid.iter_mut().enumerate() {
        let dim = if ch == 1 { nu } else { nx };
        for j in 0..dim {
            let mut e = DVector::zeros(dim);
            e[j] = 1.0;
            let imp = vec![e];
            let (dx, du, dd): (&[_], &[_], &[_]) = match ch {
                0 => (&imp, &[], &[]),
                1 => (&[], &imp, &[]),
                _ => (&[], &[], &imp),
            };
            let run = run_injected_loop(sys, phi_u, dx, du, dd, horizon)?;
            row[0] = row[0].max(tail(&run.x));
            row[1] = row[1].max(tail(&run.u));
            row[2] = row[2].max(tail(&run.delta));
        }
    }
    let passed = grid.iter().flatten().all(|v| *v < tol);
    Ok(StabilityReport {
        horizon,
        tol,
        grid,
        passed,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architecture::{build, Architecture};
    use crate::synthesis::{synthesize_h2, SynthesisProblem};
    use nalgebra::dvector;

    fn deadbeat() -> (LtiSystem, SystemResponse) {
        let sys = LtiSystem::scalar(0.5, 1.0).unwrap();
        let resp = SystemResponse::new(vec![DMatrix::from_element(1, 1, 1.0)], vec![DMatrix::from_element(1, 1, -0.5)]).unwrap();
        (sys, resp)
    }

    fn random_instance(seed: u64, nx: usize, nu: usize, t: usize) -> (LtiSystem, SystemResponse) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = LtiSystem::random_stable(&mut rng, nx, nu, 0.9);
        let resp = synthesize_h2(&SynthesisProblem::new(sys.clone(), t)).unwrap().response;
        (sys, resp)
    }

    #[test]
    fn zero_disturbance_gives_zero_trace() {
        let (sys, resp) = random_instance(1, 3, 2, 3);
        for arch in Architecture::ALL {
            let g = build(arch, &sys, &resp).unwrap();
            let tr = simulate(&g, &sys, &[], 20, &[]).unwrap();
            assert!(tr.x.iter().chain(&tr.u).all(|v| v.iter().all(|e| *e == 0.0)), "{arch}");
        }
    }

    #[test]
    fn deadbeat_centralized_impulse() {
        let (sys, resp) = deadbeat();
        let g = build(Architecture::Centralized, &sys, &resp).unwrap();
        let tr = simulate(&g, &sys, &impulse(1, 0), 4, &[]).unwrap();
        assert_eq!(tr.u, vec![dvector![-0.5], dvector![0.0], dvector![0.0], dvector![0.0]]);
        assert_eq!(tr.x, vec![dvector![1.0], dvector![0.0], dvector![0.0], dvector![0.0]]);
    }

    #[test]
    fn every_architecture_matches_reference() {
        let (sys, resp) = random_instance(7, 4, 2, 4);
        let d = random_disturbance(3, 4, 30, 1.0);
        for arch in Architecture::ALL {
            let g = build(arch, &sys, &resp).unwrap();
            let dev = compare_to_reference(&g, &sys, &resp, &d, 30).unwrap();
            assert!(dev <= 1e-9, "{arch}: {dev}");
        }
    }

    #[test]
    fn gsk_failure_with_single_tap_silences_control_immediately() {
        let (sys, resp) = deadbeat();
        let g = build(Architecture::GlobalState, &sys, &resp).unwrap();
        let d = random_disturbance(5, 1, 10, 1.0);
        let tr = simulate(&g, &sys, &d, 10, &[FailureEvent::new("gsk", 2)]).unwrap();
        assert!(!control_silent_from(&tr, 1));
        assert!(control_silent_from(&tr, 2));
        let free = simulate(&g, &sys, &d[..1], 10, &[FailureEvent::new("gsk", 2)]).unwrap();
        assert_eq!(free.x[3][0], 0.5 * free.x[2][0]);
    }

    #[test]
    fn message_counts_match_nnz_costs() {
        let (sys, resp) = random_instance(11, 3, 2, 3);
        let d = random_disturbance(1, 3, 5, 1.0);
        for arch in Architecture::ALL {
            let g = build(arch, &sys, &resp).unwrap();
            let rep = crate::architecture::cost_report(&g).unwrap();
            let tr = simulate(&g, &sys, &d, 5, &[]).unwrap();
            for t in 0..5 {
                assert_eq!(tr.comm_scalars(t), rep.nnz.comm_scalars_per_step, "{arch}");
            }
        }
    }

    #[test]
    fn unknown_failure_node_is_rejected() {
        let (sys, resp) = deadbeat();
        let g = build(Architecture::Naive, &sys, &resp).unwrap();
        assert!(matches!(
            simulate(&g, &sys, &[], 3, &[FailureEvent::new("gsk", 0)]),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn injection_dimension_is_checked() {
        let (sys, resp) = deadbeat();
        let g = build(Architecture::Centralized, &sys, &resp).unwrap();
        let bad = Injection {
            t: 0,
            channel: Channel::Link(0),
            payload: vec![1.0, 2.0],
        };
        assert!(matches!(
            simulate_with_injections(&g, &sys, &[], 3, &[], &[bad]),
            Err(Error::LinkDimension { .. })
        ));
    }

    #[test]
    fn sensor_failure_superposes() {
        let (sys, resp) = random_instance(21, 3, 2, 4);
        let d = random_disturbance(9, 3, 40, 1.0);
        for arch in [Architecture::Naive, Architecture::Conservative] {
            let g = build(arch, &sys, &resp).unwrap();
            let chk = superposition_check(&g, &sys, &d, 40, &FailureEvent::new("s1", 6)).unwrap();
            assert!(chk.residual <= 1e-9, "{arch}: {}", chk.residual);
            assert!(!chk.failed.suppressed.is_empty());
        }
    }

    #[test]
    fn zero_plant_has_exactly_finite_responses() {
        let sys = LtiSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let resp = synthesize_h2(&SynthesisProblem::new(sys.clone(), 2)).unwrap().response;
        let rep = internal_stability_report(&sys, resp.phi_u_blocks(), 2 + 1 + STABILITY_TAIL, 1e-12).unwrap();
        assert!(rep.grid.iter().flatten().all(|v| *v == 0.0), "{:?}", rep.grid);
        assert!(rep.passed);
    }

    #[test]
    fn deadbeat_delta_injection_decays() {
        let (sys, resp) = deadbeat();
        let rep = internal_stability_report(&sys, resp.phi_u_blocks(), 60, 1e-6).unwrap();
        assert!(rep.passed);
        let run = run_injected_loop(&sys, resp.phi_u_blocks(), &[], &[], &[dvector![1.0]], 4).unwrap();
        assert_eq!(run.delta[0], dvector![1.0]);
        assert_eq!(run.u[0], dvector![-0.5]);
        assert_eq!(run.x[1], dvector![-0.5]);
        assert_eq!(run.delta[1], dvector![0.0]);
    }

    #[test]
    fn unstable_plant_is_flagged() {
        let sys = LtiSystem::scalar(1.5, 1.0).unwrap();
        let resp = SystemResponse::new(vec![DMatrix::from_element(1, 1, 1.0)], vec![DMatrix::from_element(1, 1, -1.5)]).unwrap();
        let rep = internal_stability_report(&sys, resp.phi_u_blocks(), 20, 1e-6).unwrap();
        assert!(!rep.flags.is_empty());
    }
}
