//! Single-process reference controllers.
//!
//! Both realizations drive `u = K x` for the same `K` when the response is
//! achievable:
//!
//! * [`StandardRealization`] keeps an internal state estimate `x̂` and runs two
//!   convolutions, `u[t] = Σ_{τ≥1} Φu[τ] δ[t+1-τ]` and
//!   `x̂[t+1] = Σ_{τ≥2} Φx[τ] δ[t+2-τ]` with `δ = x - x̂`.
//! * [`SimplifiedRealization`] rebuilds the disturbance estimate from the
//!   plant model, `δ[t] = x[t] - A x[t-1] - B u[t-1]`, and runs only the `Φu`
//!   convolution. It needs `A` Schur stable.
//!
//! All internal memory starts at zero.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lti::LtiSystem;
use crate::synthesis::SystemResponse;
use crate::trace::SimTrace;

/// The last `T` disturbance estimates, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaHistory {
    buf: VecDeque<DVector<f64>>,
}

impl DeltaHistory {
    pub fn new(horizon: usize, nx: usize) -> Self {
        DeltaHistory {
            buf: std::iter::repeat_n(DVector::zeros(nx), horizon).collect(),
        }
    }

    pub fn push(&mut self, delta: DVector<f64>) {
        self.buf.pop_back();
        self.buf.push_front(delta);
    }

    /// `δ[t+1-tau]`, one-based lag.
    pub fn lag(&self, tau: usize) -> &DVector<f64> {
        &self.buf[tau - 1]
    }

    pub fn newest(&self) -> &DVector<f64> {
        &self.buf[0]
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// `Σ_{τ=1..T} kernel[τ] δ[t+1-τ]`, accumulated with τ ascending.
    fn convolve(&self, kernel: &[DMatrix<f64>], rows: usize) -> DVector<f64> {
        let mut acc = DVector::zeros(rows);
        for (k, d) in kernel.iter().zip(&self.buf) {
            acc += k * d;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedRealizationState {
    pub delta_hist: DeltaHistory,
    pub x_prev: DVector<f64>,
    pub u_prev: DVector<f64>,
}

impl SimplifiedRealizationState {
    pub fn new(horizon: usize, nx: usize, nu: usize) -> Self {
        SimplifiedRealizationState {
            delta_hist: DeltaHistory::new(horizon, nx),
            x_prev: DVector::zeros(nx),
            u_prev: DVector::zeros(nu),
        }
    }

    /// One controller step with an additive injection on the `δ` junction.
    /// Returns the controller output; `u_prev` records it before any
    /// downstream injection on `u`.
    pub fn step_injected(
        &mut self,
        phi_u: &[DMatrix<f64>],
        sys: &LtiSystem,
        x_t: &DVector<f64>,
        d_delta: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        sys.check_state(x_t, "step_simplified::x")?;
        if phi_u.len() != self.delta_hist.len() || self.u_prev.len() != sys.nu() || self.x_prev.len() != sys.nx() {
            return Err(Error::dim(
                "step_simplified::state",
                format!("T={} Nx={} Nu={}", phi_u.len(), sys.nx(), sys.nu()),
                format!("T={} Nx={} Nu={}", self.delta_hist.len(), self.x_prev.len(), self.u_prev.len()),
            ));
        }
        if let Some(bad) = phi_u.iter().find(|m| m.shape() != (sys.nu(), sys.nx())) {
            return Err(Error::dim("step_simplified::phi_u", format!("{}x{}", sys.nu(), sys.nx()), format!("{:?}", bad.shape())));
        }
        let mut delta = x_t - sys.a() * &self.x_prev - sys.b() * &self.u_prev;
        if let Some(d) = d_delta {
            delta += d;
        }
        self.delta_hist.push(delta);
        let u = self.delta_hist.convolve(phi_u, sys.nu());
        self.x_prev.copy_from(x_t);
        self.u_prev.copy_from(&u);
        Ok(u)
    }
}

/// Simplified controller step: `δ[t] = x[t] - A x[t-1] - B u[t-1]`,
/// `u[t] = Σ_τ Φu[τ] δ[t+1-τ]`.
pub fn step_simplified(
    state: &mut SimplifiedRealizationState,
    phi_u: &[DMatrix<f64>],
    sys: &LtiSystem,
    x_t: &DVector<f64>,
) -> Result<DVector<f64>> {
    state.step_injected(phi_u, sys, x_t, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardRealizationState {
    pub delta_hist: DeltaHistory,
    pub xhat: DVector<f64>,
}

impl StandardRealizationState {
    pub fn new(horizon: usize, nx: usize) -> Self {
        StandardRealizationState {
            delta_hist: DeltaHistory::new(horizon, nx),
            xhat: DVector::zeros(nx),
        }
    }
}

/// Standard controller step: `δ[t] = x[t] - x̂[t]`, `u[t] = Σ_τ Φu[τ] δ[t+1-τ]`,
/// then `x̂[t+1] = Σ_{τ≥2} Φx[τ] δ[t+2-τ]`.
pub fn step_standard(
    state: &mut StandardRealizationState,
    resp: &SystemResponse,
    x_t: &DVector<f64>,
) -> Result<DVector<f64>> {
    if x_t.len() != resp.nx() || state.xhat.len() != resp.nx() || state.delta_hist.len() != resp.horizon() {
        return Err(Error::dim(
            "step_standard",
            format!("T={} Nx={}", resp.horizon(), resp.nx()),
            format!("T={} Nx={} x={}", state.delta_hist.len(), state.xhat.len(), x_t.len()),
        ));
    }
    let delta = x_t - &state.xhat;
    state.delta_hist.push(delta);
    let u = state.delta_hist.convolve(resp.phi_u_blocks(), resp.nu());
    // Φx[τ] pairs with lag τ-1: the newest δ meets Φx[2].
    let mut xhat = DVector::zeros(resp.nx());
    for tau in 2..=resp.horizon() {
        xhat += resp.phi_x(tau) * state.delta_hist.lag(tau - 1);
    }
    state.xhat = xhat;
    Ok(u)
}

/// A state-feedback controller stepped once per sample.
pub trait Controller {
    fn step(&mut self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// `δ` computed by the most recent step.
    fn last_delta(&self) -> &DVector<f64>;
}

#[derive(Debug, Clone)]
pub struct SimplifiedRealization {
    model: LtiSystem,
    phi_u: Vec<DMatrix<f64>>,
    state: SimplifiedRealizationState,
}

impl SimplifiedRealization {
    /// `model` is the plant the controller was designed for; it may differ
    /// from the plant it is run against.
    pub fn new(model: LtiSystem, phi_u: Vec<DMatrix<f64>>) -> Result<Self> {
        if phi_u.is_empty() {
            return Err(Error::dim("SimplifiedRealization::phi_u", ">= 1 block", 0));
        }
        if let Some(bad) = phi_u.iter().find(|m| m.shape() != (model.nu(), model.nx())) {
            return Err(Error::dim(
                "SimplifiedRealization::phi_u",
                format!("{}x{}", model.nu(), model.nx()),
                format!("{:?}", bad.shape()),
            ));
        }
        let state = SimplifiedRealizationState::new(phi_u.len(), model.nx(), model.nu());
        Ok(SimplifiedRealization { model, phi_u, state })
    }

    pub fn from_response(model: LtiSystem, resp: &SystemResponse) -> Result<Self> {
        Self::new(model, resp.phi_u_blocks().to_vec())
    }

    pub fn state(&self) -> &SimplifiedRealizationState {
        &self.state
    }

    pub fn model(&self) -> &LtiSystem {
        &self.model
    }
}

impl Controller for SimplifiedRealization {
    fn step(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        step_simplified(&mut self.state, &self.phi_u, &self.model, x)
    }

    fn last_delta(&self) -> &DVector<f64> {
        self.state.delta_hist.newest()
    }
}

#[derive(Debug, Clone)]
pub struct StandardRealization {
    resp: SystemResponse,
    state: StandardRealizationState,
}

impl StandardRealization {
    pub fn new(resp: SystemResponse) -> Self {
        let state = StandardRealizationState::new(resp.horizon(), resp.nx());
        StandardRealization { resp, state }
    }

    pub fn state(&self) -> &StandardRealizationState {
        &self.state
    }
}

impl Controller for StandardRealization {
    fn step(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        step_standard(&mut self.state, &self.resp, x)
    }

    fn last_delta(&self) -> &DVector<f64> {
        self.state.delta_hist.newest()
    }
}

pub(crate) fn disturbance_at(d_x: &[DVector<f64>], t: usize, nx: usize) -> DVector<f64> {
    d_x.get(t).cloned().unwrap_or_else(|| DVector::zeros(nx))
}

/// Closed loop `x[0] = d[0]`, `u[t] = controller(x[t])`,
/// `x[t+1] = A x[t] + B u[t] + d[t+1]`, for `t < horizon`. Disturbances past
/// the end of `d_x` are zero.
pub fn run_closed_loop(
    sys: &LtiSystem,
    controller: &mut dyn Controller,
    d_x: &[DVector<f64>],
    horizon: usize,
) -> Result<SimTrace> {
    let nx = sys.nx();
    for d in d_x {
        sys.check_state(d, "run_closed_loop::d_x")?;
    }
    let mut trace = SimTrace::default();
    if !sys.is_schur_stable()? {
        trace.flags.push("plant is not Schur stable".into());
    }
    let mut x = disturbance_at(d_x, 0, nx);
    for t in 0..horizon {
        let u = controller.step(&x)?;
        sys.check_input(&u, "run_closed_loop::u")?;
        let next = sys.step(&x, &u, &disturbance_at(d_x, t + 1, nx))?;
        trace.delta.push(controller.last_delta().clone());
        trace.x.push(std::mem::replace(&mut x, next));
        trace.u.push(u);
    }
    Ok(trace)
}

/// Signals of the simplified loop with injections at all three summing
/// junctions.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectedLoop {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub delta: Vec<DVector<f64>>,
}

/// Runs plant and simplified controller with additive injections:
///
/// ```text
/// x[t+1] = A x[t] + B u[t] + d_x[t+1]           (x[0] = d_x[0])
/// v[t]   = Σ_τ Φu[τ] δ[t+1-τ]
/// u[t]   = v[t] + d_u[t]
/// δ[t]   = x[t] - A x[t-1] - B v[t-1] + d_δ[t]
/// ```
pub fn run_injected_loop(
    sys: &LtiSystem,
    phi_u: &[DMatrix<f64>],
    d_x: &[DVector<f64>],
    d_u: &[DVector<f64>],
    d_delta: &[DVector<f64>],
    horizon: usize,
) -> Result<InjectedLoop> {
    let (nx, nu) = (sys.nx(), sys.nu());
    let mut state = SimplifiedRealizationState::new(phi_u.len(), nx, nu);
    let mut out = InjectedLoop {
        x: Vec::with_capacity(horizon),
        u: Vec::with_capacity(horizon),
        delta: Vec::with_capacity(horizon),
    };
    let mut x = disturbance_at(d_x, 0, nx);
    for t in 0..horizon {
        let dd = disturbance_at(d_delta, t, nx);
        let v = state.step_injected(phi_u, sys, &x, Some(&dd))?;
        let u = v + disturbance_at(d_u, t, nu);
        let next = sys.step(&x, &u, &disturbance_at(d_x, t + 1, nx))?;
        out.delta.push(state.delta_hist.newest().clone());
        out.x.push(std::mem::replace(&mut x, next));
        out.u.push(u);
    }
    Ok(out)
}
