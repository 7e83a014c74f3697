//! H2 synthesis of FIR system responses, achievability checks, and the
//! robustness margin for stable/unstable splits of `A`.
//!
//! A response `{Φx[τ], Φu[τ]}` for `τ = 1..T` is achievable for `(A, B)` when
//!
//! ```text
//! Φx[1]   = I
//! Φx[τ+1] = A Φx[τ] + B Φu[τ]      τ = 1..T-1
//! 0       = A Φx[T] + B Φu[T]
//! ```
//!
//! The synthesis minimizes `Σ_τ ‖Q^½ Φx[τ]‖²_F + ‖R^½ Φu[τ]‖²_F` over that
//! affine set intersected with the sparsity masks. Column `j` of the response
//! is the reply to a unit disturbance on state `j`, so the problem splits into
//! `Nx` independent equality-constrained least-squares problems. Each one keeps
//! only the `Φu` entries of its column as unknowns; the `Φx` column is an
//! affine function of them through the recursion.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{is_schur_stable, LtiSystem};
use crate::serde_mat;

/// Largest admissible achievability residual for a synthesized response.
pub const FEASIBILITY_TOL: f64 = 1e-8;

const PSD_TOL: f64 = 1e-10;
const PD_TOL: f64 = 1e-10;
const PINV_EPS: f64 = 1e-12;

/// FIR closed-loop response, spectral elements `τ = 1..=T`.
///
/// JSON layout: `{"T": n, "phi_x": [[[..]]], "phi_u": [[[..]]]}`, τ-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawResponse", into = "RawResponse")]
pub struct SystemResponse {
    phi_x: Vec<DMatrix<f64>>,
    phi_u: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawResponse {
    #[serde(rename = "T")]
    horizon: usize,
    #[serde(with = "serde_mat::matrix_seq")]
    phi_x: Vec<DMatrix<f64>>,
    #[serde(with = "serde_mat::matrix_seq")]
    phi_u: Vec<DMatrix<f64>>,
}

impl TryFrom<RawResponse> for SystemResponse {
    type Error = Error;

    fn try_from(raw: RawResponse) -> Result<Self> {
        if raw.phi_x.len() != raw.horizon || raw.phi_u.len() != raw.horizon {
            return Err(Error::dim(
                "SystemResponse::T",
                raw.horizon,
                format!("{} phi_x / {} phi_u blocks", raw.phi_x.len(), raw.phi_u.len()),
            ));
        }
        SystemResponse::new(raw.phi_x, raw.phi_u)
    }
}

impl From<SystemResponse> for RawResponse {
    fn from(r: SystemResponse) -> Self {
        RawResponse {
            horizon: r.horizon(),
            phi_x: r.phi_x,
            phi_u: r.phi_u,
        }
    }
}

impl SystemResponse {
    pub fn new(phi_x: Vec<DMatrix<f64>>, phi_u: Vec<DMatrix<f64>>) -> Result<Self> {
        if phi_x.is_empty() || phi_x.len() != phi_u.len() {
            return Err(Error::dim(
                "SystemResponse",
                "equal, non-zero number of phi_x and phi_u blocks",
                format!("{} / {}", phi_x.len(), phi_u.len()),
            ));
        }
        let nx = phi_x[0].nrows();
        let nu = phi_u[0].nrows();
        for m in &phi_x {
            if m.shape() != (nx, nx) {
                return Err(Error::dim("SystemResponse::phi_x", format!("{nx}x{nx}"), format!("{:?}", m.shape())));
            }
        }
        for m in &phi_u {
            if m.shape() != (nu, nx) {
                return Err(Error::dim("SystemResponse::phi_u", format!("{nu}x{nx}"), format!("{:?}", m.shape())));
            }
        }
        if phi_x.iter().chain(&phi_u).flat_map(|m| m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("system response has non-finite entries".into()));
        }
        Ok(SystemResponse { phi_x, phi_u })
    }

    /// FIR horizon `T`.
    pub fn horizon(&self) -> usize {
        self.phi_u.len()
    }

    pub fn nx(&self) -> usize {
        self.phi_x[0].nrows()
    }

    pub fn nu(&self) -> usize {
        self.phi_u[0].nrows()
    }

    /// `Φx[tau]`, one-based.
    pub fn phi_x(&self, tau: usize) -> &DMatrix<f64> {
        &self.phi_x[tau - 1]
    }

    /// `Φu[tau]`, one-based.
    pub fn phi_u(&self, tau: usize) -> &DMatrix<f64> {
        &self.phi_u[tau - 1]
    }

    pub fn phi_x_blocks(&self) -> &[DMatrix<f64>] {
        &self.phi_x
    }

    pub fn phi_u_blocks(&self) -> &[DMatrix<f64>] {
        &self.phi_u
    }

    fn check_system(&self, sys: &LtiSystem) -> Result<()> {
        if self.nx() != sys.nx() || self.nu() != sys.nu() {
            return Err(Error::dim(
                "SystemResponse vs LtiSystem",
                format!("Nx={} Nu={}", sys.nx(), sys.nu()),
                format!("Nx={} Nu={}", self.nx(), self.nu()),
            ));
        }
        Ok(())
    }
}

/// Weighted H2 problem over FIR responses with optional sparsity masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisProblem {
    pub system: LtiSystem,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "Q", with = "serde_mat::matrix")]
    pub q: DMatrix<f64>,
    #[serde(rename = "R", with = "serde_mat::matrix")]
    pub r: DMatrix<f64>,
    /// `false` entries force the matching `Φx[τ]` entries to zero for every τ.
    #[serde(default, with = "serde_mat::opt_mask", skip_serializing_if = "Option::is_none")]
    pub mask_x: Option<DMatrix<bool>>,
    #[serde(default, with = "serde_mat::opt_mask", skip_serializing_if = "Option::is_none")]
    pub mask_u: Option<DMatrix<bool>>,
}

impl SynthesisProblem {
    /// Identity weights, no masks.
    pub fn new(system: LtiSystem, horizon: usize) -> Self {
        let (nx, nu) = (system.nx(), system.nu());
        SynthesisProblem {
            system,
            horizon,
            q: DMatrix::identity(nx, nx),
            r: DMatrix::identity(nu, nu),
            mask_x: None,
            mask_u: None,
        }
    }

    pub fn with_weights(mut self, q: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        self.q = q;
        self.r = r;
        self
    }

    pub fn with_masks(mut self, mask_x: Option<DMatrix<bool>>, mask_u: Option<DMatrix<bool>>) -> Self {
        self.mask_x = mask_x;
        self.mask_u = mask_u;
        self
    }

    /// Every violated invariant, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let (nx, nu) = (self.system.nx(), self.system.nu());
        let mut out = Vec::new();
        if self.horizon == 0 {
            out.push("FIR horizon T must be at least 1".to_string());
        }
        check_weight(&self.q, nx, "Q", -PSD_TOL, "positive semidefinite", &mut out);
        check_weight(&self.r, nu, "R", PD_TOL, "positive definite", &mut out);
        if let Some(m) = &self.mask_x {
            if m.shape() != (nx, nx) {
                out.push(format!("mask_x must be {nx}x{nx}, got {:?}", m.shape()));
            } else if (0..nx).any(|i| !m[(i, i)]) {
                out.push("mask_x must be true on its diagonal (Φx[1] = I)".to_string());
            }
        }
        if let Some(m) = &self.mask_u {
            if m.shape() != (nu, nx) {
                out.push(format!("mask_u must be {nu}x{nx}, got {:?}", m.shape()));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProblem(v.join("; ")))
        }
    }
}

fn check_weight(
    w: &DMatrix<f64>,
    n: usize,
    name: &str,
    min_eig: f64,
    what: &str,
    out: &mut Vec<String>,
) {
    if w.shape() != (n, n) {
        out.push(format!("{name} must be {n}x{n}, got {:?}", w.shape()));
        return;
    }
    let scale = w.amax().max(1.0);
    if (w - w.transpose()).amax() > 1e-9 * scale {
        out.push(format!("{name} must be symmetric"));
        return;
    }
    let eig = SymmetricEigen::new(w.clone()).eigenvalues;
    if eig.iter().any(|&l| l < min_eig) {
        out.push(format!("{name} must be {what}"));
    }
}

/// Symmetric square root with eigenvalues above `-PSD_TOL` clamped to zero.
fn sqrt_psd(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w.clone());
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Per-family residuals of the achievability conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityReport {
    /// Maximum over all entries below.
    pub residual: f64,
    /// `max|Φx[1] - I|`.
    pub initial: f64,
    /// `max|Φx[τ+1] - AΦx[τ] - BΦu[τ]|` for `τ = 1..T-1`.
    pub recursion: Vec<f64>,
    /// `max|AΦx[T] + BΦu[T]|`.
    pub closure: f64,
}

pub fn achievability_residual(resp: &SystemResponse, sys: &LtiSystem) -> Result<AchievabilityReport> {
    resp.check_system(sys)?;
    let (a, b) = (sys.a(), sys.b());
    let t = resp.horizon();
    let initial = (resp.phi_x(1) - DMatrix::<f64>::identity(sys.nx(), sys.nx())).amax();
    let recursion: Vec<f64> = (1..t)
        .map(|tau| (resp.phi_x(tau + 1) - a * resp.phi_x(tau) - b * resp.phi_u(tau)).amax())
        .collect();
    let closure = (a * resp.phi_x(t) + b * resp.phi_u(t)).amax();
    let residual = recursion.iter().copied().fold(initial.max(closure), f64::max);
    Ok(AchievabilityReport {
        residual,
        initial,
        recursion,
        closure,
    })
}

/// Synthesized response together with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Synthesized {
    pub response: SystemResponse,
    /// `Σ_τ ‖Q^½ Φx[τ]‖²_F + ‖R^½ Φu[τ]‖²_F`.
    pub objective: f64,
    pub achievability: AchievabilityReport,
    pub warnings: Vec<String>,
}

/// Value of the H2 objective for an arbitrary response.
pub fn h2_objective(resp: &SystemResponse, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    let qh = sqrt_psd(q);
    let rh = sqrt_psd(r);
    resp.phi_x
        .iter()
        .map(|p| (&qh * p).norm_squared())
        .chain(resp.phi_u.iter().map(|p| (&rh * p).norm_squared()))
        .sum()
}

struct ColumnSolution {
    /// `Φu[τ]` column entries, τ-major, length `T * Nu`.
    phi_u: Vec<f64>,
    constraint_residual: f64,
    warning: Option<String>,
}

pub fn synthesize_h2(prob: &SynthesisProblem) -> Result<Synthesized> {
    prob.validate()?;
    let sys = &prob.system;
    let (nx, nu, t) = (sys.nx(), sys.nu(), prob.horizon);
    let qh = sqrt_psd(&prob.q);
    let rh = sqrt_psd(&prob.r);
    let q = qh.transpose() * &qh;
    let r = rh.transpose() * &rh;

    let columns: Vec<Result<ColumnSolution>> = (0..nx)
        .into_par_iter()
        .map(|j| solve_column(prob, &q, &r, j))
        .collect();

    let mut phi_u = vec![DMatrix::zeros(nu, nx); t];
    let mut warnings = Vec::new();
    let mut worst = 0.0f64;
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        worst = worst.max(col.constraint_residual);
        warnings.extend(col.warning);
        for (tau, block) in phi_u.iter_mut().enumerate() {
            for k in 0..nu {
                block[(k, j)] = col.phi_u[tau * nu + k];
            }
        }
    }
    if worst > FEASIBILITY_TOL {
        return Err(Error::Infeasible { residual: worst });
    }

    let mut phi_x = Vec::with_capacity(t);
    phi_x.push(DMatrix::identity(nx, nx));
    for tau in 1..t {
        let next = sys.a() * &phi_x[tau - 1] + sys.b() * &phi_u[tau - 1];
        phi_x.push(next);
    }
    if let Some(mask) = &prob.mask_x {
        for block in &mut phi_x {
            block.zip_apply(mask, |v, keep| {
                if !keep {
                    *v = 0.0;
                }
            });
        }
    }

    let response = SystemResponse::new(phi_x, phi_u)?;
    let achievability = achievability_residual(&response, sys)?;
    if achievability.residual > FEASIBILITY_TOL {
        return Err(Error::Infeasible {
            residual: achievability.residual,
        });
    }
    let objective = h2_objective(&response, &prob.q, &prob.r);
    Ok(Synthesized {
        response,
        objective,
        achievability,
        warnings,
    })
}

fn solve_column(prob: &SynthesisProblem, q: &DMatrix<f64>, r: &DMatrix<f64>, j: usize) -> Result<ColumnSolution> {
    let sys = &prob.system;
    let (a, b) = (sys.a(), sys.b());
    let (nx, nu, t) = (sys.nx(), sys.nu(), prob.horizon);

    // Unknowns: the unmasked entries of Φu[τ][:, j], τ-major.
    let free_rows: Vec<usize> = (0..nu)
        .filter(|&k| prob.mask_u.as_ref().is_none_or(|m| m[(k, j)]))
        .collect();
    let per_tau = free_rows.len();
    let n = per_tau * t;

    // Selector S[τ]: Φu[τ][:, j] = S[τ] v.
    let selector = |tau: usize| {
        let mut s = DMatrix::zeros(nu, n);
        for (c, &k) in free_rows.iter().enumerate() {
            s[(k, tau * per_tau + c)] = 1.0;
        }
        s
    };

    // Φx[τ][:, j] = x0[τ] + M[τ] v for τ = 1..=T+1 (index τ-1).
    let mut x0 = Vec::with_capacity(t + 1);
    let mut m = Vec::with_capacity(t + 1);
    let mut e = DVector::zeros(nx);
    e[j] = 1.0;
    x0.push(e);
    m.push(DMatrix::zeros(nx, n));
    for tau in 0..t {
        let next_x0 = a * &x0[tau];
        let next_m = a * &m[tau] + b * selector(tau);
        x0.push(next_x0);
        m.push(next_m);
    }

    // Equality constraints E v = f: FIR closure and masked Φx entries.
    let mut e_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for (i, f) in x0[t].iter().enumerate() {
        e_rows.push((m[t].row(i).transpose(), -f));
    }
    if let Some(mask) = &prob.mask_x {
        for tau in 1..t {
            for i in 0..nx {
                if !mask[(i, j)] {
                    e_rows.push((m[tau].row(i).transpose(), -x0[tau][i]));
                }
            }
        }
    }
    let p = e_rows.len();

    if n == 0 {
        let residual = e_rows.iter().map(|(_, f)| f.abs()).fold(0.0, f64::max);
        return Ok(ColumnSolution {
            phi_u: vec![0.0; nu * t],
            constraint_residual: residual,
            warning: None,
        });
    }

    let mut hess = DMatrix::zeros(n, n);
    let mut grad = DVector::zeros(n);
    for tau in 0..t {
        let s = selector(tau);
        hess += m[tau].transpose() * q * &m[tau] + s.transpose() * r * &s;
        grad += m[tau].transpose() * (q * &x0[tau]);
    }

    let mut kkt = DMatrix::zeros(n + p, n + p);
    let mut rhs = DVector::zeros(n + p);
    kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
    rhs.rows_mut(0, n).copy_from(&(-&grad));
    for (row, (coef, f)) in e_rows.iter().enumerate() {
        kkt.view_mut((n + row, 0), (1, n)).copy_from(&coef.transpose());
        kkt.view_mut((0, n + row), (n, 1)).copy_from(coef);
        rhs[n + row] = *f;
    }

    let scale = kkt.amax().max(1.0) * rhs.amax().max(1.0);
    let lu_solution = kkt
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|sol| sol.iter().all(|v| v.is_finite()) && (&kkt * sol - &rhs).amax() <= 1e-10 * scale);
    let (solution, warning) = match lu_solution {
        Some(sol) => (sol, None),
        None => {
            let svd = kkt.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let sol = svd
                .solve(&rhs, PINV_EPS * smax.max(1.0))
                .map_err(|e| Error::Numeric(format!("KKT pseudo-inverse failed: {e}")))?;
            (
                sol,
                Some(format!(
                    "column {j}: KKT system is rank-deficient or ill-conditioned; solved by pseudo-inverse"
                )),
            )
        }
    };
    let mut v = solution.rows(0, n).into_owned();
    if p > 0 {
        project_onto_constraints(&e_rows, &mut v);
    }

    let constraint_residual = e_rows
        .iter()
        .map(|(coef, f)| (coef.dot(&v) - f).abs())
        .fold(0.0, f64::max);

    let mut phi_u = vec![0.0; nu * t];
    for tau in 0..t {
        for (c, &k) in free_rows.iter().enumerate() {
            phi_u[tau * nu + k] = v[tau * per_tau + c];
        }
    }
    Ok(ColumnSolution {
        phi_u,
        constraint_residual,
        warning,
    })
}

/// Minimum-norm correction of `v` onto `E v = f`. The KKT solve can lose
/// several digits on the constraint rows when the Hessian is badly scaled.
fn project_onto_constraints(e_rows: &[(DVector<f64>, f64)], v: &mut DVector<f64>) {
    let n = v.len();
    let e = DMatrix::from_fn(e_rows.len(), n, |i, k| e_rows[i].0[k]);
    let f = DVector::from_iterator(e_rows.len(), e_rows.iter().map(|(_, f)| *f));
    let svd = e.clone().svd(true, true);
    let eps = PINV_EPS * svd.singular_values.max().max(1.0);
    let mut res = &e * &*v - &f;
    for _ in 0..2 {
        let Ok(step) = svd.solve(&res, eps) else { return };
        let cand = &*v - step;
        let cand_res = &e * &cand - &f;
        if cand_res.amax().partial_cmp(&res.amax()) != Some(std::cmp::Ordering::Less) {
            return;
        }
        *v = cand;
        res = cand_res;
    }
}

/// `Φx` rebuilt from `Φu` through the achievability recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiXReconstruction {
    /// `Φx[1..=t_out]`.
    pub phi_x: Vec<DMatrix<f64>>,
    /// `max|Φx[t_out + 1]|`, the first truncated element.
    pub tail_norm: f64,
    /// `false` when `A` is not Schur stable and the tail need not decay.
    pub schur_stable: bool,
}

/// Rebuilds `Φx[1..=t_out]` from `Φu`, treating `Φu[τ]` as zero past its horizon.
pub fn phi_x_from_phi_u(sys: &LtiSystem, phi_u: &[DMatrix<f64>], t_out: usize) -> Result<PhiXReconstruction> {
    let (nx, nu) = (sys.nx(), sys.nu());
    if let Some(bad) = phi_u.iter().find(|m| m.shape() != (nu, nx)) {
        return Err(Error::dim("phi_x_from_phi_u::phi_u", format!("{nu}x{nx}"), format!("{:?}", bad.shape())));
    }
    if t_out == 0 {
        return Err(Error::dim("phi_x_from_phi_u::t_out", ">= 1", 0));
    }
    let mut phi_x = Vec::with_capacity(t_out + 1);
    phi_x.push(DMatrix::identity(nx, nx));
    for tau in 1..=t_out {
        let mut next = sys.a() * &phi_x[tau - 1];
        if let Some(pu) = phi_u.get(tau - 1) {
            next += sys.b() * pu;
        }
        phi_x.push(next);
    }
    let tail = phi_x.pop().expect("t_out + 1 blocks");
    Ok(PhiXReconstruction {
        phi_x,
        tail_norm: tail.amax(),
        schur_stable: is_schur_stable(sys.a())?,
    })
}

/// ℓ∞-induced norm of the FIR operator `A_u Φx`:
/// `max_i Σ_τ Σ_j |(A_u Φx[τ])_ij|`. A value below 1 certifies that the
/// controller designed for `(A_s, B)` also stabilizes `(A_s + A_u, B)`.
pub fn robust_stability_margin(a_s: &DMatrix<f64>, a_u: &DMatrix<f64>, phi_x: &[DMatrix<f64>]) -> Result<f64> {
    let nx = a_s.nrows();
    if !a_s.is_square() || a_u.shape() != a_s.shape() {
        return Err(Error::dim(
            "robust_stability_margin::A_u",
            format!("{nx}x{nx}"),
            format!("{:?}", a_u.shape()),
        ));
    }
    if let Some(bad) = phi_x.iter().find(|m| m.shape() != (nx, nx)) {
        return Err(Error::dim("robust_stability_margin::phi_x", format!("{nx}x{nx}"), format!("{:?}", bad.shape())));
    }
    let mut row_sums = DVector::<f64>::zeros(nx);
    for block in phi_x {
        let prod = a_u * block;
        for i in 0..nx {
            row_sums[i] += prod.row(i).iter().map(|v| v.abs()).sum::<f64>();
        }
    }
    Ok(row_sums.iter().copied().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar(v: f64) -> DMatrix<f64> {
        dmatrix![v]
    }

    fn deadbeat() -> (LtiSystem, SystemResponse) {
        let sys = LtiSystem::scalar(0.5, 1.0).unwrap();
        let resp = SystemResponse::new(vec![scalar(1.0)], vec![scalar(-0.5)]).unwrap();
        (sys, resp)
    }

    #[test]
    fn residual_of_deadbeat_is_zero() {
        let (sys, resp) = deadbeat();
        let rep = achievability_residual(&resp, &sys).unwrap();
        assert_eq!(rep.residual, 0.0);
        assert!(rep.recursion.is_empty());
    }

    #[test]
    fn residual_reports_violated_closure() {
        let (sys, _) = deadbeat();
        let resp = SystemResponse::new(vec![scalar(1.0)], vec![scalar(0.0)]).unwrap();
        let rep = achievability_residual(&resp, &sys).unwrap();
        assert_eq!(rep.closure, 0.5);
        assert_eq!(rep.residual, 0.5);
    }

    #[test]
    fn residual_of_static_system() {
        let sys = LtiSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)).unwrap();
        let resp = SystemResponse::new(
            vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)],
            vec![DMatrix::zeros(2, 2); 3],
        )
        .unwrap();
        assert_eq!(achievability_residual(&resp, &sys).unwrap().residual, 0.0);
    }

    #[test]
    fn residual_rejects_mismatched_system() {
        let (_, resp) = deadbeat();
        let sys = LtiSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1)).unwrap();
        assert!(achievability_residual(&resp, &sys).is_err());
    }

    #[test]
    fn horizon_one_is_deadbeat() {
        let sys = LtiSystem::scalar(0.5, 1.0).unwrap();
        let prob = SynthesisProblem::new(sys, 1).with_weights(scalar(3.0), scalar(0.1));
        let out = synthesize_h2(&prob).unwrap();
        assert!((out.response.phi_u(1)[(0, 0)] + 0.5).abs() < 1e-14);
        assert_eq!(out.response.phi_x(1)[(0, 0)], 1.0);
    }

    #[test]
    fn zero_dynamics_give_identity_response() {
        let sys = LtiSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let out = synthesize_h2(&SynthesisProblem::new(sys, 4)).unwrap();
        assert_eq!(out.response.phi_x(1), &DMatrix::<f64>::identity(2, 2));
        for tau in 2..=4 {
            assert!(out.response.phi_x(tau).amax() < 1e-15);
        }
        for tau in 1..=4 {
            assert!(out.response.phi_u(tau).amax() < 1e-15);
        }
        assert!((out.objective - 2.0).abs() < 1e-14);
    }

    #[test]
    fn fully_masked_inputs_are_infeasible() {
        let sys = LtiSystem::scalar(0.5, 1.0).unwrap();
        let prob = SynthesisProblem::new(sys, 3).with_masks(None, Some(DMatrix::from_element(1, 1, false)));
        match synthesize_h2(&prob) {
            Err(Error::Infeasible { residual }) => assert!((residual - 0.125).abs() < 1e-15),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn redundant_constraints_fall_back_to_pseudo_inverse() {
        // Two identical states driven by one input: closure rows are duplicates.
        let sys = LtiSystem::new(dmatrix![0.5, 0.0; 0.0, 0.5], dmatrix![1.0; 1.0]).unwrap();
        match synthesize_h2(&SynthesisProblem::new(sys.clone(), 2)) {
            Err(Error::Infeasible { .. }) => {}
            other => panic!("column directions are not jointly controllable: {other:?}"),
        }
        let sys = LtiSystem::new(dmatrix![0.5, 0.5; 0.5, 0.5], dmatrix![1.0; 1.0]).unwrap();
        let out = synthesize_h2(&SynthesisProblem::new(sys.clone(), 2)).unwrap();
        assert!(!out.warnings.is_empty());
        assert!(achievability_residual(&out.response, &sys).unwrap().residual < 1e-12);
    }

    #[test]
    fn invalid_problems_report_every_violation() {
        let sys = LtiSystem::scalar(0.5, 1.0).unwrap();
        let prob = SynthesisProblem::new(sys, 0)
            .with_weights(scalar(-1.0), scalar(0.0))
            .with_masks(Some(DMatrix::from_element(1, 1, false)), None);
        let v = prob.violations();
        assert_eq!(v.len(), 4, "{v:?}");
        assert!(matches!(synthesize_h2(&prob), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn phi_x_reconstruction_examples() {
        let (sys, resp) = deadbeat();
        let rec = phi_x_from_phi_u(&sys, resp.phi_u_blocks(), 3).unwrap();
        let vals: Vec<f64> = rec.phi_x.iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(vals, vec![1.0, 0.0, 0.0]);
        assert_eq!(rec.tail_norm, 0.0);

        let rec = phi_x_from_phi_u(&sys, &[], 3).unwrap();
        let vals: Vec<f64> = rec.phi_x.iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(vals, vec![1.0, 0.5, 0.25]);
        assert_eq!(rec.tail_norm, 0.125);
        assert!(rec.schur_stable);

        let sys0 = LtiSystem::new(DMatrix::zeros(2, 2), dmatrix![1.0; 2.0]).unwrap();
        let pu = vec![dmatrix![1.0, -1.0], dmatrix![0.5, 3.0]];
        let rec = phi_x_from_phi_u(&sys0, &pu, 2).unwrap();
        assert_eq!(rec.phi_x[1], sys0.b() * &pu[0]);
        assert_eq!(rec.tail_norm, (sys0.b() * &pu[1]).amax());
    }

    #[test]
    fn phi_x_reconstruction_flags_unstable_plants() {
        let sys = LtiSystem::scalar(2.0, 1.0).unwrap();
        let rec = phi_x_from_phi_u(&sys, &[], 2).unwrap();
        assert!(!rec.schur_stable);
        assert_eq!(rec.tail_norm, 4.0);
    }

    #[test]
    fn robust_margin_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(robust_stability_margin(&id, &DMatrix::zeros(3, 3), std::slice::from_ref(&id)).unwrap(), 0.0);
        let eps = 0.03;
        let m = robust_stability_margin(&(&id * 0.2), &(&id * eps), std::slice::from_ref(&id)).unwrap();
        assert!((m - eps).abs() < 1e-15);
        let m = robust_stability_margin(&scalar(0.5), &scalar(0.1), &[scalar(1.0), scalar(0.0)]).unwrap();
        assert!((m - 0.1).abs() < 1e-15);
        assert!(robust_stability_margin(&scalar(0.5), &DMatrix::zeros(2, 2), &[]).is_err());
    }

    #[test]
    fn response_json_layout() {
        let (_, resp) = deadbeat();
        let json = serde_json::to_string(&resp).unwrap();
        assert_eq!(json, r#"{"T":1,"phi_x":[[[1.0]]],"phi_u":[[[-0.5]]]}"#);
        assert!(serde_json::from_str::<SystemResponse>(r#"{"T":2,"phi_x":[[[1.0]]],"phi_u":[[[-0.5]]]}"#).is_err());
    }
}
