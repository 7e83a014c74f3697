//! Discrete-time plant `x[t+1] = A x[t] + B u[t] + d[t]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_mat;

/// Margin below 1 a spectral radius must clear to count as Schur stable.
pub const SCHUR_MARGIN: f64 = 1e-9;

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;

/// Plant matrices `A` (`nx × nx`) and `B` (`nx × nu`).
///
/// Serialized as `{"A": [[..]], "B": [[..]]}` with row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystem", into = "RawSystem")]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSystem {
    #[serde(rename = "A", with = "serde_mat::matrix")]
    a: DMatrix<f64>,
    #[serde(rename = "B", with = "serde_mat::matrix")]
    b: DMatrix<f64>,
}

impl TryFrom<RawSystem> for LtiSystem {
    type Error = Error;

    fn try_from(raw: RawSystem) -> Result<Self> {
        LtiSystem::new(raw.a, raw.b)
    }
}

impl From<LtiSystem> for RawSystem {
    fn from(sys: LtiSystem) -> Self {
        RawSystem { a: sys.a, b: sys.b }
    }
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || !a.is_square() {
            return Err(Error::dim(
                "LtiSystem::A",
                "non-empty square matrix",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::dim(
                "LtiSystem::B",
                format!("{}xNu with Nu >= 1", a.nrows()),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("plant matrices contain non-finite entries".into()));
        }
        Ok(LtiSystem { a, b })
    }

    /// Scalar plant `x[t+1] = a x[t] + b u[t] + d[t]`.
    pub fn scalar(a: f64, b: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b))
    }

    /// Random plant with Gaussian `B` and a Gaussian `A` rescaled to spectral radius `rho`.
    pub fn random_stable<R: Rng + ?Sized>(rng: &mut R, nx: usize, nu: usize, rho: f64) -> Self {
        let mut a = DMatrix::from_fn(nx, nx, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DMatrix::from_fn(nx, nu, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = spectral_radius(&a).expect("square matrix");
        if r > 0.0 {
            a *= rho / r;
        }
        LtiSystem { a, b }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_schur_stable(&self) -> Result<bool> {
        is_schur_stable(&self.a)
    }

    /// One plant step: returns `A x + B u + d`.
    pub fn step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_state(x, "step_plant::x")?;
        self.check_input(u, "step_plant::u")?;
        self.check_state(d, "step_plant::d")?;
        Ok(&self.a * x + &self.b * u + d)
    }

    pub(crate) fn check_state(&self, v: &DVector<f64>, context: &'static str) -> Result<()> {
        if v.len() != self.nx() {
            return Err(Error::dim(context, self.nx(), v.len()));
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, v: &DVector<f64>, context: &'static str) -> Result<()> {
        if v.len() != self.nu() {
            return Err(Error::dim(context, self.nu(), v.len()));
        }
        Ok(())
    }
}

/// Free-function form of [`LtiSystem::step`].
pub fn step_plant(
    sys: &LtiSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<DVector<f64>> {
    sys.step(x, u, d)
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::dim(
            "spectral_radius",
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = a
        .clone()
        .try_schur(SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

pub fn is_schur_stable(a: &DMatrix<f64>) -> Result<bool> {
    Ok(spectral_radius(a)? < 1.0 - SCHUR_MARGIN)
}
