#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sls_deploy::synthesis::{synthesize_h2, SynthesisProblem, SystemResponse};
use sls_deploy::LtiSystem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dimensions with `ceil(nx / nu) <= t`, the horizon a generic `(A, B)`
/// needs for an FIR closed loop to exist.
pub fn feasible_dims(r: &mut ChaCha8Rng, max_nx: usize, max_nu: usize, max_t: usize) -> (usize, usize, usize) {
    loop {
        let nx = r.random_range(1..=max_nx);
        let nu = r.random_range(1..=max_nu.min(nx));
        let min_t = nx.div_ceil(nu);
        if min_t <= max_t {
            return (nx, nu, r.random_range(min_t..=max_t));
        }
    }
}

/// Random stable plant and its H2 response, with dimensions drawn from the
/// given upper bounds.
pub fn random_instance(seed: u64, max_nx: usize, max_nu: usize, max_t: usize) -> (LtiSystem, SystemResponse) {
    let mut r = rng(seed);
    let (nx, nu, t) = feasible_dims(&mut r, max_nx, max_nu, max_t);
    let rho = r.random_range(0.1..0.95);
    let sys = LtiSystem::random_stable(&mut r, nx, nu, rho);
    let resp = synthesize_h2(&SynthesisProblem::new(sys.clone(), t))
        .expect("B has full column rank almost surely")
        .response;
    (sys, resp)
}

/// Sparse plant and a sparse random FIR `Φu`.
///
/// `A` keeps its diagonal and each off-diagonal entry with probability `p`;
/// `B` and `Φu` keep each entry with probability `p`, and every column of
/// `B` has a nonzero. `Φx` follows `Φu` by the recursion, so the pair is
/// generally not closed at `T`. Only use it where `Φu` alone matters.
pub fn sparse_instance(seed: u64, nx: usize, nu: usize, t: usize, p: f64) -> (LtiSystem, SystemResponse) {
    let mut r = rng(seed);
    let mut a = DMatrix::from_fn(nx, nx, |i, j| {
        if i == j || r.random_bool(p) {
            r.random_range(-1.0..1.0)
        } else {
            0.0
        }
    });
    let rho = sls_deploy::lti::spectral_radius(&a).unwrap();
    if rho > 0.0 {
        a *= 0.8 / rho;
    }
    let mut b = DMatrix::from_fn(nx, nu, |_, _| if r.random_bool(p) { r.random_range(-1.0..1.0) } else { 0.0 });
    for k in 0..nu {
        if b.column(k).iter().all(|v| *v == 0.0) {
            b[(k % nx, k)] = 1.0;
        }
    }
    let sys = LtiSystem::new(a, b).unwrap();
    let phi_u: Vec<DMatrix<f64>> = (0..t)
        .map(|_| DMatrix::from_fn(nu, nx, |_, _| if r.random_bool(p) { r.random_range(-1.0..1.0) } else { 0.0 }))
        .collect();
    let mut phi_x = vec![DMatrix::identity(nx, nx)];
    for tau in 1..t {
        let next = sys.a() * &phi_x[tau - 1] + sys.b() * &phi_u[tau - 1];
        phi_x.push(next);
    }
    (sys, SystemResponse::new(phi_x, phi_u).unwrap())
}

/// Result of the joint null-space oracle.
pub struct Oracle {
    pub phi_x: Vec<DMatrix<f64>>,
    pub phi_u: Vec<DMatrix<f64>>,
    pub objective: f64,
    pub residual: f64,
}

/// Solves the whole H2 problem at once over every entry of every tap:
/// feasible set `z = z0 + N y` from an eigendecomposition of `CᵀC`, then the
/// reduced normal equations.
pub fn joint_oracle(
    sys: &LtiSystem,
    t: usize,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    mask_x: Option<&DMatrix<bool>>,
    mask_u: Option<&DMatrix<bool>>,
) -> Oracle {
    let (nx, nu) = (sys.nx(), sys.nu());
    let bx = nx * nx;
    let bu = nu * nx;
    let n = t * (bx + bu);
    let xi = |tau: usize, i: usize, j: usize| (tau - 1) * (bx + bu) + j * nx + i;
    let ui = |tau: usize, k: usize, j: usize| (tau - 1) * (bx + bu) + bx + j * nu + k;

    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for i in 0..nx {
        for j in 0..nx {
            rows.push((vec![(xi(1, i, j), 1.0)], if i == j { 1.0 } else { 0.0 }));
        }
    }
    let a = sys.a();
    let b = sys.b();
    for tau in 1..=t {
        for i in 0..nx {
            for j in 0..nx {
                let mut row = Vec::new();
                if tau < t {
                    row.push((xi(tau + 1, i, j), 1.0));
                }
                let sign = if tau < t { -1.0 } else { 1.0 };
                for m in 0..nx {
                    row.push((xi(tau, m, j), sign * a[(i, m)]));
                }
                for k in 0..nu {
                    row.push((ui(tau, k, j), sign * b[(i, k)]));
                }
                rows.push((row, 0.0));
            }
        }
    }
    for tau in 1..=t {
        if let Some(m) = mask_x {
            for i in 0..nx {
                for j in 0..nx {
                    if !m[(i, j)] {
                        rows.push((vec![(xi(tau, i, j), 1.0)], 0.0));
                    }
                }
            }
        }
        if let Some(m) = mask_u {
            for k in 0..nu {
                for j in 0..nx {
                    if !m[(k, j)] {
                        rows.push((vec![(ui(tau, k, j), 1.0)], 0.0));
                    }
                }
            }
        }
    }
    let mut c = DMatrix::zeros(rows.len(), n);
    let mut d = DVector::zeros(rows.len());
    for (r_i, (row, rhs)) in rows.iter().enumerate() {
        for &(col, v) in row {
            c[(r_i, col)] += v;
        }
        d[r_i] = *rhs;
    }

    let mut h = DMatrix::zeros(n, n);
    for tau in 1..=t {
        for j in 0..nx {
            for i in 0..nx {
                for m in 0..nx {
                    h[(xi(tau, i, j), xi(tau, m, j))] = q[(i, m)];
                }
            }
            for k in 0..nu {
                for l in 0..nu {
                    h[(ui(tau, k, j), ui(tau, l, j))] = r[(k, l)];
                }
            }
        }
    }

    let z0 = c.clone().svd(true, true).solve(&d, 1e-12).unwrap();
    let eig = SymmetricEigen::new(c.transpose() * &c);
    let scale = eig.eigenvalues.amax().max(1.0);
    let null: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * scale).collect();
    let nmat = DMatrix::from_fn(n, null.len(), |r_i, c_i| eig.eigenvectors[(r_i, null[c_i])]);
    let z = if null.is_empty() {
        z0
    } else {
        let lhs = nmat.transpose() * &h * &nmat;
        let rhs = -(nmat.transpose() * &h * &z0);
        let y = lhs.svd(true, true).solve(&rhs, 1e-12).unwrap();
        z0 + nmat * y
    };
    let residual = (&c * &z - &d).amax();
    let objective = (z.transpose() * &h * &z)[(0, 0)];
    let phi_x = (1..=t).map(|tau| DMatrix::from_fn(nx, nx, |i, j| z[xi(tau, i, j)])).collect();
    let phi_u = (1..=t).map(|tau| DMatrix::from_fn(nu, nx, |k, j| z[ui(tau, k, j)])).collect();
    Oracle {
        phi_x,
        phi_u,
        objective,
        residual,
    }
}

pub fn max_block_diff(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

/// Plant and response with every entry nonzero, for exact dense counts.
pub fn dense_instance(seed: u64, nx: usize, nu: usize, t: usize) -> (LtiSystem, SystemResponse) {
    let mut r = rng(seed);
    let mut nz = || {
        let v: f64 = r.random_range(0.1..1.0);
        if r.random_bool(0.5) { v } else { -v }
    };
    let a = DMatrix::from_fn(nx, nx, |_, _| nz());
    let b = DMatrix::from_fn(nx, nu, |_, _| nz());
    let phi_x = (0..t).map(|_| DMatrix::from_fn(nx, nx, |_, _| nz())).collect();
    let phi_u = (0..t).map(|_| DMatrix::from_fn(nu, nx, |_, _| nz())).collect();
    (LtiSystem::new(a, b).unwrap(), SystemResponse::new(phi_x, phi_u).unwrap())
}
