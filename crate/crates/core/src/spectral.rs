//! Spectral side of the model: Dirichlet–Neumann eigenpairs, poles and
//! residues of the modal transfer function
//!
//! ```text
//! 1/ω_λ(z),   ω_λ(z) = z² + b λ^β̃ z + c² λ
//! ```
//!
//! separable excitations producing `u = φ(x) ψ(t)`, and the two-excitation
//! determinant built from Laplace transforms.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::Excitation;
use crate::fracquad::{FracWeights, TimeGrid};
use crate::mesh::{assemble_stiffness, assemble_weighted_mass, solve_tridiagonal, CoeffField, Mesh1D};

/// Minimum gap between distinct poles.
pub const POLE_GAP: f64 = 1e-10;
/// Minimum residue modulus.
pub const RESIDUE_FLOOR: f64 = 1e-12;
/// Largest admissible `|ψ|` at the end of a truncated Laplace transform.
pub const DECAY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub index: usize,
    pub lambda: f64,
    /// `√2 sin((j - ½)πx)` at the mesh nodes.
    pub phi: Vec<f64>,
}

/// Analytic eigenpairs of `-u''` with `u(0) = 0`, `u'(1) = 0`.
pub fn eigenpairs_dn(mesh: &Mesh1D, count: usize) -> Result<Vec<EigenPair>> {
    if count == 0 {
        return Err(Error::InvalidInput("count must be at least 1".into()));
    }
    Ok((1..=count)
        .map(|j| {
            let k = (j as f64 - 0.5) * PI;
            EigenPair {
                index: j,
                lambda: k * k,
                phi: mesh.nodes().iter().map(|&x| 2f64.sqrt() * (k * x).sin()).collect(),
            }
        })
        .collect())
}

/// Smallest `count` generalized eigenvalues of the discrete pencil `(A, M)`.
pub fn discrete_eigenvalues(mesh: &Mesh1D, count: usize) -> Result<Vec<f64>> {
    let n = mesh.n_free();
    if count == 0 || count > n {
        return Err(Error::InvalidInput(format!("count must lie in 1..={n}")));
    }
    let a = dense(&assemble_stiffness(mesh).to_dense());
    let m = dense(&assemble_weighted_mass(mesh, &CoeffField::constant(mesh, 1.0))?.to_dense());
    let l = Cholesky::new(m).ok_or(Error::CholeskyFailed)?.l();
    let linv = l.try_inverse().ok_or(Error::CholeskyFailed)?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.truncate(count);
    Ok(ev)
}

fn dense(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

/// Gram matrix `Φᵀ M Φ` of nodal functions under the unit mass matrix.
pub fn mass_gram(mesh: &Mesh1D, funcs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = assemble_weighted_mass(mesh, &CoeffField::constant(mesh, 1.0))?;
    let images: Vec<Vec<f64>> = funcs.iter().map(|f| m.mul_vec(mesh.restrict(f))).collect();
    Ok(DMatrix::from_fn(funcs.len(), funcs.len(), |i, j| {
        images[i].iter().zip(mesh.restrict(&funcs[j])).map(|(a, b)| a * b).sum()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolePair {
    pub p_plus: Complex64,
    pub p_minus: Complex64,
    pub residue_plus: Complex64,
}

pub fn omega(z: Complex64, lambda: f64, b: f64, c: f64, beta_tilde: f64) -> Complex64 {
    z * z + b * lambda.powf(beta_tilde) * z + c * c * lambda
}

/// Roots of `ω_λ` and the residue of `1/ω_λ` at `p⁺`.
pub fn poles_and_residue(lambda: f64, b: f64, c: f64, beta_tilde: f64) -> PolePair {
    let half = 0.5 * b * lambda.powf(beta_tilde);
    let root = Complex64::new(half * half - c * c * lambda, 0.0).sqrt();
    PolePair {
        p_plus: -half + root,
        p_minus: -half - root,
        residue_plus: 1.0 / (2.0 * root),
    }
}

/// True when all `p⁺` are pairwise separated and all residues are nonzero.
pub fn check_pole_separation(lambdas: &[f64], b: f64, c: f64, beta_tilde: f64) -> bool {
    let pairs: Vec<PolePair> = lambdas
        .iter()
        .map(|&l| poles_and_residue(l, b, c, beta_tilde))
        .collect();
    for (i, p) in pairs.iter().enumerate() {
        let r = p.residue_plus;
        if !(r.norm() > RESIDUE_FLOOR && r.is_finite()) {
            return false;
        }
        if pairs[i + 1..]
            .iter()
            .any(|q| (q.p_plus - p.p_plus).norm() <= POLE_GAP)
        {
            return false;
        }
    }
    true
}

/// Excitation whose linear (`κ = 0`, `ς = 1`) response is `φ(x) ψ(t)`:
///
/// ```text
/// r̃ = φ ψ'' + (𝒜φ)(ψ + b ∂_t^α ψ)
/// ```
///
/// `𝒜φ` is the discrete operator `M⁻¹Aφ`, so the semi-discrete response is
/// exactly the nodal product. The Caputo derivative of `ψ` is taken from
/// `caputo` when supplied and from the product-trapezoid rule otherwise.
#[allow(clippy::too_many_arguments)]
pub fn separable_excitation(
    phi: &[f64],
    psi: &[f64],
    psi_tt: &[f64],
    caputo: Option<&[f64]>,
    alpha: f64,
    b_damp: f64,
    mesh: &Mesh1D,
    grid: &TimeGrid,
) -> Result<Excitation> {
    let nn = mesh.n_nodes();
    let nl = grid.n_levels();
    if phi.len() != nn {
        return Err(Error::ShapeMismatch { expected: nn, got: phi.len() });
    }
    for s in [psi, psi_tt].into_iter().chain(caputo) {
        if s.len() != nl {
            return Err(Error::ShapeMismatch { expected: nl, got: s.len() });
        }
    }
    let scale = phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if phi[0].abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidInput(format!("phi(0) = {} violates the Dirichlet condition", phi[0])));
    }
    let h = mesh.h();
    let slope = (3.0 * phi[nn - 1] - 4.0 * phi[nn - 2] + phi[nn - 3]) / (2.0 * h);
    if slope.abs() > 0.05 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput(format!("phi'(1) = {slope} violates the Neumann condition")));
    }

    let a_phi = mesh.extend(&solve_tridiagonal(
        &assemble_weighted_mass(mesh, &CoeffField::constant(mesh, 1.0))?,
        &assemble_stiffness(mesh).mul_vec(mesh.restrict(phi)),
    )?);

    let frac = match caputo {
        Some(c) => c.to_vec(),
        None if b_damp > 0.0 => caputo_derivative(psi, alpha, grid)?,
        None => vec![0.0; nl],
    };
    let mut samples = Vec::with_capacity(nn * nl);
    for n in 0..nl {
        let temporal = psi[n] + b_damp * frac[n];
        samples.extend((0..nn).map(|i| phi[i] * psi_tt[n] + a_phi[i] * temporal));
    }
    Ok(Excitation::Direct { n_nodes: nn, samples })
}

/// `∂_t^α ψ = I^{1-α} ψ'` with `ψ'` by second-order differences.
pub fn caputo_derivative(psi: &[f64], alpha: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = psi.len();
    if n != grid.n_levels() || n < 3 {
        return Err(Error::ShapeMismatch { expected: grid.n_levels(), got: n });
    }
    let dt = grid.dt();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * dt);
    for k in 1..n - 1 {
        d[k] = (psi[k + 1] - psi[k - 1]) / (2.0 * dt);
    }
    d[n - 1] = (3.0 * psi[n - 1] - 4.0 * psi[n - 2] + psi[n - 3]) / (2.0 * dt);
    FracWeights::new(grid, 1.0 - alpha)?.integrate(&d)
}

/// Trapezoid approximation of `∫_0^T e^{-zt} f(t) dt`.
pub fn laplace_transform(samples: &[f64], grid: &TimeGrid, z: Complex64) -> Complex64 {
    let w = grid.trapezoid_weights();
    samples
        .iter()
        .zip(&w)
        .enumerate()
        .map(|(n, (f, wn))| (-z * grid.t(n)).exp() * (f * wn))
        .sum()
}

/// `|det [[L(ψ₁'')(p), L((ψ₁²)'')(p)], [L(ψ₂'')(p), L((ψ₂²)'')(p)]]|` for
/// every pole. With `ψ(0) = ψ'(0) = 0` and `ψ` decayed by `T`,
/// `L(f'')(p) = p² L(f)(p)`, so only transforms of samples are needed.
pub fn determinant_condition(
    psi1: &[f64],
    psi2: &[f64],
    poles: &[Complex64],
    grid: &TimeGrid,
) -> Result<Vec<(Complex64, f64)>> {
    for psi in [psi1, psi2] {
        if psi.len() != grid.n_levels() {
            return Err(Error::ShapeMismatch { expected: grid.n_levels(), got: psi.len() });
        }
        let tail = psi[psi.len() - 1].abs();
        if !(tail < DECAY_TOL) {
            return Err(Error::NotDecayed(tail));
        }
    }
    if let Some(p) = poles.iter().find(|p| p.re > 0.0) {
        return Err(Error::InvalidInput(format!("pole {p} has positive real part")));
    }
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let (q1, q2) = (sq(psi1), sq(psi2));
    Ok(poles
        .iter()
        .map(|&p| {
            let l1 = laplace_transform(psi1, grid, p);
            let l2 = laplace_transform(psi2, grid, p);
            let m1 = laplace_transform(&q1, grid, p);
            let m2 = laplace_transform(&q2, grid, p);
            let p2 = p * p;
            let det = p2 * p2 * (l1 * m2 - l2 * m1);
            (p, det.norm())
        })
        .collect())
}
