//! Regularized frozen Newton iteration
//!
//! ```text
//! x_{n+1} = x_n + (KᵀWK + PᵀP + α_n I)⁻¹ (KᵀW(h - F(x_n)) - PᵀP x_n + α_n (x_0 - x_n))
//! ```
//!
//! with `α_n = α_0 θⁿ`, the `κ` block clamped to be nonnegative after every
//! step and a discrepancy stopping rule. `K` is assembled once at the
//! starting point; `F` is the full nonlinear forward map.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{fmt_num, observe, run, ModelParams, Trace};
use crate::fracquad::TimeGrid;
use crate::jacobian::{split_coefficients, JacobianMatrix};
use crate::mesh::{CoeffField, Mesh1D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub alpha0: f64,
    pub theta: f64,
    pub max_iters: usize,
    pub penalty_weight: f64,
    pub tau_discrepancy: f64,
    pub noise_level_delta: f64,
    /// Starting point, `(κ, ς)` on the free nodes.
    pub x0: Vec<f64>,
}

impl NewtonConfig {
    /// Defaults with the start `κ₀ = 0`, `ς₀ = 1`.
    pub fn new(mesh: &Mesh1D) -> Self {
        let nf = mesh.n_free();
        let mut x0 = vec![0.0; 2 * nf];
        x0[nf..].fill(1.0);
        Self {
            alpha0: 1e-4,
            theta: 0.5,
            max_iters: 20,
            penalty_weight: 1e-7,
            tau_discrepancy: 1.5,
            noise_level_delta: 0.0,
            x0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad(format!("alpha0 must be positive, got {}", self.alpha0));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta must lie in (0, 1), got {}", self.theta));
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return bad(format!("penalty_weight must be nonnegative, got {}", self.penalty_weight));
        }
        if !(self.tau_discrepancy > 1.0 && self.tau_discrepancy.is_finite()) {
            return bad(format!("tau_discrepancy must exceed 1, got {}", self.tau_discrepancy));
        }
        if !(self.noise_level_delta >= 0.0 && self.noise_level_delta.is_finite()) {
            return bad(format!("noise_level_delta must be nonnegative, got {}", self.noise_level_delta));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0 has non-finite entries".into());
        }
        Ok(())
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alpha0 * self.theta.powi(n as i32)
    }
}

/// Smoothness penalty: second differences over interior free indices of
/// each block, scaled by `weight / h²`.
pub fn build_penalty(mesh: &Mesh1D, weight: f64) -> DMatrix<f64> {
    let nf = mesh.n_free();
    let per_block = nf.saturating_sub(2);
    let mut p = DMatrix::zeros(2 * per_block, 2 * nf);
    if weight == 0.0 {
        return p;
    }
    let s = weight / (mesh.h() * mesh.h());
    for block in 0..2 {
        for r in 0..per_block {
            let row = block * per_block + r;
            let col = block * nf + r;
            p[(row, col)] = s;
            p[(row, col + 1)] = -2.0 * s;
            p[(row, col + 2)] = s;
        }
    }
    p
}

/// Linear-algebra part of one step: returns the unprojected `x_{n+1}`.
pub fn newton_update(
    x: &[f64],
    x0: &[f64],
    kmat: &JacobianMatrix,
    residual: &Trace,
    normal: &DMatrix<f64>,
    penalty_gram: &DMatrix<f64>,
    alpha_n: f64,
) -> Result<Vec<f64>> {
    let n = kmat.n_cols();
    if x.len() != n || x0.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: x.len() });
    }
    let xv = DVector::from_column_slice(x);
    let mut rhs = DVector::from_vec(kmat.adjoint_apply(residual)?);
    rhs -= penalty_gram * &xv;
    rhs += (DVector::from_column_slice(x0) - &xv) * alpha_n;
    let mut lhs = normal + penalty_gram;
    for i in 0..n {
        lhs[(i, i)] += alpha_n;
    }
    let step = Cholesky::new(lhs).ok_or(Error::CholeskyFailed)?.solve(&rhs);
    let next: Vec<f64> = (xv + step).iter().copied().collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Newton iterate".into()));
    }
    Ok(next)
}

/// Clamp the `κ` block (first half) at zero.
pub fn project_kappa(x: &mut [f64]) {
    let nf = x.len() / 2;
    for v in &mut x[..nf] {
        *v = v.max(0.0);
    }
}

/// Everything the iteration needs besides its configuration.
pub struct InverseProblem<'a> {
    pub mesh: &'a Mesh1D,
    pub grid: &'a TimeGrid,
    /// Supplies `α`, `b` and the source; its coefficients are ignored.
    pub template: &'a ModelParams,
    pub kmat: &'a JacobianMatrix,
    pub h_obs: &'a Trace,
    pub truth: Option<(&'a CoeffField, &'a CoeffField)>,
}

impl InverseProblem<'_> {
    /// `F(x)` for a stacked free-node iterate. Node 0 keeps the template's
    /// nodal values.
    pub fn forward(&self, x: &[f64]) -> Result<Trace> {
        let (mut dk, mut ds) = split_coefficients(self.mesh, x)?;
        dk.values_mut()[0] = self.template.kappa.values()[0];
        ds.values_mut()[0] = self.template.slowness.values()[0];
        let mut p = self.template.clone();
        p.kappa = dk;
        p.slowness = ds;
        let h = run(&p, self.mesh, self.grid)?;
        observe(&h, self.mesh, self.kmat.locations())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonState {
    /// `x_0, x_1, …, x_final`.
    pub iterates: Vec<Vec<f64>>,
    /// `‖h - F(x_n)‖_Y` for every stored iterate.
    pub residual_norms: Vec<f64>,
    pub alphas: Vec<f64>,
    pub err_kappa: Option<Vec<f64>>,
    pub err_slowness: Option<Vec<f64>>,
    pub discrepancy_met: bool,
}

impl NewtonState {
    pub fn n_steps(&self) -> usize {
        self.iterates.len() - 1
    }

    pub fn last(&self) -> &[f64] {
        self.iterates.last().expect("at least the start is stored")
    }

    pub fn write_history<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let truth = self.err_kappa.is_some();
        let mut header = vec!["n", "alpha_n", "residual_norm"];
        if truth {
            header.extend(["err_kappa_L2", "err_slowness_L2"]);
        }
        w.write_record(&header)?;
        for n in 0..self.iterates.len() {
            let mut rec = vec![n.to_string(), fmt_num(self.alphas[n]), fmt_num(self.residual_norms[n])];
            if let (Some(ek), Some(es)) = (&self.err_kappa, &self.err_slowness) {
                rec.push(fmt_num(ek[n]));
                rec.push(fmt_num(es[n]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `‖f - g‖ / ‖g‖` in `L²(a, b)` for nodal fields, by the trapezoid rule on
/// the nodes inside `[a, b]`.
pub fn relative_l2_error(mesh: &Mesh1D, f: &[f64], g: &[f64], a: f64, b: f64) -> f64 {
    let x = mesh.nodes();
    let idx: Vec<usize> = (0..x.len()).filter(|&i| x[i] >= a - 1e-12 && x[i] <= b + 1e-12).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for w in idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        let hh = 0.5 * (x[j] - x[i]);
        num += hh * ((f[i] - g[i]).powi(2) + (f[j] - g[j]).powi(2));
        den += hh * (g[i].powi(2) + g[j].powi(2));
    }
    (num / den).sqrt()
}

/// Full nodal field (`κ`, `ς`) of a stacked iterate, with node 0 taken from
/// `anchor`.
pub fn iterate_fields(mesh: &Mesh1D, x: &[f64], anchor: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    let (k, s) = split_coefficients(mesh, x)?;
    let mut k = k.into_inner();
    let mut s = s.into_inner();
    k[0] = anchor.0;
    s[0] = anchor.1;
    Ok((k, s))
}

pub fn run_newton(cfg: &NewtonConfig, problem: &InverseProblem) -> Result<NewtonState> {
    cfg.validate()?;
    let kmat = problem.kmat;
    if cfg.x0.len() != kmat.n_cols() || kmat.n_free() != problem.mesh.n_free() {
        return Err(Error::ShapeMismatch {
            expected: kmat.n_cols(),
            got: cfg.x0.len(),
        });
    }
    let anchor = (problem.template.kappa.values()[0], problem.template.slowness.values()[0]);
    let normal = kmat.normal_matrix();
    let p = build_penalty(problem.mesh, cfg.penalty_weight);
    let penalty_gram = p.tr_mul(&p);
    let target = cfg.tau_discrepancy * cfg.noise_level_delta;

    let errors = |x: &[f64]| -> Result<Option<(f64, f64)>> {
        let Some((kt, st)) = problem.truth else {
            return Ok(None);
        };
        let (k, s) = iterate_fields(problem.mesh, x, anchor)?;
        Ok(Some((
            relative_l2_error(problem.mesh, &k, kt.values(), 0.0, 1.0),
            relative_l2_error(problem.mesh, &s, st.values(), 0.0, 1.0),
        )))
    };

    let mut state = NewtonState {
        iterates: Vec::new(),
        residual_norms: Vec::new(),
        alphas: Vec::new(),
        err_kappa: problem.truth.map(|_| Vec::new()),
        err_slowness: problem.truth.map(|_| Vec::new()),
        discrepancy_met: false,
    };
    let mut x = cfg.x0.clone();
    for n in 0..=cfg.max_iters {
        let residual = problem.h_obs.sub(&problem.forward(&x)?)?;
        let res_norm = residual.norm(problem.grid);
        if !res_norm.is_finite() {
            return Err(Error::NonFinite(format!("residual at iterate {n}")));
        }
        state.residual_norms.push(res_norm);
        state.alphas.push(cfg.alpha(n));
        if let Some((ek, es)) = errors(&x)? {
            state.err_kappa.as_mut().expect("truth given").push(ek);
            state.err_slowness.as_mut().expect("truth given").push(es);
        }
        state.iterates.push(x.clone());
        if cfg.noise_level_delta > 0.0 && res_norm <= target {
            state.discrepancy_met = true;
            break;
        }
        if n == cfg.max_iters {
            break;
        }
        x = newton_update(&x, &cfg.x0, kmat, &residual, &normal, &penalty_gram, cfg.alpha(n))?;
        project_kappa(&mut x);
    }
    Ok(state)
}
