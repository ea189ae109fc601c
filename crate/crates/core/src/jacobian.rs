//! Linearized forward problem and the frozen Jacobian.
//!
//! The linearized stepper is the exact derivative of the discrete forward
//! stepper in [`crate::forward`], so Taylor remainders of the discrete map
//! are second order in the perturbation size.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{fmt_num, observe, Integrator, ModelParams, StateHistory, Trace};
use crate::fracquad::TimeGrid;
use crate::mesh::{weighted_mass_apply_into, CoeffField, Mesh1D};

const MAX_JACOBI_SWEEPS: usize = 60;

/// Solve for `δu` given the background state `u` of `params`:
///
/// ```text
/// (ς - 2κu) δu_t - b Δ I^{1-α} δu - Δ I¹ δu = -(δς - 2δκ u - 2κ δu) u_t
/// ```
pub fn solve_linearized(
    background: &StateHistory,
    dkappa: &CoeffField,
    dslow: &CoeffField,
    params: &ModelParams,
    mesh: &Mesh1D,
    grid: &TimeGrid,
) -> Result<StateHistory> {
    params.validate(mesh, grid)?;
    let nn = mesh.n_nodes();
    if background.n_nodes() != nn || background.n_levels() != grid.n_levels() {
        return Err(Error::ShapeMismatch {
            expected: nn * grid.n_levels(),
            got: background.n_nodes() * background.n_levels(),
        });
    }
    for f in [dkappa, dslow] {
        if f.len() != nn {
            return Err(Error::ShapeMismatch {
                expected: nn,
                got: f.len(),
            });
        }
    }
    let dt = grid.dt();
    let kappa = params.kappa.values();
    let slow = params.slowness.values();
    let dk = dkappa.values();
    let ds = dslow.values();
    let kappa_is_zero = kappa.iter().all(|&k| k == 0.0);

    let mut integ = Integrator::new(mesh, grid, params.alpha, params.b_damp)?;
    let mut coeff = vec![0.0; nn];
    let mut dcoeff = vec![0.0; nn];
    let mut du_bg = vec![0.0; nn];
    let mut forcing = vec![0.0; mesh.n_free()];

    for n in 0..grid.n_steps() {
        let u_n = background.level(n);
        let u_next = background.level(n + 1);
        let u_prev = if n == 0 { u_n } else { background.level(n - 1) };
        let dubar = integ.extrapolated_full();
        for i in 0..nn {
            let ubar = if n == 0 { u_n[i] } else { 1.5 * u_n[i] - 0.5 * u_prev[i] };
            coeff[i] = slow[i] - 2.0 * kappa[i] * ubar;
            dcoeff[i] = ds[i] - 2.0 * dk[i] * ubar;
            if !kappa_is_zero {
                dcoeff[i] -= 2.0 * kappa[i] * dubar[i];
            }
            du_bg[i] = (u_next[i] - u_n[i]) / dt;
        }
        weighted_mass_apply_into(mesh, &dcoeff, &du_bg, &mut forcing);
        forcing.iter_mut().for_each(|f| *f = -*f);
        integ.advance(&coeff, &forcing).map_err(|e| Error::StepFailed {
            step: n + 1,
            source: Box::new(e),
        })?;
    }
    Ok(integ.into_history(f64::NAN))
}

/// Dense frozen Jacobian. Columns are ordered as all `κ` hat functions of the
/// free nodes (ascending) followed by all `ς` hat functions; rows follow the
/// flattened trace layout `n * |Σ| + s`.
#[derive(Debug, Clone)]
pub struct JacobianMatrix {
    pub k: DMatrix<f64>,
    /// Trapezoid weight of the time sample of every row.
    pub row_weights: Vec<f64>,
    locations: Vec<f64>,
    n_free: usize,
}

impl JacobianMatrix {
    /// Wrap an explicit matrix; `n_free` is the number of columns per block.
    pub fn from_parts(k: DMatrix<f64>, row_weights: Vec<f64>, locations: Vec<f64>) -> Result<Self> {
        if row_weights.len() != k.nrows() || locations.is_empty() || k.nrows() % locations.len() != 0 {
            return Err(Error::ShapeMismatch {
                expected: k.nrows(),
                got: row_weights.len(),
            });
        }
        let n_free = k.ncols() / 2;
        Ok(Self {
            k,
            row_weights,
            locations,
            n_free,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.k.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.k.ncols()
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    /// `K p` as a trace.
    pub fn apply(&self, p: &[f64]) -> Result<Trace> {
        if p.len() != self.n_cols() {
            return Err(Error::ShapeMismatch {
                expected: self.n_cols(),
                got: p.len(),
            });
        }
        let y = &self.k * DVector::from_column_slice(p);
        Trace::new(self.locations.clone(), y.as_slice().to_vec())
    }

    /// Adjoint with respect to the weighted trace inner product and the
    /// Euclidean coefficient inner product: `Kᵀ W r`.
    pub fn adjoint_apply(&self, residual: &Trace) -> Result<Vec<f64>> {
        let r = residual.as_slice();
        if r.len() != self.n_rows() || residual.locations().len() != self.locations.len() {
            return Err(Error::ShapeMismatch {
                expected: self.n_rows(),
                got: r.len(),
            });
        }
        let wr = DVector::from_iterator(
            r.len(),
            r.iter().zip(&self.row_weights).map(|(a, w)| a * w),
        );
        Ok(self.k.tr_mul(&wr).as_slice().to_vec())
    }

    /// `Kᵀ W K`.
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        let kw = self.weighted();
        kw.tr_mul(&kw)
    }

    /// `W^{1/2} K`.
    pub fn weighted(&self) -> DMatrix<f64> {
        let mut kw = self.k.clone();
        for (i, w) in self.row_weights.iter().enumerate() {
            let s = w.sqrt();
            kw.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        kw
    }
}

/// Stack `(δκ, δς)` free-node vectors into full nodal fields (zero at the
/// Dirichlet node).
pub fn split_coefficients(mesh: &Mesh1D, p: &[f64]) -> Result<(CoeffField, CoeffField)> {
    let nf = mesh.n_free();
    if p.len() != 2 * nf {
        return Err(Error::ShapeMismatch {
            expected: 2 * nf,
            got: p.len(),
        });
    }
    Ok((
        CoeffField::new(mesh, mesh.extend(&p[..nf]))?,
        CoeffField::new(mesh, mesh.extend(&p[nf..]))?,
    ))
}

/// Assemble the Jacobian column by column; columns are computed in parallel
/// and the result does not depend on the schedule.
pub fn assemble(
    background: &StateHistory,
    params: &ModelParams,
    mesh: &Mesh1D,
    grid: &TimeGrid,
    sigma: &[f64],
) -> Result<JacobianMatrix> {
    let nf = mesh.n_free();
    let n_cols = 2 * nf;
    for &x in sigma {
        mesh.node_index(x)?;
    }
    let columns: Vec<Vec<f64>> = (0..n_cols)
        .into_par_iter()
        .map(|j| {
            let mut p = vec![0.0; n_cols];
            p[j] = 1.0;
            let (dk, ds) = split_coefficients(mesh, &p)?;
            let du = solve_linearized(background, &dk, &ds, params, mesh, grid)?;
            Ok(observe(&du, mesh, sigma)?.as_slice().to_vec())
        })
        .collect::<Result<_>>()?;
    let n_rows = grid.n_levels() * sigma.len();
    let mut k = DMatrix::zeros(n_rows, n_cols);
    for (j, col) in columns.iter().enumerate() {
        k.column_mut(j).copy_from_slice(col);
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Jacobian entry".into()));
    }
    let tw = grid.trapezoid_weights();
    let row_weights = (0..n_rows).map(|r| tw[r / sigma.len()]).collect();
    Ok(JacobianMatrix {
        k,
        row_weights,
        locations: sigma.to_vec(),
        n_free: nf,
    })
}

#[derive(Debug, Clone)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl SvdResult {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "sigma_k"])?;
        for (k, s) in self.singular_values.iter().enumerate() {
            w.write_record([(k + 1).to_string(), fmt_num(*s)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// SVD of the row-weighted Jacobian `W^{1/2} K`.
pub fn svd(kmat: &JacobianMatrix) -> Result<SvdResult> {
    svd_dense(&kmat.weighted())
}

/// Thin SVD by Householder QR followed by one-sided Jacobi on the triangular
/// factor. Requires `nrows >= ncols`.
pub fn svd_dense(a: &DMatrix<f64>) -> Result<SvdResult> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::InvalidInput(format!("svd needs rows >= cols, got {m}x{n}")));
    }
    let qr = a.clone().qr();
    let q = qr.q();
    let mut w = qr.r();
    let mut v = DMatrix::<f64>::identity(n, n);

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for r in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = w.column(p);
                    let cr = w.column(r);
                    (cp.norm_squared(), cr.norm_squared(), cp.dot(&cr))
                };
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, r, c, s);
                rotate_columns(&mut v, p, r, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            sweeps: MAX_JACOBI_SWEEPS,
        });
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u_small = DMatrix::zeros(n, n);
    let mut v_sorted = DMatrix::zeros(n, n);
    let mut sv = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sv.push(s);
        if s > 0.0 {
            u_small.set_column(dst, &(w.column(src) / s));
        } else {
            u_small[(dst, dst)] = 1.0;
        }
        v_sorted.set_column(dst, &v.column(src));
    }
    Ok(SvdResult {
        singular_values: sv,
        u: q * u_small,
        v: v_sorted,
    })
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, r: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let a = m[(i, p)];
        let b = m[(i, r)];
        m[(i, p)] = c * a - s * b;
        m[(i, r)] = s * a + c * b;
    }
}
