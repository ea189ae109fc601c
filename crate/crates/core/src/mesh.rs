//! Uniform piecewise-linear (hat function) discretization of the unit interval.
//!
//! The left endpoint carries a homogeneous Dirichlet condition and is
//! eliminated from every assembled operator, so all matrices act on the free
//! nodes `1..=n_cells`. The right endpoint carries a natural (zero flux)
//! Neumann condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when matching physical coordinates to node positions.
const NODE_MATCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    n_cells: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Mesh1D {
    /// Uniform mesh of `[0, 1]`. The cell count must be a positive multiple of
    /// ten so that `x = 0.1` is a node.
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells == 0 || n_cells % 10 != 0 {
            return Err(Error::InvalidInput(format!(
                "n_cells must be a positive multiple of 10, got {n_cells}"
            )));
        }
        let h = 1.0 / n_cells as f64;
        let nodes = (0..=n_cells).map(|i| i as f64 / n_cells as f64).collect();
        Ok(Self { n_cells, h, nodes })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    /// Number of unknowns after eliminating the Dirichlet node.
    pub fn n_free(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of the node at coordinate `x`, or an error when `x` is not a node.
    pub fn node_index(&self, x: f64) -> Result<usize> {
        let pos = x * self.n_cells as f64;
        let i = pos.round();
        if !(0.0..=self.n_cells as f64).contains(&i) || (pos - i).abs() > NODE_MATCH_TOL {
            return Err(Error::NotANode(x));
        }
        Ok(i as usize)
    }

    /// Restrict a full nodal vector to the free nodes.
    pub fn restrict<'a>(&self, full: &'a [f64]) -> &'a [f64] {
        &full[1..]
    }

    /// Extend a free-node vector by the (zero) Dirichlet value.
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(free.len() + 1);
        full.push(0.0);
        full.extend_from_slice(free);
        full
    }
}

/// Nodal values of a coefficient in the hat basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoeffField(Vec<f64>);

impl CoeffField {
    pub fn new(mesh: &Mesh1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::ShapeMismatch {
                expected: mesh.n_nodes(),
                got: values.len(),
            });
        }
        Ok(Self(values))
    }

    pub fn constant(mesh: &Mesh1D, value: f64) -> Self {
        Self(vec![value; mesh.n_nodes()])
    }

    pub fn from_fn(mesh: &Mesh1D, f: impl Fn(f64) -> f64) -> Self {
        Self(mesh.nodes().iter().map(|&x| f(x)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Clamp negative entries to zero.
    pub fn project_nonnegative(&mut self) {
        for v in &mut self.0 {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            sub: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            sup: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        m.diag.iter_mut().for_each(|d| *d = 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.sub[j]
        } else if i + 1 == j {
            self.sup[i]
        } else {
            0.0
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// `self * a + other * b`.
    pub fn linear_combination(&self, a: f64, other: &BandMatrix, b: f64) -> BandMatrix {
        assert_eq!(self.dim(), other.dim());
        let comb = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        BandMatrix {
            sub: comb(&self.sub, &other.sub),
            diag: comb(&self.diag, &other.diag),
            sup: comb(&self.sup, &other.sup),
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.sub.iter().zip(&self.sup).all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Pivots of the LDLᵀ factorization of a symmetric tridiagonal matrix.
    pub fn ldl_pivots(&self) -> Vec<f64> {
        let n = self.dim();
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let p = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.sub[i - 1] * self.sup[i - 1] / d[i - 1]
            };
            d.push(p);
        }
        d
    }

    pub fn is_positive_definite(&self) -> bool {
        self.ldl_pivots().iter().all(|&p| p > 0.0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// Stiffness matrix `∫ φ_i' φ_j'` over the free nodes.
pub fn assemble_stiffness(mesh: &Mesh1D) -> BandMatrix {
    let n = mesh.n_free();
    let inv_h = 1.0 / mesh.h();
    let mut a = BandMatrix::zeros(n);
    // Element e spans nodes (e, e+1); free index = node - 1.
    for e in 0..mesh.n_cells() {
        let (left, right) = (e, e + 1);
        if left >= 1 {
            a.diag[left - 1] += inv_h;
            a.sup[left - 1] -= inv_h;
            a.sub[left - 1] -= inv_h;
        }
        a.diag[right - 1] += inv_h;
    }
    a
}

fn check_weight(mesh: &Mesh1D, w: &[f64]) -> Result<()> {
    if w.len() != mesh.n_nodes() {
        return Err(Error::ShapeMismatch {
            expected: mesh.n_nodes(),
            got: w.len(),
        });
    }
    if let Some(i) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("mass weight at node {i}")));
    }
    Ok(())
}

/// Element mass entries for a linear weight with end values `(wa, wb)`:
/// `(∫ w φa φa, ∫ w φa φb, ∫ w φb φb)`.
#[inline]
fn element_mass(h: f64, wa: f64, wb: f64) -> (f64, f64, f64) {
    let s = h / 12.0;
    (s * (3.0 * wa + wb), s * (wa + wb), s * (wa + 3.0 * wb))
}

/// Mass matrix `∫ w φ_i φ_j` with `w` interpolated linearly between nodes.
pub fn assemble_weighted_mass(mesh: &Mesh1D, w: &CoeffField) -> Result<BandMatrix> {
    assemble_weighted_mass_raw(mesh, w.values())
}

pub(crate) fn assemble_weighted_mass_raw(mesh: &Mesh1D, w: &[f64]) -> Result<BandMatrix> {
    check_weight(mesh, w)?;
    let mut m = BandMatrix::zeros(mesh.n_free());
    let h = mesh.h();
    for e in 0..mesh.n_cells() {
        let (aa, ab, bb) = element_mass(h, w[e], w[e + 1]);
        if e >= 1 {
            m.diag[e - 1] += aa;
            m.sup[e - 1] += ab;
            m.sub[e - 1] += ab;
        }
        m.diag[e] += bb;
    }
    Ok(m)
}

/// Free-node rows of the weighted mass matrix applied to a full nodal vector.
///
/// Unlike [`assemble_weighted_mass`] this keeps the coupling to the value at
/// the Dirichlet node, which is what a load vector needs.
pub fn weighted_mass_apply(mesh: &Mesh1D, w: &[f64], v_full: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_free()];
    weighted_mass_apply_into(mesh, w, v_full, &mut out);
    out
}

pub(crate) fn weighted_mass_apply_into(mesh: &Mesh1D, w: &[f64], v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), mesh.n_nodes());
    debug_assert_eq!(v.len(), mesh.n_nodes());
    out.iter_mut().for_each(|o| *o = 0.0);
    let h = mesh.h();
    for e in 0..mesh.n_cells() {
        let (aa, ab, bb) = element_mass(h, w[e], w[e + 1]);
        if e >= 1 {
            out[e - 1] += aa * v[e] + ab * v[e + 1];
        }
        out[e] += ab * v[e] + bb * v[e + 1];
    }
}

/// Thomas algorithm. Fails when a pivot drops below `1e-14 · max|diag|`.
pub fn solve_tridiagonal(m: &BandMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = m.dim();
    if rhs.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = m.diag.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
    let tol = 1e-14 * scale;
    let mut c_prime = vec![0.0; n];
    let mut x = vec![0.0; n];

    let mut pivot = m.diag[0];
    if pivot.abs() <= tol || pivot == 0.0 {
        return Err(Error::SingularPivot { row: 0, pivot });
    }
    if n > 1 {
        c_prime[0] = m.sup[0] / pivot;
    }
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = m.diag[i] - m.sub[i - 1] * c_prime[i - 1];
        if pivot.abs() <= tol || pivot == 0.0 {
            return Err(Error::SingularPivot { row: i, pivot });
        }
        if i + 1 < n {
            c_prime[i] = m.sup[i] / pivot;
        }
        x[i] = (rhs[i] - m.sub[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c_prime[i] * x[i + 1];
    }
    Ok(x)
}
