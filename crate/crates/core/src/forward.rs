//! Time stepping of the once time-integrated Westervelt system
//!
//! ```text
//! (ς - 2κu) u_t - b Δ I^{1-α} u - Δ I¹ u = I¹ r      in (0,1) × (0,T)
//! u(0,t) = 0,  u_x(1,t) = 0,  u(x,0) = 0
//! ```
//!
//! Every equation is balanced at the half step `t_{n+1/2}` (Crank–Nicolson):
//! the two integral terms are averaged between `t_n` and `t_{n+1}`, the
//! newest sample enters implicitly through the quadrature's last weight, and
//! the coefficient `ς - 2κu` is frozen at the extrapolated midpoint state
//! `(3u^n - u^{n-1})/2`. One symmetric tridiagonal solve per step.

use crate::error::{Error, Result};
use crate::fracquad::{FracWeights, TimeGrid};
use crate::mesh::{
    assemble_stiffness, assemble_weighted_mass_raw, solve_tridiagonal, weighted_mass_apply,
    weighted_mass_apply_into, BandMatrix, CoeffField, Mesh1D,
};

/// Abort threshold for `ς - 2κu` relative to `min ς`.
pub const DEGENERACY_FRACTION: f64 = 0.1;

/// Right-hand side `r̃` sampled at every node and time level.
#[derive(Debug, Clone, PartialEq)]
pub enum Excitation {
    /// `r̃(x_i, t_n) = spatial[i] · temporal[n]`.
    Separable { spatial: Vec<f64>, temporal: Vec<f64> },
    /// Row-major samples, `n_levels × n_nodes`.
    Direct { n_nodes: usize, samples: Vec<f64> },
}

impl Excitation {
    pub fn zero(mesh: &Mesh1D, grid: &TimeGrid) -> Self {
        Excitation::Separable {
            spatial: vec![0.0; mesh.n_nodes()],
            temporal: vec![0.0; grid.n_levels()],
        }
    }

    pub fn from_fn(mesh: &Mesh1D, grid: &TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut samples = Vec::with_capacity(mesh.n_nodes() * grid.n_levels());
        for t in grid.times() {
            samples.extend(mesh.nodes().iter().map(|&x| f(x, t)));
        }
        Excitation::Direct {
            n_nodes: mesh.n_nodes(),
            samples,
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Excitation::Separable { spatial, .. } => spatial.len(),
            Excitation::Direct { n_nodes, .. } => *n_nodes,
        }
    }

    pub fn n_levels(&self) -> usize {
        match self {
            Excitation::Separable { temporal, .. } => temporal.len(),
            Excitation::Direct { n_nodes, samples } => samples.len() / n_nodes.max(&1),
        }
    }

    /// Nodal values at level `n`.
    pub fn level_into(&self, n: usize, out: &mut [f64]) {
        match self {
            Excitation::Separable { spatial, temporal } => {
                let s = temporal[n];
                for (o, p) in out.iter_mut().zip(spatial) {
                    *o = p * s;
                }
            }
            Excitation::Direct { n_nodes, samples } => {
                out.copy_from_slice(&samples[n * n_nodes..(n + 1) * n_nodes]);
            }
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        match self {
            Excitation::Separable { spatial, temporal } => Excitation::Separable {
                spatial: spatial.iter().map(|v| a * v).collect(),
                temporal: temporal.clone(),
            },
            Excitation::Direct { n_nodes, samples } => Excitation::Direct {
                n_nodes: *n_nodes,
                samples: samples.iter().map(|v| a * v).collect(),
            },
        }
    }

    /// Pointwise sum, materialized as direct samples.
    pub fn sum(&self, other: &Excitation) -> Result<Self> {
        if self.n_nodes() != other.n_nodes() || self.n_levels() != other.n_levels() {
            return Err(Error::ShapeMismatch {
                expected: self.n_nodes() * self.n_levels(),
                got: other.n_nodes() * other.n_levels(),
            });
        }
        let n_nodes = self.n_nodes();
        let mut a = vec![0.0; n_nodes];
        let mut b = vec![0.0; n_nodes];
        let mut samples = Vec::with_capacity(n_nodes * self.n_levels());
        for n in 0..self.n_levels() {
            self.level_into(n, &mut a);
            other.level_into(n, &mut b);
            samples.extend(a.iter().zip(&b).map(|(p, q)| p + q));
        }
        Ok(Excitation::Direct { n_nodes, samples })
    }
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Fractional order of the damping, in (0,1).
    pub alpha: f64,
    /// Damping coefficient `b̃ >= 0`.
    pub b_damp: f64,
    pub kappa: CoeffField,
    pub slowness: CoeffField,
    pub source: Excitation,
}

impl ModelParams {
    pub fn validate(&self, mesh: &Mesh1D, grid: &TimeGrid) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.b_damp >= 0.0 && self.b_damp.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "damping must be nonnegative, got {}",
                self.b_damp
            )));
        }
        for (name, field) in [("kappa", &self.kappa), ("slowness", &self.slowness)] {
            if field.len() != mesh.n_nodes() {
                return Err(Error::ShapeMismatch {
                    expected: mesh.n_nodes(),
                    got: field.len(),
                });
            }
            if field.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{name} field")));
            }
        }
        if self.slowness.min() <= 0.0 {
            return Err(Error::InvalidInput("slowness must be positive".into()));
        }
        if self.source.n_nodes() != mesh.n_nodes() || self.source.n_levels() != grid.n_levels() {
            return Err(Error::ShapeMismatch {
                expected: mesh.n_nodes() * grid.n_levels(),
                got: self.source.n_nodes() * self.source.n_levels(),
            });
        }
        Ok(())
    }

    /// Same model with a different excitation.
    pub fn with_source(&self, source: Excitation) -> Self {
        Self {
            source,
            ..self.clone()
        }
    }
}

/// Full space–time solution, including the Dirichlet node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistory {
    n_nodes: usize,
    dt: f64,
    u: Vec<f64>,
    min_coefficient: f64,
}

impl StateHistory {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_levels(&self) -> usize {
        self.u.len() / self.n_nodes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn level(&self, n: usize) -> &[f64] {
        &self.u[n * self.n_nodes..(n + 1) * self.n_nodes]
    }

    pub fn value(&self, n: usize, i: usize) -> f64 {
        self.u[n * self.n_nodes + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    /// Smallest value of `ς - 2κū` met while stepping.
    pub fn min_coefficient(&self) -> f64 {
        self.min_coefficient
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `u_t` at level `n`: central difference, one-sided at the ends.
    pub fn velocity(&self, n: usize) -> Vec<f64> {
        let last = self.n_levels() - 1;
        let (a, b, scale) = if n == 0 {
            (1, 0, 1.0 / self.dt)
        } else if n == last {
            (last, last - 1, 1.0 / self.dt)
        } else {
            (n + 1, n - 1, 0.5 / self.dt)
        };
        self.level(a)
            .iter()
            .zip(self.level(b))
            .map(|(p, q)| (p - q) * scale)
            .collect()
    }

    /// CSV dump with header `t,x,u`, row-major over `(n, i)`.
    pub fn write_csv<W: std::io::Write>(&self, mesh: &Mesh1D, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "u"])?;
        for n in 0..self.n_levels() {
            let t = n as f64 * self.dt;
            for (i, &x) in mesh.nodes().iter().enumerate() {
                w.write_record([fmt_num(t), fmt_num(x), fmt_num(self.value(n, i))])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fifteen significant digits, the format of every numeric CSV field.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.14e}")
}

/// Observations at a set of nodes, one column per location.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    locations: Vec<f64>,
    samples: Vec<f64>,
}

impl Trace {
    pub fn new(locations: Vec<f64>, samples: Vec<f64>) -> Result<Self> {
        if locations.is_empty() || samples.len() % locations.len() != 0 {
            return Err(Error::ShapeMismatch {
                expected: locations.len(),
                got: samples.len(),
            });
        }
        Ok(Self { locations, samples })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            locations: self.locations.clone(),
            samples: vec![0.0; self.samples.len()],
        }
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn n_levels(&self) -> usize {
        self.samples.len() / self.locations.len()
    }

    pub fn get(&self, n: usize, s: usize) -> f64 {
        self.samples[n * self.locations.len() + s]
    }

    pub fn column(&self, s: usize) -> Vec<f64> {
        (0..self.n_levels()).map(|n| self.get(n, s)).collect()
    }

    /// Samples flattened as `n * |Σ| + s`.
    pub fn as_slice(&self) -> &[f64] {
        &self.samples
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn sub(&self, other: &Trace) -> Result<Trace> {
        self.check_same_shape(other)?;
        Ok(Trace {
            locations: self.locations.clone(),
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Trace) -> Result<Trace> {
        self.check_same_shape(other)?;
        Ok(Trace {
            locations: self.locations.clone(),
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scaled(&self, a: f64) -> Trace {
        Trace {
            locations: self.locations.clone(),
            samples: self.samples.iter().map(|v| a * v).collect(),
        }
    }

    fn check_same_shape(&self, other: &Trace) -> Result<()> {
        if self.samples.len() != other.samples.len() || self.locations.len() != other.locations.len()
        {
            return Err(Error::ShapeMismatch {
                expected: self.samples.len(),
                got: other.samples.len(),
            });
        }
        Ok(())
    }

    /// Per-sample weights realizing the `L²(0,T; ℓ²(Σ))` inner product.
    pub fn row_weights(&self, grid: &TimeGrid) -> Vec<f64> {
        let tw = grid.trapezoid_weights();
        let m = self.locations.len();
        (0..self.samples.len()).map(|r| tw[r / m]).collect()
    }

    pub fn inner(&self, other: &Trace, grid: &TimeGrid) -> Result<f64> {
        self.check_same_shape(other)?;
        if self.n_levels() != grid.n_levels() {
            return Err(Error::ShapeMismatch {
                expected: grid.n_levels(),
                got: self.n_levels(),
            });
        }
        let w = self.row_weights(grid);
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .zip(&w)
            .map(|((a, b), w)| w * a * b)
            .sum())
    }

    pub fn norm(&self, grid: &TimeGrid) -> f64 {
        self.inner(self, grid).map(f64::sqrt).unwrap_or(f64::NAN)
    }

    /// Keep every `factor`-th time level (restriction from a refined grid).
    pub fn subsample(&self, factor: usize) -> Trace {
        let m = self.locations.len();
        let samples = (0..self.n_levels())
            .step_by(factor)
            .flat_map(|n| self.samples[n * m..(n + 1) * m].to_vec())
            .collect();
        Trace {
            locations: self.locations.clone(),
            samples,
        }
    }
}

/// Crank–Nicolson integrator for
/// `M_c u_t + b A I^β u + A I¹ u = f`, shared by the nonlinear forward problem
/// and its linearization. Holds free-node states only.
pub(crate) struct Integrator<'a> {
    mesh: &'a Mesh1D,
    dt: f64,
    b_damp: f64,
    stiffness: BandMatrix,
    frac: Option<FracWeights>,
    /// Free-node states, row `k` is `u^k`.
    states: Vec<f64>,
    frac_prev: Vec<f64>,
    int_prev: Vec<f64>,
    level: usize,
    n_steps: usize,
    hist_frac: Vec<f64>,
    hist_int: Vec<f64>,
    work: Vec<f64>,
    rhs: Vec<f64>,
    full: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub(crate) fn new(mesh: &'a Mesh1D, grid: &TimeGrid, alpha: f64, b_damp: f64) -> Result<Self> {
        let n = mesh.n_free();
        let frac = if b_damp > 0.0 {
            Some(FracWeights::new(grid, 1.0 - alpha)?)
        } else {
            None
        };
        let mut states = Vec::with_capacity(n * grid.n_levels());
        states.resize(n, 0.0);
        Ok(Self {
            mesh,
            dt: grid.dt(),
            b_damp,
            stiffness: assemble_stiffness(mesh),
            frac,
            states,
            frac_prev: vec![0.0; n],
            int_prev: vec![0.0; n],
            level: 0,
            n_steps: grid.n_steps(),
            hist_frac: vec![0.0; n],
            hist_int: vec![0.0; n],
            work: vec![0.0; n],
            rhs: vec![0.0; n],
            full: vec![0.0; n + 1],
        })
    }

    pub(crate) fn level(&self) -> usize {
        self.level
    }

    pub(crate) fn state(&self, k: usize) -> &[f64] {
        let n = self.mesh.n_free();
        &self.states[k * n..(k + 1) * n]
    }

    /// Advance one step with the coefficient `c` (full nodal, frozen over the
    /// step) and the half-step forcing `f` (free nodes, already projected).
    pub(crate) fn advance(&mut self, coeff: &[f64], forcing: &[f64]) -> Result<()> {
        let nf = self.mesh.n_free();
        let n = self.level;
        if n >= self.n_steps {
            return Err(Error::InvalidInput("integrator already at final level".into()));
        }
        let dt = self.dt;
        let m_c = assemble_weighted_mass_raw(self.mesh, coeff)?;

        let implicit_frac = match &self.frac {
            Some(w) => {
                w.history_into(n + 1, &self.states, &mut self.hist_frac);
                w.implicit_weight(n + 1)
            }
            None => 0.0,
        };
        let u_n = &self.states[n * nf..(n + 1) * nf];
        for i in 0..nf {
            self.hist_int[i] = self.int_prev[i] + 0.5 * dt * u_n[i];
        }

        // Explicit part of ½ b A (J^β_{n+1} + J^β_n) + ½ A (J¹_{n+1} + J¹_n).
        for i in 0..nf {
            self.work[i] = 0.5 * self.b_damp * (self.hist_frac[i] + self.frac_prev[i])
                + 0.5 * (self.hist_int[i] + self.int_prev[i]);
        }
        self.stiffness.mul_vec_into(&self.work, &mut self.rhs);
        m_c.mul_vec_into(u_n, &mut self.work);
        for i in 0..nf {
            self.rhs[i] = self.work[i] / dt - self.rhs[i] + forcing[i];
        }

        let lhs = m_c.linear_combination(
            1.0 / dt,
            &self.stiffness,
            0.5 * (self.b_damp * implicit_frac + 0.5 * dt),
        );
        let u_next = solve_tridiagonal(&lhs, &self.rhs)?;
        if u_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state at level {}", n + 1)));
        }
        for i in 0..nf {
            self.frac_prev[i] = implicit_frac * u_next[i] + self.hist_frac[i];
            self.int_prev[i] = 0.5 * dt * u_next[i] + self.hist_int[i];
        }
        self.states.extend_from_slice(&u_next);
        self.level += 1;
        Ok(())
    }

    /// Midpoint extrapolation `(3u^n - u^{n-1})/2` (plain `u^0` at the start),
    /// written as a full nodal vector.
    pub(crate) fn extrapolated_full(&mut self) -> &[f64] {
        let n = self.level;
        let nf = self.mesh.n_free();
        self.full[0] = 0.0;
        if n == 0 {
            self.full[1..].copy_from_slice(&self.states[..nf]);
        } else {
            for i in 0..nf {
                self.full[i + 1] =
                    1.5 * self.states[n * nf + i] - 0.5 * self.states[(n - 1) * nf + i];
            }
        }
        &self.full
    }

    pub(crate) fn into_history(self, min_coefficient: f64) -> StateHistory {
        let nf = self.mesh.n_free();
        let levels = self.level + 1;
        let mut u = Vec::with_capacity(levels * (nf + 1));
        for k in 0..levels {
            u.push(0.0);
            u.extend_from_slice(&self.states[k * nf..(k + 1) * nf]);
        }
        StateHistory {
            n_nodes: nf + 1,
            dt: self.dt,
            u,
            min_coefficient,
        }
    }
}

/// Stepper for the nonlinear forward problem.
pub struct ForwardStepper<'a> {
    params: &'a ModelParams,
    mesh: &'a Mesh1D,
    integrator: Integrator<'a>,
    ones: Vec<f64>,
    source_now: Vec<f64>,
    /// Running trapezoid of the source, full nodal.
    source_int: Vec<f64>,
    load_prev: Vec<f64>,
    load_next: Vec<f64>,
    forcing: Vec<f64>,
    coeff: Vec<f64>,
    threshold: f64,
    min_coefficient: f64,
}

impl<'a> ForwardStepper<'a> {
    pub fn new(params: &'a ModelParams, mesh: &'a Mesh1D, grid: &TimeGrid) -> Result<Self> {
        params.validate(mesh, grid)?;
        let nn = mesh.n_nodes();
        let nf = mesh.n_free();
        let mut source_now = vec![0.0; nn];
        params.source.level_into(0, &mut source_now);
        Ok(Self {
            params,
            mesh,
            integrator: Integrator::new(mesh, grid, params.alpha, params.b_damp)?,
            ones: vec![1.0; nn],
            source_now,
            source_int: vec![0.0; nn],
            load_prev: vec![0.0; nf],
            load_next: vec![0.0; nf],
            forcing: vec![0.0; nf],
            coeff: vec![0.0; nn],
            threshold: DEGENERACY_FRACTION * params.slowness.min(),
            min_coefficient: f64::INFINITY,
        })
    }

    pub fn level(&self) -> usize {
        self.integrator.level()
    }

    /// Current free-node state.
    pub fn state(&self) -> &[f64] {
        self.integrator.state(self.integrator.level())
    }

    /// Advance from `t_n` to `t_{n+1}`.
    pub fn step(&mut self) -> Result<()> {
        let n = self.integrator.level();
        let dt = self.integrator.dt;
        let mut next = vec![0.0; self.mesh.n_nodes()];
        self.params.source.level_into(n + 1, &mut next);
        for i in 0..next.len() {
            self.source_int[i] += 0.5 * dt * (self.source_now[i] + next[i]);
        }
        self.source_now = next;
        weighted_mass_apply_into(self.mesh, &self.ones, &self.source_int, &mut self.load_next);
        for i in 0..self.forcing.len() {
            self.forcing[i] = 0.5 * (self.load_prev[i] + self.load_next[i]);
        }
        std::mem::swap(&mut self.load_prev, &mut self.load_next);

        let ubar = self.integrator.extrapolated_full();
        let kappa = self.params.kappa.values();
        let slow = self.params.slowness.values();
        let mut min_c = f64::INFINITY;
        for i in 0..self.coeff.len() {
            let c = slow[i] - 2.0 * kappa[i] * ubar[i];
            min_c = min_c.min(c);
            self.coeff[i] = c;
        }
        self.min_coefficient = self.min_coefficient.min(min_c);
        if !(min_c >= self.threshold) {
            return Err(Error::Degenerate {
                min_coeff: min_c,
                threshold: self.threshold,
            });
        }
        self.integrator.advance(&self.coeff, &self.forcing)
    }

    pub fn finish(self) -> StateHistory {
        self.integrator.into_history(self.min_coefficient)
    }
}

/// Solve the forward problem over the whole grid.
pub fn run(params: &ModelParams, mesh: &Mesh1D, grid: &TimeGrid) -> Result<StateHistory> {
    let mut stepper = ForwardStepper::new(params, mesh, grid)?;
    for n in 0..grid.n_steps() {
        stepper.step().map_err(|e| Error::StepFailed {
            step: n + 1,
            source: Box::new(e),
        })?;
    }
    Ok(stepper.finish())
}

/// Nodal extraction at the given locations.
pub fn observe(history: &StateHistory, mesh: &Mesh1D, locations: &[f64]) -> Result<Trace> {
    let idx = locations
        .iter()
        .map(|&x| mesh.node_index(x))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(history.n_levels() * idx.len());
    for n in 0..history.n_levels() {
        samples.extend(idx.iter().map(|&i| history.value(n, i)));
    }
    Trace::new(locations.to_vec(), samples)
}

/// Low-order energy `½(u_tᵀ M_ς u_t + uᵀ A u)` at level `n`.
pub fn energy_e0(history: &StateHistory, params: &ModelParams, mesh: &Mesh1D, n: usize) -> f64 {
    let ut = history.velocity(n);
    let u = history.level(n);
    let m_ut = weighted_mass_apply(mesh, params.slowness.values(), &ut);
    let kinetic: f64 = m_ut.iter().zip(&ut[1..]).map(|(a, b)| a * b).sum();
    let a = assemble_stiffness(mesh);
    let au = a.mul_vec(&u[1..]);
    let potential: f64 = au.iter().zip(&u[1..]).map(|(a, b)| a * b).sum();
    0.5 * (kinetic + potential)
}

/// Energy at every level.
pub fn energy_series(history: &StateHistory, params: &ModelParams, mesh: &Mesh1D) -> Vec<f64> {
    (0..history.n_levels())
        .map(|n| energy_e0(history, params, mesh, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_params(mesh: &Mesh1D, source: Excitation, b: f64) -> ModelParams {
        ModelParams {
            alpha: 0.5,
            b_damp: b,
            kappa: CoeffField::constant(mesh, 0.0),
            slowness: CoeffField::constant(mesh, 1.0),
            source,
        }
    }

    fn burst(mesh: &Mesh1D, grid: &TimeGrid, amp: f64) -> Excitation {
        Excitation::from_fn(mesh, grid, |x, t| {
            let g = (-((x - 0.5) / 0.1).powi(2)).exp();
            let w = if t < 0.5 { (std::f64::consts::PI * t / 0.5).sin().powi(2) } else { 0.0 };
            amp * g * w
        })
    }

    #[test]
    fn zero_source_gives_zero_history() {
        let mesh = Mesh1D::new(20).unwrap();
        let grid = TimeGrid::new(50, 1.0).unwrap();
        let p = linear_params(&mesh, Excitation::zero(&mesh, &grid), 0.3);
        let h = run(&p, &mesh, &grid).unwrap();
        assert_eq!(h.max_abs(), 0.0);
        assert_eq!(h.n_levels(), 51);
    }

    #[test]
    fn dirichlet_node_stays_zero() {
        let mesh = Mesh1D::new(20).unwrap();
        let grid = TimeGrid::new(100, 1.0).unwrap();
        let p = linear_params(&mesh, burst(&mesh, &grid, 1.0), 0.1);
        let h = run(&p, &mesh, &grid).unwrap();
        assert!((0..h.n_levels()).all(|n| h.value(n, 0) == 0.0));
        assert!(h.level(0).iter().all(|&v| v == 0.0));
        assert!(h.value(100, 20).abs() > 0.0);
    }

    #[test]
    fn sign_flip_in_linear_regime() {
        let mesh = Mesh1D::new(20).unwrap();
        let grid = TimeGrid::new(100, 1.0).unwrap();
        let p = linear_params(&mesh, burst(&mesh, &grid, 1.0), 0.2);
        let q = linear_params(&mesh, burst(&mesh, &grid, -1.0), 0.2);
        let hp = run(&p, &mesh, &grid).unwrap();
        let hq = run(&q, &mesh, &grid).unwrap();
        for (a, b) in hp.as_slice().iter().zip(hq.as_slice()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn degeneracy_is_reported_with_step() {
        let mesh = Mesh1D::new(20).unwrap();
        let grid = TimeGrid::new(200, 2.0).unwrap();
        let mut p = linear_params(&mesh, burst(&mesh, &grid, 40.0), 0.0);
        p.kappa = CoeffField::constant(&mesh, 50.0);
        match run(&p, &mesh, &grid) {
            Err(Error::StepFailed { step, source }) => {
                assert!(step > 1);
                assert!(matches!(*source, Error::Degenerate { .. }));
            }
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mesh = Mesh1D::new(10).unwrap();
        let grid = TimeGrid::new(10, 1.0).unwrap();
        let mut p = linear_params(&mesh, Excitation::zero(&mesh, &grid), 0.1);
        p.alpha = 1.0;
        assert!(run(&p, &mesh, &grid).is_err());
        p.alpha = 0.5;
        p.slowness = CoeffField::constant(&mesh, 0.0);
        assert!(run(&p, &mesh, &grid).is_err());
        let other_grid = TimeGrid::new(20, 1.0).unwrap();
        let q = linear_params(&mesh, Excitation::zero(&mesh, &other_grid), 0.1);
        assert!(run(&q, &mesh, &grid).is_err());
    }

    #[test]
    fn observe_columns_and_errors() {
        let mesh = Mesh1D::new(20).unwrap();
        let grid = TimeGrid::new(40, 1.0).unwrap();
        let p = linear_params(&mesh, burst(&mesh, &grid, 1.0), 0.1);
        let h = run(&p, &mesh, &grid).unwrap();
        let tr = observe(&h, &mesh, &[1.0, 0.1]).unwrap();
        assert_eq!(tr.locations(), &[1.0, 0.1]);
        assert_eq!(tr.n_levels(), 41);
        assert_eq!(tr.get(30, 0), h.value(30, 20));
        assert_eq!(tr.get(30, 1), h.value(30, 2));
        assert!(matches!(observe(&h, &mesh, &[0.125]), Err(Error::NotANode(_))));

        let zero = run(&linear_params(&mesh, Excitation::zero(&mesh, &grid), 0.1), &mesh, &grid)
            .unwrap();
        let tz = observe(&zero, &mesh, &[0.1, 1.0]).unwrap();
        assert!(tz.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_of_zero_state() {
        let mesh = Mesh1D::new(10).unwrap();
        let grid = TimeGrid::new(10, 1.0).unwrap();
        let p = linear_params(&mesh, Excitation::zero(&mesh, &grid), 0.0);
        let h = run(&p, &mesh, &grid).unwrap();
        assert_eq!(energy_e0(&h, &p, &mesh, 5), 0.0);
    }

    #[test]
    fn history_csv_layout() {
        let mesh = Mesh1D::new(10).unwrap();
        let grid = TimeGrid::new(4, 1.0).unwrap();
        let p = linear_params(&mesh, burst(&mesh, &grid, 1.0), 0.0);
        let h = run(&p, &mesh, &grid).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,u"));
        assert_eq!(text.lines().count(), 1 + 5 * 11);
        let second: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
        assert_eq!(second[1], fmt_num(0.1));
    }
}
