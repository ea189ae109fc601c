//! Product-trapezoidal quadrature for the Abel integral
//! `(I^β v)(t) = Γ(β)^{-1} ∫_0^t (t-s)^{β-1} v(s) ds` on a uniform grid.
//!
//! On every cell the integrand is replaced by its linear interpolant and the
//! weakly singular kernel is integrated exactly. The rule is exact for
//! affine `v` and second order for smooth `v`. With `β = 1` it is the
//! composite trapezoid rule.
//!
//! Weights on a uniform grid only depend on `n - k` away from `k = 0`, so the
//! table is stored as one Toeplitz sequence plus the first column.

use serde::{Deserialize, Serialize};
use libm::tgamma as gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidInput("n_steps must be positive".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            n_steps,
            dt: horizon / n_steps as f64,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of time levels including `t_0`.
    pub fn n_levels(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |n| self.t(n))
    }

    /// Composite trapezoid weights over `[0, T]`, one per time level.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dt; self.n_levels()];
        w[0] *= 0.5;
        w[self.n_steps] *= 0.5;
        w
    }

    /// Grid with the same horizon and `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_steps: self.n_steps * factor,
            dt: self.dt / factor as f64,
        }
    }
}

/// `(1+x)^p - 1` without cancellation for small `x`.
fn pow1pm1(x: f64, p: f64) -> f64 {
    (p * x.ln_1p()).exp_m1()
}

#[derive(Debug, Clone)]
pub struct FracWeights {
    beta: f64,
    n_steps: usize,
    /// `dt^β / Γ(β + 2)`.
    scale: f64,
    /// `(m+1)^{β+1} - 2 m^{β+1} + (m-1)^{β+1}` for `m >= 1`; index 0 unused.
    toeplitz: Vec<f64>,
    /// `(n-1)^{β+1} - (n-1-β) n^β` for `n >= 1`; index 0 unused.
    first: Vec<f64>,
}

impl FracWeights {
    pub fn new(grid: &TimeGrid, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidInput(format!("beta must lie in (0, 1], got {beta}")));
        }
        let p = beta + 1.0;
        let n_steps = grid.n_steps();
        let mut toeplitz = vec![0.0; n_steps + 1];
        let mut first = vec![0.0; n_steps + 1];
        for m in 1..=n_steps {
            let mf = m as f64;
            toeplitz[m] = if m == 1 {
                2f64.powf(p) - 2.0
            } else {
                let x = 1.0 / mf;
                mf.powf(p) * (pow1pm1(x, p) + pow1pm1(-x, p))
            };
            first[m] = if m == 1 {
                beta
            } else {
                mf.powf(p) * (pow1pm1(-1.0 / mf, p) + p / mf)
            };
        }
        Ok(Self {
            beta,
            n_steps,
            scale: grid.dt().powf(beta) / gamma(beta + 2.0),
            toeplitz,
            first,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Weight `w_{n,k}` of sample `k` in `(I^β v)(t_n)`.
    pub fn weight(&self, n: usize, k: usize) -> f64 {
        assert!(k <= n && n <= self.n_steps, "weight index ({n},{k}) out of range");
        if n == 0 {
            0.0
        } else if k == n {
            self.scale
        } else if k == 0 {
            self.scale * self.first[n]
        } else {
            self.scale * self.toeplitz[n - k]
        }
    }

    /// Coefficient `w_{n,n}` multiplying the newest sample.
    pub fn implicit_weight(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.scale
        }
    }

    /// Explicit part `Σ_{k<n} w_{n,k} v_k` of the convolution at step `n`.
    pub fn apply_history(&self, samples: &[f64], n: usize) -> Result<f64> {
        if n > self.n_steps {
            return Err(Error::InvalidInput(format!(
                "step {n} beyond grid of {} steps",
                self.n_steps
            )));
        }
        if samples.len() < n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: samples.len(),
            });
        }
        Ok((0..n).map(|k| self.weight(n, k) * samples[k]).sum())
    }

    /// `(I^β v)(t_n)` for every level of a sampled signal.
    pub fn integrate(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.n_steps + 1 {
            return Err(Error::ShapeMismatch {
                expected: self.n_steps + 1,
                got: samples.len(),
            });
        }
        (0..=self.n_steps)
            .map(|n| Ok(self.apply_history(samples, n)? + self.implicit_weight(n) * samples[n]))
            .collect()
    }

    /// Vector-valued history sum. `states` holds rows `k = 0..n` of length
    /// `out.len()` back to back; only rows `k < n` are read.
    pub fn history_into(&self, n: usize, states: &[f64], out: &mut [f64]) {
        let width = out.len();
        debug_assert!(states.len() >= n * width);
        out.iter_mut().for_each(|o| *o = 0.0);
        if n == 0 {
            return;
        }
        for k in 0..n {
            let w = self.weight(n, k);
            let row = &states[k * width..(k + 1) * width];
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
    }
}
