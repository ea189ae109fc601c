//! End-to-end experiments: truth profiles, noisy synthetic data on a finer
//! grid, frozen-Newton reconstructions and the CSV artifacts.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{energy_series, fmt_num, observe, run, Excitation, ModelParams, StateHistory, Trace};
use crate::fracquad::TimeGrid;
use crate::jacobian::{assemble, svd, JacobianMatrix, SvdResult};
use crate::mesh::{CoeffField, Mesh1D};
use crate::newton::{iterate_fields, relative_l2_error, run_newton, InverseProblem, NewtonConfig, NewtonState};
use crate::spectral::{determinant_condition, eigenpairs_dn, poles_and_residue, separable_excitation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    A,
    B,
    C,
    #[serde(rename = "custom")]
    Custom,
}

/// Gaussian bump `[center, width, amplitude]`: `a·exp(-((x - c)/w)²)`.
pub type Bump = [f64; 3];

fn eval_bumps(bumps: &[Bump], x: f64) -> f64 {
    bumps.iter().map(|&[c, w, a]| a * (-((x - c) / w).powi(2)).exp()).sum()
}

/// Spatial form of the excitation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceShape {
    /// `r̃` chosen so that the linear response is exactly `sin(πx/2)ψ(t)`.
    Separable,
    /// `g(x)ψ(t)` with a Gaussian `g` near the left end.
    Localized,
}

const KAPPA_A: [Bump; 1] = [[0.65, 0.1, 0.2]];
const KAPPA_C: [Bump; 2] = [[0.15, 0.08, 0.2], [0.75, 0.08, 0.2]];
const SLOWNESS_BUMP: [Bump; 1] = [[0.5, 0.15, 0.1]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: Case,
    pub alpha: f64,
    pub b_damp: f64,
    pub noise_rel: f64,
    pub n_cells: usize,
    pub n_steps: usize,
    pub horizon: f64,
    pub sigma: Vec<f64>,
    /// Synthesis grid is this many times finer in space and time.
    pub synthesis_refinement: usize,
    pub source_shape: SourceShape,
    /// Center and width of the Gaussian for the localized shape.
    pub source_center: f64,
    pub source_width: f64,
    /// Peak `|u|` of the linear response at `κ = 0`, `ς = 1`.
    pub source_amplitude: f64,
    /// `sin⁴` pulses `[start, length, relative amplitude]` making up `ψ`.
    pub source_pulses: Vec<[f64; 3]>,
    /// Sign of `u`; only read for the custom case.
    pub source_sign: f64,
    pub kappa_bumps: Option<Vec<Bump>>,
    pub slowness_bumps: Option<Vec<Bump>>,
    pub alpha0: f64,
    pub theta: f64,
    pub max_iters: usize,
    pub penalty_weight: f64,
    pub tau_discrepancy: f64,
    pub rng_seed: u64,
    pub alphas: Vec<f64>,
    pub spectral_modes: usize,
    pub spectral_b: f64,
    pub spectral_c: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            case: Case::A,
            alpha: 0.5,
            b_damp: 0.1,
            noise_rel: 0.001,
            n_cells: 100,
            n_steps: 2000,
            horizon: 2.0,
            sigma: vec![0.1, 1.0],
            synthesis_refinement: 2,
            source_shape: SourceShape::Separable,
            source_center: 0.05,
            source_width: 0.03,
            source_amplitude: 0.3,
            source_pulses: vec![[0.0, 0.2, 1.0], [0.5, 0.2, 0.3]],
            source_sign: -1.0,
            kappa_bumps: None,
            slowness_bumps: None,
            alpha0: 1e-4,
            theta: 0.5,
            max_iters: 20,
            penalty_weight: 1e-7,
            tau_discrepancy: 1.5,
            rng_seed: 0,
            alphas: vec![0.3, 0.5, 0.7],
            spectral_modes: 10,
            spectral_b: 0.2,
            spectral_c: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.b_damp >= 0.0 && self.b_damp.is_finite()) {
            return bad(format!("b_damp must be nonnegative, got {}", self.b_damp));
        }
        if !(self.noise_rel >= 0.0 && self.noise_rel.is_finite()) {
            return bad(format!("noise_rel must be nonnegative, got {}", self.noise_rel));
        }
        if self.n_cells == 0 || self.n_cells % 10 != 0 {
            return bad(format!("n_cells must be a positive multiple of 10, got {}", self.n_cells));
        }
        if self.n_steps == 0 || !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("n_steps and horizon must be positive".into());
        }
        if self.synthesis_refinement < 2 {
            return bad("synthesis_refinement must be at least 2 to avoid an inverse crime".into());
        }
        if self.sigma.is_empty() {
            return bad("sigma must not be empty".into());
        }
        let mesh = self.mesh()?;
        for &x in &self.sigma {
            mesh.node_index(x).map_err(|e| Error::Config(e.to_string()))?;
        }
        if !(self.source_amplitude >= 0.0 && self.source_amplitude.is_finite()) {
            return bad("source_amplitude must be nonnegative".into());
        }
        if !(self.source_center > 0.0 && self.source_center < 1.0 && self.source_width > 0.0) {
            return bad("source_center must lie in (0, 1) and source_width be positive".into());
        }
        if self.source_pulses.is_empty() {
            return bad("source_pulses must not be empty".into());
        }
        for &[t0, d, a] in &self.source_pulses {
            if !(t0 >= 0.0 && d > 0.0 && t0 + d <= self.horizon && a.is_finite()) {
                return bad(format!("pulse [{t0}, {d}, {a}] must lie inside [0, horizon]"));
            }
        }
        let peak = self.source_pulses.iter().fold(0.0_f64, |m, p| m.max(p[2].abs()));
        if peak == 0.0 {
            return bad("source_pulses need a nonzero amplitude".into());
        }
        if self.source_sign != 1.0 && self.source_sign != -1.0 {
            return bad("source_sign must be 1 or -1".into());
        }
        match self.case {
            Case::Custom => {
                if self.kappa_bumps.is_none() || self.slowness_bumps.is_none() {
                    return bad("custom case needs kappa_bumps and slowness_bumps".into());
                }
            }
            _ => {
                if self.kappa_bumps.is_some() || self.slowness_bumps.is_some() {
                    return bad("kappa_bumps and slowness_bumps are only allowed for the custom case".into());
                }
            }
        }
        for b in self.kappa_bumps.iter().chain(&self.slowness_bumps).flatten() {
            if !(b[1] > 0.0) || b.iter().any(|v| !v.is_finite()) {
                return bad(format!("invalid bump {b:?}"));
            }
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return bad(format!("alphas must lie in (0, 1), got {:?}", self.alphas));
        }
        if self.spectral_modes == 0 || !(self.spectral_b >= 0.0) || !(self.spectral_c > 0.0) {
            return bad("spectral_modes, spectral_b and spectral_c out of range".into());
        }
        self.newton_config(&mesh).validate()
    }

    pub fn mesh(&self) -> Result<Mesh1D> {
        Mesh1D::new(self.n_cells).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.n_steps, self.horizon).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn synthesis_mesh(&self) -> Result<Mesh1D> {
        Mesh1D::new(self.n_cells * self.synthesis_refinement)
    }

    pub fn synthesis_grid(&self) -> Result<TimeGrid> {
        Ok(self.grid()?.refined(self.synthesis_refinement))
    }

    pub fn newton_config(&self, mesh: &Mesh1D) -> NewtonConfig {
        NewtonConfig {
            alpha0: self.alpha0,
            theta: self.theta,
            max_iters: self.max_iters,
            penalty_weight: self.penalty_weight,
            tau_discrepancy: self.tau_discrepancy,
            ..NewtonConfig::new(mesh)
        }
    }

    /// Sign of the excited `u`: negative for A and C, positive for B.
    pub fn sign(&self) -> f64 {
        match self.case {
            Case::A | Case::C => -1.0,
            Case::B => 1.0,
            Case::Custom => self.source_sign,
        }
    }

    pub fn kappa_bumps(&self) -> Vec<Bump> {
        match self.case {
            Case::A | Case::B => KAPPA_A.to_vec(),
            Case::C => KAPPA_C.to_vec(),
            Case::Custom => self.kappa_bumps.clone().unwrap_or_default(),
        }
    }

    pub fn slowness_bumps(&self) -> Vec<Bump> {
        match self.case {
            Case::Custom => self.slowness_bumps.clone().unwrap_or_default(),
            _ => SLOWNESS_BUMP.to_vec(),
        }
    }

    /// Window on which the `κ` error is reported.
    pub fn kappa_window(&self) -> (f64, f64) {
        match self.case {
            Case::A | Case::B => (0.3, 1.0),
            _ => (0.0, 1.0),
        }
    }

    /// Source `r̃` whose linear response is `sign · a · φ(x) ψ(t)` with
    /// `φ = sin(πx/2)` and `ψ` a sum of `sin⁴` pulses, normalized so the
    /// largest pulse has unit height.
    /// Unscaled `ψ(t)` and `ψ''(t)`.
    fn pulses(&self, t: f64) -> (f64, f64) {
        let (mut v, mut v_tt) = (0.0, 0.0);
        for &[t0, d, rel] in &self.source_pulses {
            if t > t0 && t < t0 + d {
                let w = PI / d;
                let (s, c) = (w * (t - t0)).sin_cos();
                v += rel * s.powi(4);
                v_tt += 4.0 * rel * w * w * (3.0 * s * s * c * c - s.powi(4));
            }
        }
        (v, v_tt)
    }

    fn localized(&self, mesh: &Mesh1D, grid: &TimeGrid, scale: f64) -> Excitation {
        let (c, w) = (self.source_center, self.source_width);
        Excitation::from_fn(mesh, grid, |x, t| scale * (-((x - c) / w).powi(2)).exp() * self.pulses(t).0)
    }

    pub fn source(&self, mesh: &Mesh1D, grid: &TimeGrid) -> Result<Excitation> {
        match self.source_shape {
            SourceShape::Separable => {
                let peak = self.source_pulses.iter().fold(0.0_f64, |m, p| m.max(p[2].abs()));
                let a = self.sign() * self.source_amplitude / peak;
                let phi: Vec<f64> = mesh.nodes().iter().map(|&x| (0.5 * PI * x).sin()).collect();
                let (psi, psi_tt): (Vec<f64>, Vec<f64>) = grid
                    .times()
                    .map(|t| {
                        let (v, v_tt) = self.pulses(t);
                        (a * v, a * v_tt)
                    })
                    .unzip();
                separable_excitation(&phi, &psi, &psi_tt, None, self.alpha, self.b_damp, mesh, grid)
            }
            SourceShape::Localized => {
                // scale from a unit run on the inversion grid so that every
                // grid sees the same source
                let (m0, g0) = (self.mesh()?, self.grid()?);
                let unit = ModelParams {
                    alpha: self.alpha,
                    b_damp: self.b_damp,
                    kappa: CoeffField::constant(&m0, 0.0),
                    slowness: CoeffField::constant(&m0, 1.0),
                    source: self.localized(&m0, &g0, 1.0),
                };
                let peak = run(&unit, &m0, &g0)?.max_abs();
                if peak == 0.0 {
                    return Err(Error::Config("source produces no response".into()));
                }
                Ok(self.localized(mesh, grid, self.sign() * self.source_amplitude / peak))
            }
        }
    }

    /// Model parameters at the given coefficients.
    pub fn params(&self, mesh: &Mesh1D, grid: &TimeGrid, kappa: CoeffField, slowness: CoeffField) -> Result<ModelParams> {
        Ok(ModelParams {
            alpha: self.alpha,
            b_damp: self.b_damp,
            kappa,
            slowness,
            source: self.source(mesh, grid)?,
        })
    }
}

/// `(κ†, ς†)` sampled on `mesh`.
pub fn make_truth(cfg: &ExperimentConfig, mesh: &Mesh1D) -> (CoeffField, CoeffField) {
    let kb = cfg.kappa_bumps();
    let sb = cfg.slowness_bumps();
    (
        CoeffField::from_fn(mesh, |x| eval_bumps(&kb, x)),
        CoeffField::from_fn(mesh, |x| 1.0 + eval_bumps(&sb, x)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyData {
    pub clean: Trace,
    pub noisy: Trace,
    /// `‖h^δ - h‖_Y`.
    pub delta: f64,
}

/// Forward run at the truth on the refined grid, restricted to the
/// inversion grid, plus Gaussian noise rescaled to exactly `noise_rel`.
pub fn synthesize(cfg: &ExperimentConfig) -> Result<NoisyData> {
    let fine_mesh = cfg.synthesis_mesh()?;
    let fine_grid = cfg.synthesis_grid()?;
    let grid = cfg.grid()?;
    if fine_mesh.n_cells() <= cfg.n_cells || fine_grid.n_steps() <= grid.n_steps() {
        return Err(Error::Config("synthesis grid must be strictly finer".into()));
    }
    let (k, s) = make_truth(cfg, &fine_mesh);
    let params = cfg.params(&fine_mesh, &fine_grid, k, s)?;
    let history = run(&params, &fine_mesh, &fine_grid)?;
    let clean = observe(&history, &fine_mesh, &cfg.sigma)?.subsample(cfg.synthesis_refinement);
    if cfg.noise_rel == 0.0 {
        return Ok(NoisyData {
            noisy: clean.clone(),
            clean,
            delta: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let raw: Vec<f64> = (0..clean.as_slice().len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let raw = Trace::new(cfg.sigma.clone(), raw)?;
    let scale = cfg.noise_rel * clean.norm(&grid) / raw.norm(&grid);
    let noise = raw.scaled(scale);
    let noisy = clean.add(&noise)?;
    let delta = noisy.sub(&clean)?.norm(&grid);
    Ok(NoisyData { clean, noisy, delta })
}

/// Background state and Jacobian at `κ = 0`, `ς = 1`.
pub fn frozen_jacobian(cfg: &ExperimentConfig) -> Result<(StateHistory, JacobianMatrix)> {
    let mesh = cfg.mesh()?;
    let grid = cfg.grid()?;
    let params = cfg.params(&mesh, &grid, CoeffField::constant(&mesh, 0.0), CoeffField::constant(&mesh, 1.0))?;
    let background = run(&params, &mesh, &grid)?;
    let k = assemble(&background, &params, &mesh, &grid, &cfg.sigma)?;
    Ok((background, k))
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub data: NoisyData,
    pub state: NewtonState,
    pub kappa_true: CoeffField,
    pub slowness_true: CoeffField,
    /// Nodal `(κ, ς)` of every iterate.
    pub fields: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Reconstruction {
    pub fn final_fields(&self) -> &(Vec<f64>, Vec<f64>) {
        self.fields.last().expect("start is always stored")
    }

    /// Relative `L²(a, b)` error of the final `κ`.
    pub fn kappa_error(&self, mesh: &Mesh1D, a: f64, b: f64) -> f64 {
        relative_l2_error(mesh, &self.final_fields().0, self.kappa_true.values(), a, b)
    }

    /// Relative `L²(a, b)` error of the final `ς`.
    pub fn slowness_error(&self, mesh: &Mesh1D, a: f64, b: f64) -> f64 {
        relative_l2_error(mesh, &self.final_fields().1, self.slowness_true.values(), a, b)
    }

    /// `‖ς - ς†‖ / ‖ς† - 1‖`, the error relative to the size of the feature.
    pub fn slowness_feature_error(&self, mesh: &Mesh1D) -> f64 {
        let shift = |v: &[f64]| v.iter().map(|s| s - 1.0).collect::<Vec<_>>();
        relative_l2_error(mesh, &shift(&self.final_fields().1), &shift(self.slowness_true.values()), 0.0, 1.0)
    }
}

/// Synthesize data and run the frozen Newton iteration. A precomputed
/// Jacobian for the same configuration may be supplied.
pub fn reconstruct(cfg: &ExperimentConfig, kmat: Option<&JacobianMatrix>) -> Result<Reconstruction> {
    cfg.validate()?;
    let mesh = cfg.mesh()?;
    let grid = cfg.grid()?;
    let data = synthesize(cfg)?;
    let owned;
    let kmat = match kmat {
        Some(k) => k,
        None => {
            owned = frozen_jacobian(cfg)?.1;
            &owned
        }
    };
    let template = cfg.params(&mesh, &grid, CoeffField::constant(&mesh, 0.0), CoeffField::constant(&mesh, 1.0))?;
    let (kt, st) = make_truth(cfg, &mesh);
    let mut ncfg = cfg.newton_config(&mesh);
    ncfg.noise_level_delta = data.delta;
    let problem = InverseProblem {
        mesh: &mesh,
        grid: &grid,
        template: &template,
        kmat,
        h_obs: &data.noisy,
        truth: Some((&kt, &st)),
    };
    let state = run_newton(&ncfg, &problem)?;
    let fields = state
        .iterates
        .iter()
        .map(|x| iterate_fields(&mesh, x, (0.0, 1.0)))
        .collect::<Result<_>>()?;
    Ok(Reconstruction {
        data,
        state,
        kappa_true: kt,
        slowness_true: st,
        fields,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// `x,true,iter1,…,iterN,final`.
fn write_profiles<W: Write>(out: W, mesh: &Mesh1D, truth: &[f64], iterates: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string(), "true".to_string()];
    header.extend((1..iterates.len()).map(|n| format!("iter{n}")));
    header.push("final".into());
    w.write_record(&header)?;
    for (i, &x) in mesh.nodes().iter().enumerate() {
        let mut rec = vec![fmt_num(x), fmt_num(truth[i])];
        rec.extend(iterates[1..].iter().map(|f| fmt_num(f[i])));
        rec.push(fmt_num(iterates[iterates.len() - 1][i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reconstruction(rec: &Reconstruction, mesh: &Mesh1D, dir: &Path) -> Result<()> {
    let kappas: Vec<&[f64]> = rec.fields.iter().map(|f| f.0.as_slice()).collect();
    let slows: Vec<&[f64]> = rec.fields.iter().map(|f| f.1.as_slice()).collect();
    write_profiles(create(dir, "recon_kappa.csv")?, mesh, rec.kappa_true.values(), &kappas)?;
    write_profiles(create(dir, "recon_slowness.csv")?, mesh, rec.slowness_true.values(), &slows)?;
    rec.state.write_history(create(dir, "newton_history.csv")?)
}

/// `t,<one column per location>`.
pub fn write_trace<W: Write>(out: W, trace: &Trace, grid: &TimeGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(trace.locations().iter().map(|x| format!("u_{x}")));
    w.write_record(&header)?;
    for n in 0..trace.n_levels() {
        let mut rec = vec![fmt_num(grid.t(n))];
        rec.extend((0..trace.locations().len()).map(|s| fmt_num(trace.get(n, s))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_synthesis(data: &NoisyData, grid: &TimeGrid, dir: &Path) -> Result<()> {
    write_trace(create(dir, "trace_clean.csv")?, &data.clean, grid)?;
    write_trace(create(dir, "trace_noisy.csv")?, &data.noisy, grid)
}

/// Forward run at the truth on the inversion grid; writes the history,
/// the trace and the energy series.
pub fn forward(cfg: &ExperimentConfig, dir: &Path) -> Result<StateHistory> {
    let mesh = cfg.mesh()?;
    let grid = cfg.grid()?;
    let (k, s) = make_truth(cfg, &mesh);
    let params = cfg.params(&mesh, &grid, k, s)?;
    let history = run(&params, &mesh, &grid)?;
    history.write_csv(&mesh, create(dir, "u.csv")?)?;
    write_trace(create(dir, "trace.csv")?, &observe(&history, &mesh, &cfg.sigma)?, &grid)?;
    let mut w = csv::Writer::from_writer(create(dir, "energy.csv")?);
    w.write_record(["t", "E0"])?;
    for (n, e) in energy_series(&history, &params, &mesh).iter().enumerate() {
        w.write_record([fmt_num(grid.t(n)), fmt_num(*e)])?;
    }
    w.flush()?;
    Ok(history)
}

pub fn dump_singular_values(cfg: &ExperimentConfig, dir: &Path) -> Result<SvdResult> {
    let (_, k) = frozen_jacobian(cfg)?;
    let s = svd(&k)?;
    s.write_csv(create(dir, "sv.csv")?)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRow {
    pub alpha: f64,
    pub err_kappa: f64,
    pub err_slowness: f64,
    pub iterations: usize,
}

/// Case A reconstructions at every `α` in `alphas`.
pub fn alpha_sensitivity(cfg: &ExperimentConfig, alphas: &[f64], dir: &Path) -> Result<Vec<AlphaRow>> {
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::Config(format!("alphas must be nonempty and lie in (0, 1), got {alphas:?}")));
    }
    let mesh = cfg.mesh()?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let c = ExperimentConfig {
            case: Case::A,
            alpha,
            kappa_bumps: None,
            slowness_bumps: None,
            ..cfg.clone()
        };
        let rec = reconstruct(&c, None)?;
        let (a, b) = c.kappa_window();
        rows.push(AlphaRow {
            alpha,
            err_kappa: rec.kappa_error(&mesh, a, b),
            err_slowness: rec.slowness_error(&mesh, 0.0, 1.0),
            iterations: rec.state.n_steps(),
        });
    }
    let mut w = csv::Writer::from_writer(create(dir, "alpha_sweep.csv")?);
    w.write_record(["alpha", "err_kappa_L2", "err_slowness_L2", "iterations"])?;
    for r in &rows {
        w.write_record([fmt_num(r.alpha), fmt_num(r.err_kappa), fmt_num(r.err_slowness), r.iterations.to_string()])?;
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRow {
    pub j: usize,
    pub lambda: f64,
    pub pole: num_complex::Complex64,
    pub residue: num_complex::Complex64,
    pub abs_det: f64,
}

/// Poles, residues and the determinant condition for the first modes, with
/// the excitations `ψ₁ = t²e^{-t}` and `ψ₂ = t³e^{-t}`.
pub fn spectral_check(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<SpectralRow>> {
    let mesh = cfg.mesh()?;
    let pairs = eigenpairs_dn(&mesh, cfg.spectral_modes)?;
    let poles: Vec<_> = pairs
        .iter()
        .map(|e| poles_and_residue(e.lambda, cfg.spectral_b, cfg.spectral_c, 0.0))
        .collect();
    let lgrid = TimeGrid::new(40_000, 40.0)?;
    let psi1: Vec<f64> = lgrid.times().map(|t| t * t * (-t).exp()).collect();
    let psi2: Vec<f64> = lgrid.times().map(|t| t.powi(3) * (-t).exp()).collect();
    let plus: Vec<_> = poles.iter().map(|p| p.p_plus).collect();
    let dets = determinant_condition(&psi1, &psi2, &plus, &lgrid)?;
    let rows: Vec<SpectralRow> = pairs
        .iter()
        .zip(&poles)
        .zip(&dets)
        .map(|((e, p), d)| SpectralRow {
            j: e.index,
            lambda: e.lambda,
            pole: p.p_plus,
            residue: p.residue_plus,
            abs_det: d.1,
        })
        .collect();
    let mut w = csv::Writer::from_writer(create(dir, "spectral.csv")?);
    w.write_record(["j", "lambda", "re_p", "im_p", "re_res", "im_res", "abs_det"])?;
    for r in &rows {
        w.write_record([
            r.j.to_string(),
            fmt_num(r.lambda),
            fmt_num(r.pole.re),
            fmt_num(r.pole.im),
            fmt_num(r.residue.re),
            fmt_num(r.residue.im),
            fmt_num(r.abs_det),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// `meta.json` with the resolved configuration; no timestamps so reruns are
/// byte-identical.
pub fn write_meta(dir: &Path, command: &str, cfg: &ExperimentConfig, results: serde_json::Value) -> Result<()> {
    let meta = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "results": results,
    });
    let mut f = create(dir, "meta.json")?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
