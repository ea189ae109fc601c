use std::f64::consts::PI;

use fracwest_core::jacobian::{assemble, solve_linearized, split_coefficients};
use fracwest_core::{observe, run, CoeffField, Excitation, Mesh1D, ModelParams, TimeGrid, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGMA: [f64; 2] = [0.1, 1.0];

fn setup(n_cells: usize, n_steps: usize) -> (Mesh1D, TimeGrid, ModelParams) {
    let mesh = Mesh1D::new(n_cells).unwrap();
    let grid = TimeGrid::new(n_steps, 2.0).unwrap();
    let source = Excitation::from_fn(&mesh, &grid, |x, t| {
        let g = (-((x - 0.3) / 0.1).powi(2)).exp();
        -3.0 * g * (PI * t).sin().powi(2) * (1.0 + (3.0 * PI * t).sin())
    });
    let params = ModelParams {
        alpha: 0.5,
        b_damp: 0.1,
        kappa: CoeffField::constant(&mesh, 0.0),
        slowness: CoeffField::constant(&mesh, 1.0),
        source,
    };
    (mesh, grid, params)
}

fn bumps(mesh: &Mesh1D) -> (CoeffField, CoeffField) {
    (
        CoeffField::from_fn(mesh, |x| (-((x - 0.6) / 0.15).powi(2)).exp()),
        CoeffField::from_fn(mesh, |x| 0.5 * (-((x - 0.4) / 0.2).powi(2)).exp()),
    )
}

#[test]
fn zero_perturbation_gives_zero() {
    let (mesh, grid, params) = setup(20, 100);
    let bg = run(&params, &mesh, &grid).unwrap();
    let z = CoeffField::constant(&mesh, 0.0);
    let du = solve_linearized(&bg, &z, &z, &params, &mesh, &grid).unwrap();
    assert!(du.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn linearized_solution_is_linear() {
    let (mesh, grid, params) = setup(20, 200);
    let bg = run(&params, &mesh, &grid).unwrap();
    let (dk, ds) = bumps(&mesh);
    let scale = |f: &CoeffField, a: f64| CoeffField::from_fn(&mesh, |x| a * f.values()[mesh.node_index(x).unwrap()]);
    let one = solve_linearized(&bg, &dk, &ds, &params, &mesh, &grid).unwrap();
    let three = solve_linearized(&bg, &scale(&dk, 3.0), &scale(&ds, 3.0), &params, &mesh, &grid).unwrap();
    let m = one.max_abs();
    assert!(m > 0.0);
    for (a, b) in three.as_slice().iter().zip(one.as_slice()) {
        assert!((a - 3.0 * b).abs() <= 1e-12 * m * 3.0);
    }
}

#[test]
fn taylor_remainder_is_second_order() {
    let (mesh, grid, params) = setup(40, 400);
    let bg = run(&params, &mesh, &grid).unwrap();
    let f0 = observe(&bg, &mesh, &SIGMA).unwrap();
    let (dk, ds) = bumps(&mesh);
    let du = solve_linearized(&bg, &dk, &ds, &params, &mesh, &grid).unwrap();
    let lin = observe(&du, &mesh, &SIGMA).unwrap();
    let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let mut p = params.clone();
            p.kappa = CoeffField::from_fn(&mesh, |x| eps * dk.values()[mesh.node_index(x).unwrap()]);
            p.slowness = CoeffField::from_fn(&mesh, |x| 1.0 + eps * ds.values()[mesh.node_index(x).unwrap()]);
            let f = observe(&run(&p, &mesh, &grid).unwrap(), &mesh, &SIGMA).unwrap();
            let step = lin.scaled(eps);
            f.sub(&f0).unwrap().sub(&step).unwrap().norm(&grid) / step.norm(&grid)
        })
        .collect();
    for w in ratios.windows(2) {
        let drop = w[0] / w[1];
        assert!((7.0..14.0).contains(&drop), "{ratios:?}");
    }
}

#[test]
fn jacobian_columns_and_products() {
    let (mesh, grid, params) = setup(20, 200);
    let bg = run(&params, &mesh, &grid).unwrap();
    let k = assemble(&bg, &params, &mesh, &grid, &SIGMA).unwrap();
    assert_eq!(k.n_rows(), 201 * 2);
    assert_eq!(k.n_cols(), 40);

    // definition check on one κ column and one ς column
    for j in [3, 20 + 7] {
        let mut p = vec![0.0; 40];
        p[j] = 1.0;
        let (dk, ds) = split_coefficients(&mesh, &p).unwrap();
        let tr = observe(&solve_linearized(&bg, &dk, &ds, &params, &mesh, &grid).unwrap(), &mesh, &SIGMA).unwrap();
        for (r, v) in tr.as_slice().iter().enumerate() {
            assert_eq!(k.k[(r, j)], *v);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (dk, ds) = split_coefficients(&mesh, &p).unwrap();
    let direct = observe(&solve_linearized(&bg, &dk, &ds, &params, &mesh, &grid).unwrap(), &mesh, &SIGMA).unwrap();
    let via_k = k.apply(&p).unwrap();
    let scale = direct.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for (a, b) in direct.as_slice().iter().zip(via_k.as_slice()) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}

#[test]
fn adjoint_identity() {
    let (mesh, grid, params) = setup(20, 200);
    let bg = run(&params, &mesh, &grid).unwrap();
    let k = assemble(&bg, &params, &mesh, &grid, &SIGMA).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p: Vec<f64> = (0..k.n_cols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = Trace::new(SIGMA.to_vec(), (0..k.n_rows()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let lhs = k.apply(&p).unwrap().inner(&y, &grid).unwrap();
        let kty = k.adjoint_apply(&y).unwrap();
        let rhs: f64 = p.iter().zip(&kty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
    let zero = Trace::new(SIGMA.to_vec(), vec![0.0; k.n_rows()]).unwrap();
    assert!(k.adjoint_apply(&zero).unwrap().iter().all(|&v| v == 0.0));
    let bad = Trace::new(vec![1.0], vec![0.0; 201]).unwrap();
    assert!(k.adjoint_apply(&bad).is_err());
}

#[test]
fn zero_background_gives_zero_jacobian() {
    let (mesh, grid, mut params) = setup(20, 100);
    params.source = Excitation::zero(&mesh, &grid);
    let bg = run(&params, &mesh, &grid).unwrap();
    let k = assemble(&bg, &params, &mesh, &grid, &SIGMA).unwrap();
    assert!(k.k.iter().all(|&v| v == 0.0));
}

#[test]
fn assembly_is_schedule_independent() {
    let (mesh, grid, params) = setup(20, 100);
    let bg = run(&params, &mesh, &grid).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = pool.install(|| assemble(&bg, &params, &mesh, &grid, &SIGMA).unwrap());
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = serial.install(|| assemble(&bg, &params, &mesh, &grid, &SIGMA).unwrap());
    assert_eq!(a.k, b.k);
}
