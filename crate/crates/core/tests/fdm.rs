use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pmnn::benchmarks::{example1, example2, example3};
use pmnn::caputo::{gamma_fn, FractionalOrder};
use pmnn::fdm::*;
use pmnn::problem::{FractionalIVP, SpatialOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn half() -> FractionalOrder {
    FractionalOrder::new(0.5).unwrap()
}

#[test]
fn thomas_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let n = 8;
        let sub: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let sup: Vec<f64> = (0..n).map(|i| if i == n - 1 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.5 + sub[i].abs() + sup[i].abs() * rng.random::<f64>()).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let a = DMatrix::from_fn(n, n, |i, j| match j as isize - i as isize {
            0 => diag[i],
            -1 => sub[i],
            1 => sup[i],
            _ => 0.0,
        });
        let dense = a.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        let x = thomas(&sub, &diag, &sup, &rhs).unwrap();
        for (u, v) in x.iter().zip(dense.iter()) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }
}

#[test]
fn conjugate_gradient_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let n = 8;
        let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = q.transpose() * &q + DMatrix::identity(n, n);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let dense = a.clone().cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
        let apply = |v: &[f64], out: &mut [f64]| {
            let r = &a * DVector::from_column_slice(v);
            out.copy_from_slice(r.as_slice());
        };
        let (x, _) = conjugate_gradient(apply, &b, &[0.0; 8], 1e-14, 10 * n * n).unwrap();
        for (u, v) in x.iter().zip(dense.iter()) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }
}

#[test]
fn plane_embedding_matches_line_solve() {
    let p1 = example2(half());
    let (nt, nx) = (33, 9);
    let line = Arc::new(fdm_solve_1d(&p1, nt, nx).unwrap());
    let tau = line.times().tau();
    let h = 1.0 / (nx - 1) as f64;
    let c = 2.0 / gamma_fn(1.5).unwrap();
    // the y-faces carry the 1D discrete solution so that nothing varies in y
    let mu = {
        let line = Arc::clone(&line);
        move |x: &[f64], t: f64| {
            if x[0] == 0.0 || x[0] == 1.0 {
                x[0] * x[0] + c * t.sqrt()
            } else {
                line.value((t / tau).round() as usize, &[(x[0] / h).round() as usize])
            }
        }
    };
    let p2 = FractionalIVP::builder(half(), 1.0, vec![(0.0, 1.0); 2], SpatialOperator::LaplacianXY)
        .initial(|x| x[0] * x[0])
        .boundary(mu)
        .build()
        .unwrap();
    let plane = fdm_solve_2d(&p2, nt, nx).unwrap();
    let mut worst = 0.0_f64;
    for n in 0..nt {
        for j in 0..nx {
            for i in 0..nx {
                worst = worst.max((plane.value(n, &[i, j]) - line.value(n, &[i])).abs());
            }
        }
    }
    assert!(worst < 1e-10, "{worst:e}");
}

#[test]
fn halving_tau_never_hurts_at_final_time() {
    let fode = example1(half());
    let mut last = f64::INFINITY;
    for steps in [32, 64, 128, 256, 512] {
        let s = fdm_solve_fode(&fode, steps).unwrap();
        let e = s.max_abs_error_at(&fode, steps).unwrap();
        assert!(e <= last, "L1 FODE, N = {steps}: {e} after {last}");
        last = e;
    }
    let mut last = f64::INFINITY;
    for steps in [32, 64, 128, 256, 512] {
        let s = fdm_solve_fode_l2sigma(&fode, steps).unwrap();
        let e = s.max_abs_error_at(&fode, steps).unwrap();
        assert!(e <= last, "L2-1σ FODE, N = {steps}: {e} after {last}");
        last = e;
    }

    let line = example2(half());
    let mut last = f64::INFINITY;
    for nt in [17, 33, 65, 129] {
        let e = fdm_solve_1d(&line, nt, 33).unwrap().max_abs_error_at(&line, nt - 1).unwrap();
        assert!(e <= last, "1D, nt = {nt}: {e} after {last}");
        last = e;
    }

    let plane = example3(half());
    let mut last = f64::INFINITY;
    for nt in [9, 17, 33, 65] {
        let e = fdm_solve_2d(&plane, nt, 41).unwrap().max_abs_error_at(&plane, nt - 1).unwrap();
        assert!(e <= last, "2D, nt = {nt}: {e} after {last}");
        last = e;
    }
}

#[test]
fn initial_and_boundary_levels_are_pinned() {
    let p = example3(half());
    let s = fdm_solve(&p, 9, 7).unwrap();
    let points = s.points();
    for (n, level) in s.levels().iter().enumerate() {
        let t = s.times().node(n);
        for (x, &u) in points.iter().zip(level) {
            if n == 0 {
                assert_eq!(u, p.initial(x));
            } else if p.on_boundary(x) {
                assert_eq!(u, p.boundary(x, t));
            }
        }
    }
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("t,x,y,u"));
    assert_eq!(text.lines().count(), 1 + 9 * 49);

    let fode = fdm_solve(&example1(half()), 11, 0).unwrap();
    assert_eq!(fode.levels().len(), 11);
    assert!(fdm_solve(&example1(half()), 1, 0).is_err());
}
