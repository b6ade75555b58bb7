//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use pmnn::bench::median;
use pmnn::benchmarks::{example2, ExampleId};
use pmnn::caputo::*;
use pmnn::fdm::fdm_solve_1d;
use pmnn::neural::*;
use pmnn::problem::FractionalIVP;
use pmnn::solver::{train, Scheme, SolveReport, Surrogate, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type RunKey = (u8, Scheme, usize, usize, u64);
type Check = Box<dyn FnMut(&mut Runs) -> Outcome>;

fn order(a: f64) -> FractionalOrder {
    FractionalOrder::new(a).unwrap()
}

fn half() -> FractionalOrder {
    order(0.5)
}

/// Trained runs keyed by (example, scheme, nt, nx, seed).
#[derive(Default)]
struct Runs(BTreeMap<RunKey, (NetworkParams, SolveReport)>);

impl Runs {
    fn get(
        &mut self,
        example: ExampleId,
        scheme: Scheme,
        nt: usize,
        nx: usize,
        seed: u64,
    ) -> &(NetworkParams, SolveReport) {
        self.0.entry((example.number(), scheme, nt, nx, seed)).or_insert_with(|| {
            let p = example.build(half());
            let config = TrainConfig { nt, nx, seed, ..TrainConfig::default() };
            train(&p, scheme, &config).unwrap()
        })
    }

    fn error(&mut self, example: ExampleId, scheme: Scheme, nt: usize, nx: usize, seed: u64) -> f64 {
        self.get(example, scheme, nt, nx, seed).1.l2_relative_error.unwrap()
    }
}

fn order_fit(l2: bool, a: f64, p: i32) -> f64 {
    let alpha = order(a);
    let ns = [64, 128, 256, 512];
    let taus: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    let errs: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let tau = 1.0 / n as f64;
            let s: Vec<f64> = (0..=n).map(|k| (k as f64 * tau).powi(p)).collect();
            if l2 {
                let t = (n as f64 - 1.0 + alpha.sigma()) * tau;
                (caputo_l2sigma(&s, alpha, tau).unwrap() - caputo_power_oracle(p as f64, alpha, t).unwrap()).abs()
            } else {
                (caputo_l1(&s, alpha, tau).unwrap() - caputo_power_oracle(p as f64, alpha, 1.0).unwrap()).abs()
            }
        })
        .collect();
    fitted_order(&taus, &errs).unwrap()
}

fn criterion_orders(l2: bool) -> Outcome {
    let (p, nominal, slack) = if l2 { (4, 3.0, 0.3) } else { (3, 2.0, 0.25) };
    let mut ok = true;
    let mut parts = Vec::new();
    for a in [0.25, 0.5, 0.75] {
        let fit = order_fit(l2, a, p);
        ok &= (fit - (nominal - a)).abs() <= slack;
        parts.push(format!("α={a}: {fit:.3} (expect {:.2})", nominal - a));
    }
    (ok, parts.join(", "))
}

fn criterion_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut w_aff, mut w_quad, mut w_const) = (0.0_f64, 0.0_f64, 0.0_f64);
    for a in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let alpha = order(a);
        for n in (1..=256).step_by(5).chain([256]) {
            let tau = rng.random_range(0.1..3.0) / n as f64;
            let horizon = n as f64 * tau;
            let (c0, c1, c2) = (rng.random_range(-5.0..5.0), rng.random_range(0.5..5.0), rng.random_range(0.5..5.0));
            let s: Vec<f64> = (0..=n).map(|k| c0 + c1 * k as f64 * tau).collect();
            let exact = c1 * caputo_power_oracle(1.0, alpha, horizon).unwrap();
            w_aff = w_aff.max((caputo_l1(&s, alpha, tau).unwrap() - exact).abs() / exact.abs());

            let q: Vec<f64> = (0..=n).map(|k| c0 + c1 * k as f64 * tau + c2 * (k as f64 * tau).powi(2)).collect();
            let t = (n as f64 - 1.0 + alpha.sigma()) * tau;
            let exact =
                c1 * caputo_power_oracle(1.0, alpha, t).unwrap() + c2 * caputo_power_oracle(2.0, alpha, t).unwrap();
            w_quad = w_quad.max((caputo_l2sigma(&q, alpha, tau).unwrap() - exact).abs() / exact.abs());

            let k = vec![c0; n + 1];
            w_const = w_const
                .max(caputo_l1(&k, alpha, tau).unwrap().abs())
                .max(caputo_l2sigma(&k, alpha, tau).unwrap().abs());
        }
    }
    (
        w_aff <= 1e-12 && w_quad <= 1e-10 && w_const <= 1e-13,
        format!("L1 affine rel {w_aff:.1e}, L2-1σ quadratic rel {w_quad:.1e}, constants abs {w_const:.1e}"),
    )
}

fn criterion_autodiff() -> Outcome {
    let (mut worst_u, mut worst_uxx, mut worst_jet) = (0.0_f64, 0.0_f64, 0.0_f64);
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..=3);
        let spec = NetworkSpec::new(dim, rng.random_range(1..=3), rng.random_range(2..=8)).unwrap();
        let mut params = init_params(spec, seed);
        for v in params.flat_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        let points: Vec<f64> = (0..3 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tracked: Vec<usize> = (0..dim).collect();

        for (w, worst) in [(0.0, &mut worst_u), (0.1, &mut worst_uxx)] {
            let plain = |q: &NetworkParams| -> f64 {
                points
                    .chunks(dim)
                    .map(|p| {
                        let j = forward_jet(q, p, &tracked).unwrap();
                        let lap: f64 = j.d2.iter().sum();
                        (j.value - 0.3).powi(2) + 0.5 * j.d1[0].powi(2) + w * lap * lap
                    })
                    .sum::<f64>()
                    / 3.0
            };
            let (_, grad) = loss_gradient(&params, |tape| {
                let jets = tape.network(&points, &tracked)?;
                let terms: Vec<Var> = jets
                    .iter()
                    .map(|j| {
                        let e = tape.affine(&[(j.value, 1.0)], -0.3);
                        let e2 = tape.square(e);
                        let dx = tape.square(j.d1[0]);
                        let lap: Vec<(Var, f64)> = j.d2.iter().map(|&v| (v, 1.0)).collect();
                        let lap = tape.affine(&lap, 0.0);
                        let lap2 = tape.square(lap);
                        tape.affine(&[(e2, 1.0), (dx, 0.5), (lap2, w)], 0.0)
                    })
                    .collect();
                Ok(tape.mean(&terms))
            })
            .unwrap();
            for (i, g) in grad.iter().enumerate() {
                if g.abs() <= 1e-8 {
                    continue;
                }
                let at = |d: f64| {
                    let mut q = params.clone();
                    q.flat_mut()[i] += d;
                    plain(&q)
                };
                let h = 1e-4;
                let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
                *worst = worst.max((g - fd).abs() / g.abs());
            }
        }

        for p in points.chunks(dim) {
            let jet = forward_jet(&params, p, &tracked).unwrap();
            for i in 0..dim {
                let at = |d: f64| {
                    let mut q = p.to_vec();
                    q[i] += d;
                    forward(&params, &q).unwrap()
                };
                let (h1, h2) = (1e-3, 2e-3);
                let d1 = (-at(2.0 * h1) + 8.0 * at(h1) - 8.0 * at(-h1) + at(-2.0 * h1)) / (12.0 * h1);
                let d2 = (-at(2.0 * h2) + 16.0 * at(h2) - 30.0 * at(0.0) + 16.0 * at(-h2) - at(-2.0 * h2))
                    / (12.0 * h2 * h2);
                let scale = jet.value.abs().max(1.0);
                for (exact, fd, noise) in
                    [(jet.d1[i], d1, 8.0 * f64::EPSILON / h1), (jet.d2[i], d2, 32.0 * f64::EPSILON / (h2 * h2))]
                {
                    worst_jet = worst_jet.max((exact - fd).abs() / exact.abs().max(noise * scale));
                }
            }
        }
    }
    (
        worst_u < 1e-5 && worst_uxx < 1e-4 && worst_jet < 1e-6,
        format!("gradients rel {worst_u:.1e} (u, u_x), {worst_uxx:.1e} (with u_xx); jets rel {worst_jet:.1e}"),
    )
}

fn criterion_optimizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 10;
    let q: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n).map(|j| (0..n).map(|k| q[k][i] * q[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let quad = |x: &[f64]| {
        let ax: Vec<f64> = a.iter().map(|row| row.iter().zip(x).map(|(a, x)| a * x).sum()).collect();
        Ok((0.5 * ax.iter().zip(x).map(|(a, x)| a * x).sum::<f64>(), ax))
    };
    let config =
        LbfgsConfig { grad_tolerance: 1e-11, loss_rel_tolerance: 1e-300, wolfe_c2: 0.1, ..LbfgsConfig::default() };
    let r = lbfgs_minimize(quad, vec![1.0; n], &config).unwrap();
    let gnorm = r.grad.iter().map(|g| g * g).sum::<f64>().sqrt();

    let rosen = |x: &[f64]| {
        let (a, b) = (x[0], x[1]);
        Ok((
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
            vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
        ))
    };
    let s = lbfgs_minimize(rosen, vec![-1.2, 1.0], &LbfgsConfig::default()).unwrap();
    let dist = (s.x[0] - 1.0).abs().max((s.x[1] - 1.0).abs());
    (
        gnorm < 1e-10 && r.iterations <= 30 && dist < 1e-6 && s.iterations <= 200,
        format!(
            "quadratic |g| {gnorm:.1e} after {} iterations; Rosenbrock distance {dist:.1e} after {} iterations",
            r.iterations, s.iterations
        ),
    )
}

fn criterion_example(runs: &mut Runs, example: ExampleId, nt: usize, nx: usize, bound: f64) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for scheme in Scheme::ALL {
        let (_, r) = runs.get(example, scheme, nt, nx, 42);
        let e = r.l2_relative_error.unwrap();
        ok &= e <= bound;
        parts.push(format!("{scheme} {e:.3e} ({} iterations, {:.1} s)", r.iterations, r.wall_time_s));
    }
    (ok, format!("{} (bound {bound:.0e})", parts.join(", ")))
}

fn criterion_refinement(runs: &mut Runs) -> Outcome {
    let coarse: Vec<f64> = (1..=3).map(|s| runs.error(ExampleId::Fode1, Scheme::L1, 11, 0, s)).collect();
    let fine: Vec<f64> = (1..=3).map(|s| runs.error(ExampleId::Fode1, Scheme::L1, 81, 0, s)).collect();
    let (c, f) = (median(&coarse), median(&fine));
    (f < c, format!("median error N_t=11: {c:.3e}, N_t=81: {f:.3e}"))
}

fn criterion_spatial(runs: &mut Runs) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for scheme in Scheme::ALL {
        let errs: Vec<f64> =
            [6, 11, 21, 41].iter().map(|&nx| runs.error(ExampleId::Conv1D, scheme, 41, nx, 42)).collect();
        let ratio = errs.iter().cloned().fold(0.0, f64::max) / errs.iter().cloned().fold(f64::INFINITY, f64::min);
        ok &= ratio < 3.0;
        let cells: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
        parts.push(format!("{scheme} [{}] ratio {ratio:.2}", cells.join(", ")));
    }
    (ok, parts.join("; "))
}

fn criterion_oracle(runs: &mut Runs) -> Outcome {
    let p = example2(half());
    let (nt, nx) = (41, 11);
    let fdm = fdm_solve_1d(&p, nt, nx).unwrap();
    let points = fdm.points();
    let exact = p.exact().unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for scheme in Scheme::ALL {
        let (params, _) = runs.get(ExampleId::Conv1D, scheme, nt, nx, 42);
        let (mut gap, mut e_net, mut e_fdm) = (0.0_f64, 0.0_f64, 0.0_f64);
        for n in 0..nt {
            let t = fdm.times().node(n);
            let inputs: Vec<f64> = points.iter().flat_map(|x| [x[0], t]).collect();
            let net = params.values(&inputs).unwrap();
            for ((x, &u_h), u_n) in points.iter().zip(fdm.level(n)).zip(net) {
                let u = (exact.u)(x, t);
                gap = gap.max((u_n - u_h).abs());
                e_net = e_net.max((u_n - u).abs());
                e_fdm = e_fdm.max((u_h - u).abs());
            }
        }
        ok &= gap <= 3.0 * (e_net + e_fdm);
        parts.push(format!("{scheme}: gap {gap:.2e} vs 3×({e_net:.2e} + {e_fdm:.2e})"));
    }
    (ok, parts.join("; "))
}

/// Caputo derivative of each exact solution from the power oracle.
fn caputo_exact(example: ExampleId, alpha: FractionalOrder, x: &[f64], t: f64) -> f64 {
    let a = alpha.value();
    match example {
        ExampleId::Fode1 => caputo_power_oracle(5.0 + a, alpha, t).unwrap(),
        ExampleId::Conv1D => 2.0 / gamma_fn(1.0 + a).unwrap() * caputo_power_oracle(a, alpha, t).unwrap(),
        ExampleId::Conv2D => (x[0] + x[1]).exp() * caputo_power_oracle(2.0, alpha, t).unwrap(),
    }
}

fn criterion_self_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0_f64;
    for example in ExampleId::ALL {
        for a in [0.25, 0.5, 0.75] {
            let p: FractionalIVP = example.build(order(a));
            let exact = p.exact().unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = p.domain().iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
                let t = rng.random_range(0.0..p.horizon());
                let rhs = exact.apply_operator(p.operator(), &x, t) + p.forcing(&x, t);
                worst = worst.max((caputo_exact(example, p.alpha(), &x, t) - rhs).abs());
            }
        }
    }
    (worst <= 1e-11, format!("worst residual {worst:.1e} over 3 examples × 3 orders × 20 points"))
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut runs = Runs::default();
    let criteria: Vec<(usize, &str, Check)> = vec![
        (1, "L1 convergence order", Box::new(|_| criterion_orders(false))),
        (2, "L2-1σ convergence order", Box::new(|_| criterion_orders(true))),
        (3, "quadrature exactness", Box::new(|_| criterion_exactness())),
        (4, "autodiff against finite differences", Box::new(|_| criterion_autodiff())),
        (5, "optimizer sanity", Box::new(|_| criterion_optimizer())),
        (6, "Example 1 accuracy", Box::new(|r| criterion_example(r, ExampleId::Fode1, 41, 0, 5e-2))),
        (7, "Example 2 accuracy", Box::new(|r| criterion_example(r, ExampleId::Conv1D, 41, 11, 2e-2))),
        (8, "Example 3 accuracy", Box::new(|r| criterion_example(r, ExampleId::Conv2D, 21, 11, 5e-3))),
        (9, "refinement in time", Box::new(criterion_refinement)),
        (10, "insensitivity to N_x", Box::new(criterion_spatial)),
        (11, "agreement with the finite-difference oracle", Box::new(criterion_oracle)),
        (12, "equation self-consistency", Box::new(|_| criterion_self_consistency())),
    ];
    let mut failed = 0;
    for (id, name, mut check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = check(&mut runs);
        failed += usize::from(!ok);
        println!(
            "{} criterion {id:>2} ({name}): {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
