//! Finite-difference reference solver: L1 in time, central differences in
//! space, implicit in the newest level.
//!
//! Each step solves `(a_0 I - g L_h) u^n = g f^n + history`, where
//! `g = Γ(2-α) τ^α` and the history is the L1 sum over earlier levels.
//! Dirichlet values are pinned to the boundary data.

use std::io::Write;

use crate::caputo::{l1_weights, L2SigmaTable, TimeGrid};
use crate::error::{Error, Result};
use crate::problem::{FractionalIVP, SpatialOperator};
use crate::solver::tensor_nodes;

/// Values on a uniform space-time grid.
///
/// `values[n]` holds level `t_n` with spatial nodes flattened first axis
/// fastest, the same order as [`GridSolution::points`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    times: TimeGrid,
    axes: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl GridSolution {
    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    /// Node coordinates per spatial axis.
    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    /// Spatial nodes in storage order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        tensor_nodes(&self.axes)
    }

    pub fn level(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Value at time level `n` and per-axis node indices `idx`.
    pub fn value(&self, n: usize, idx: &[usize]) -> f64 {
        let mut flat = 0;
        let mut stride = 1;
        for (i, axis) in idx.iter().zip(&self.axes) {
            flat += i * stride;
            stride *= axis.len();
        }
        self.values[n][flat]
    }

    /// Largest `|u_h - u|` at level `n`, or `None` without an exact solution.
    pub fn max_abs_error_at(&self, problem: &FractionalIVP, n: usize) -> Option<f64> {
        let t = self.times.node(n);
        let exact = problem.exact()?;
        Some(self.points().iter().zip(&self.values[n]).map(|(x, v)| (v - (exact.u)(x, t)).abs()).fold(0.0, f64::max))
    }

    /// Largest `|u_h - u|` over the whole grid.
    pub fn max_abs_error(&self, problem: &FractionalIVP) -> Option<f64> {
        (0..self.values.len()).map(|n| self.max_abs_error_at(problem, n)).try_fold(0.0_f64, |m, e| e.map(|e| m.max(e)))
    }

    /// CSV with columns `t, x[, y], u`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let names = ["x", "y"];
        let mut header = vec!["t"];
        header.extend(&names[..self.axes.len()]);
        header.push("u");
        writeln!(w, "{}", header.join(","))?;
        let points = self.points();
        for (n, level) in self.values.iter().enumerate() {
            let t = self.times.node(n);
            for (x, u) in points.iter().zip(level) {
                let mut row = vec![t.to_string()];
                row.extend(x.iter().map(f64::to_string));
                row.push(u.to_string());
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Solves a tridiagonal system; `sub[0]` and `sup[n-1]` are ignored.
pub fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if sub.len() != n || sup.len() != n || rhs.len() != n {
        return Err(Error::InvalidArgument("tridiagonal bands and right-hand side differ in length".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    for i in 0..n {
        if i > 0 {
            denom = diag[i] - sub[i] * c[i - 1];
        }
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Domain(format!("zero pivot in tridiagonal solve at row {i}")));
        }
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - if i > 0 { sub[i] * d[i - 1] } else { 0.0 }) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Conjugate gradients for a symmetric positive definite operator.
///
/// Stops when `‖r‖ <= tol ‖b‖`; returns the solution and the iteration count.
pub fn conjugate_gradient<A>(apply: A, b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)>
where
    A: Fn(&[f64], &mut [f64]),
{
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut x = x0.to_vec();
    let mut ap = vec![0.0; n];
    apply(&x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..=max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        if it == max_iter {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Domain("operator is not positive definite".into()));
        }
        let step = rr / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::CgConvergence { iterations: max_iter, residual: rr.sqrt() / bnorm })
}

/// Coefficient `λ` of `L u = λ u` for ODE operators.
fn ode_coefficient(problem: &FractionalIVP) -> Result<f64> {
    if problem.spatial_dim() != 0 {
        return Err(Error::InvalidArgument("expected an ODE (no spatial axes)".into()));
    }
    Ok(match problem.operator() {
        SpatialOperator::NegIdentity => -1.0,
        _ => 0.0,
    })
}

/// Diffusion coefficient of `L = κ Δ` (zero for `L = 0`).
fn diffusion_coefficient(problem: &FractionalIVP, dim: usize) -> Result<f64> {
    if problem.spatial_dim() != dim {
        return Err(Error::InvalidArgument(format!(
            "expected {dim} spatial axes, problem has {}",
            problem.spatial_dim()
        )));
    }
    Ok(match problem.operator() {
        SpatialOperator::None => 0.0,
        _ => 1.0,
    })
}

/// L1 history `Σ_{k=1}^{n-1} (a_{n-k-1} - a_{n-k}) u^k + a_{n-1} u^0` at each node.
fn l1_history(a: &[f64], levels: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut h: Vec<f64> = levels[0].iter().map(|u| a[n - 1] * u).collect();
    for k in 1..n {
        let c = a[n - k - 1] - a[n - k];
        for (h, u) in h.iter_mut().zip(&levels[k]) {
            *h += c * u;
        }
    }
    h
}

fn axis_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    v[n - 1] = hi;
    v
}

/// Implicit L1 solve of a fractional ODE with `steps` uniform steps.
pub fn fdm_solve_fode(problem: &FractionalIVP, steps: usize) -> Result<GridSolution> {
    let lambda = ode_coefficient(problem)?;
    let grid = TimeGrid::new(problem.horizon(), steps)?;
    let alpha = problem.alpha();
    let a = l1_weights(alpha, steps)?;
    let a = a.as_slice();
    let g = alpha.gamma_two_minus() * grid.tau().powf(alpha.value());
    let mut values = vec![vec![problem.initial(&[])]];
    for n in 1..=steps {
        let h = l1_history(a, &values, n)[0];
        let u = (g * problem.forcing(&[], grid.node(n)) + h) / (a[0] - g * lambda);
        values.push(vec![u]);
    }
    Ok(GridSolution { times: grid, axes: vec![], values })
}

/// Implicit L2-1σ solve of a fractional ODE; the operator term at
/// `t_{n-1+σ}` is interpolated as `σ u^n + (1-σ) u^{n-1}`.
pub fn fdm_solve_fode_l2sigma(problem: &FractionalIVP, steps: usize) -> Result<GridSolution> {
    let lambda = ode_coefficient(problem)?;
    let grid = TimeGrid::new(problem.horizon(), steps)?;
    let alpha = problem.alpha();
    let sigma = alpha.sigma();
    let table = L2SigmaTable::new(alpha, steps)?;
    let g = alpha.gamma_two_minus() * grid.tau().powf(alpha.value());
    let mut u = vec![problem.initial(&[])];
    for n in 1..=steps {
        let c = table.row(n).as_slice();
        let mut rhs = c[0] * u[n - 1] + g * lambda * (1.0 - sigma) * u[n - 1];
        for k in 1..n {
            rhs -= c[k] * (u[n - k] - u[n - k - 1]);
        }
        rhs += g * problem.forcing(&[], grid.shifted(n, sigma));
        u.push(rhs / (c[0] - g * lambda * sigma));
    }
    Ok(GridSolution { times: grid, axes: vec![], values: u.into_iter().map(|v| vec![v]).collect() })
}

/// L1 / three-point stencil solve on an interval with `nt` time nodes and
/// `nx` spatial nodes (both counts include the endpoints).
pub fn fdm_solve_1d(problem: &FractionalIVP, nt: usize, nx: usize) -> Result<GridSolution> {
    let kappa = diffusion_coefficient(problem, 1)?;
    if nx < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 spatial nodes, got {nx}")));
    }
    if nt < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 time nodes, got {nt}")));
    }
    let steps = nt - 1;
    let grid = TimeGrid::new(problem.horizon(), steps)?;
    let (lo, hi) = problem.domain()[0];
    let xs = axis_nodes(lo, hi, nx);
    let h = (hi - lo) / (nx - 1) as f64;
    let alpha = problem.alpha();
    let a = l1_weights(alpha, steps)?;
    let a = a.as_slice();
    let g = alpha.gamma_two_minus() * grid.tau().powf(alpha.value());
    let r = g * kappa / (h * h);

    let m = nx - 2;
    let sub = vec![-r; m];
    let sup = vec![-r; m];
    let diag = vec![a[0] + 2.0 * r; m];

    let mut values = vec![xs.iter().map(|&x| problem.initial(&[x])).collect::<Vec<_>>()];
    for n in 1..=steps {
        let t = grid.node(n);
        let hist = l1_history(a, &values, n);
        let left = problem.boundary(&[xs[0]], t);
        let right = problem.boundary(&[xs[nx - 1]], t);
        let mut rhs: Vec<f64> = (1..=m).map(|i| g * problem.forcing(&[xs[i]], t) + hist[i]).collect();
        rhs[0] += r * left;
        rhs[m - 1] += r * right;
        let interior = thomas(&sub, &diag, &sup, &rhs)?;
        let mut level = Vec::with_capacity(nx);
        level.push(left);
        level.extend(interior);
        level.push(right);
        values.push(level);
    }
    Ok(GridSolution { times: grid, axes: vec![xs], values })
}

/// L1 / five-point stencil solve on a rectangle, `nx` nodes per axis; each
/// step is solved by conjugate gradients to relative residual `1e-12`.
pub fn fdm_solve_2d(problem: &FractionalIVP, nt: usize, nx: usize) -> Result<GridSolution> {
    let kappa = diffusion_coefficient(problem, 2)?;
    if nx < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 spatial nodes per axis, got {nx}")));
    }
    if nt < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 time nodes, got {nt}")));
    }
    let steps = nt - 1;
    let grid = TimeGrid::new(problem.horizon(), steps)?;
    let dom = problem.domain();
    let xs = axis_nodes(dom[0].0, dom[0].1, nx);
    let ys = axis_nodes(dom[1].0, dom[1].1, nx);
    let hx = (dom[0].1 - dom[0].0) / (nx - 1) as f64;
    let hy = (dom[1].1 - dom[1].0) / (nx - 1) as f64;
    let alpha = problem.alpha();
    let a = l1_weights(alpha, steps)?;
    let a = a.as_slice();
    let g = alpha.gamma_two_minus() * grid.tau().powf(alpha.value());
    let (rx, ry) = (g * kappa / (hx * hx), g * kappa / (hy * hy));

    let m = nx - 2;
    let idx = |i: usize, j: usize| j * nx + i;
    let inner = |i: usize, j: usize| (j - 1) * m + (i - 1);
    let apply = |v: &[f64], out: &mut [f64]| {
        for j in 1..=m {
            for i in 1..=m {
                let c = v[inner(i, j)];
                let mut s = (a[0] + 2.0 * rx + 2.0 * ry) * c;
                if i > 1 {
                    s -= rx * v[inner(i - 1, j)];
                }
                if i < m {
                    s -= rx * v[inner(i + 1, j)];
                }
                if j > 1 {
                    s -= ry * v[inner(i, j - 1)];
                }
                if j < m {
                    s -= ry * v[inner(i, j + 1)];
                }
                out[inner(i, j)] = s;
            }
        }
    };

    let mut values = Vec::with_capacity(nt);
    let mut first = vec![0.0; nx * nx];
    for j in 0..nx {
        for i in 0..nx {
            first[idx(i, j)] = problem.initial(&[xs[i], ys[j]]);
        }
    }
    values.push(first);
    let max_iter = 10 * nx * nx;
    for n in 1..=steps {
        let t = grid.node(n);
        let hist = l1_history(a, &values, n);
        let mut level = vec![0.0; nx * nx];
        for j in 0..nx {
            for i in 0..nx {
                if i == 0 || j == 0 || i == nx - 1 || j == nx - 1 {
                    level[idx(i, j)] = problem.boundary(&[xs[i], ys[j]], t);
                }
            }
        }
        let mut rhs = vec![0.0; m * m];
        for j in 1..=m {
            for i in 1..=m {
                let mut b = g * problem.forcing(&[xs[i], ys[j]], t) + hist[idx(i, j)];
                if i == 1 {
                    b += rx * level[idx(0, j)];
                }
                if i == m {
                    b += rx * level[idx(nx - 1, j)];
                }
                if j == 1 {
                    b += ry * level[idx(i, 0)];
                }
                if j == m {
                    b += ry * level[idx(i, nx - 1)];
                }
                rhs[inner(i, j)] = b;
            }
        }
        let start: Vec<f64> = (0..m * m).map(|k| values[n - 1][idx(k % m + 1, k / m + 1)]).collect();
        let (sol, _) = conjugate_gradient(apply, &rhs, &start, 1e-12, max_iter)?;
        for j in 1..=m {
            for i in 1..=m {
                level[idx(i, j)] = sol[inner(i, j)];
            }
        }
        values.push(level);
    }
    Ok(GridSolution { times: grid, axes: vec![xs, ys], values })
}

/// Dispatches on the spatial dimension; `nt` counts time nodes throughout.
pub fn fdm_solve(problem: &FractionalIVP, nt: usize, nx: usize) -> Result<GridSolution> {
    match problem.spatial_dim() {
        0 => {
            if nt < 2 {
                return Err(Error::InvalidArgument(format!("need at least 2 time nodes, got {nt}")));
            }
            fdm_solve_fode(problem, nt - 1)
        }
        1 => fdm_solve_1d(problem, nt, nx),
        _ => fdm_solve_2d(problem, nt, nx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{example1, example2, example3};
    use crate::caputo::FractionalOrder;

    fn half() -> FractionalOrder {
        FractionalOrder::new(0.5).unwrap()
    }

    #[test]
    fn fode_accuracy_and_refinement() {
        let p = example1(half());
        let e1024 = fdm_solve_fode(&p, 1024).unwrap().max_abs_error(&p).unwrap();
        let e2048 = fdm_solve_fode(&p, 2048).unwrap().max_abs_error(&p).unwrap();
        assert!(e1024 <= 5e-3, "{e1024}");
        assert!(e2048 < e1024);
        let s = fdm_solve_fode_l2sigma(&p, 256).unwrap().max_abs_error(&p).unwrap();
        assert!(s < e1024, "{s}");
    }

    #[test]
    fn zero_data_zero_solution() {
        let p0 = FractionalIVP::builder(half(), 1.0, vec![], SpatialOperator::NegIdentity).build().unwrap();
        assert!(fdm_solve_fode(&p0, 16).unwrap().levels().iter().all(|l| l[0] == 0.0));
        let p2 =
            FractionalIVP::builder(half(), 1.0, vec![(0.0, 1.0); 2], SpatialOperator::LaplacianXY).build().unwrap();
        let s = fdm_solve_2d(&p2, 5, 6).unwrap();
        assert!(s.levels().iter().flatten().all(|&u| u == 0.0));
    }

    #[test]
    fn one_d_contracts() {
        let p = example2(half());
        assert!(matches!(fdm_solve_1d(&p, 10, 2), Err(Error::InvalidArgument(_))));
        let s = fdm_solve_1d(&p, 512, 64).unwrap();
        let xs = &s.axes()[0];
        for (x, u) in xs.iter().zip(s.level(0)) {
            assert_eq!(*u, x * x);
        }
        for n in [0, 100, 511] {
            let t = s.times().node(n);
            assert_eq!(s.level(n)[0], p.boundary(&[0.0], t));
            assert_eq!(s.level(n)[63], p.boundary(&[1.0], t));
        }
        assert!(s.max_abs_error(&p).unwrap() <= 5e-2);
        let e_end = s.max_abs_error_at(&p, 511).unwrap();
        assert!(e_end <= 5e-3, "{e_end}");
        let coarse = fdm_solve_1d(&p, 64, 64).unwrap().max_abs_error_at(&p, 63).unwrap();
        assert!(e_end < coarse);
    }

    #[test]
    fn two_d_accuracy() {
        let p = example3(half());
        let s = fdm_solve_2d(&p, 257, 33).unwrap();
        let e = s.max_abs_error_at(&p, 256).unwrap();
        assert!(e <= 1e-2, "{e}");
        assert!(matches!(fdm_solve_2d(&example2(half()), 5, 5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn csv_layout() {
        let p = example2(half());
        let s = fdm_solve_1d(&p, 3, 3).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,u");
        assert_eq!(lines.len(), 1 + 9);
        assert_eq!(lines[2], "0,0.5,0.25");
    }

    #[test]
    fn cg_reports_nonconvergence() {
        let apply = |v: &[f64], out: &mut [f64]| {
            for (i, (o, x)) in out.iter_mut().zip(v).enumerate() {
                *o = (i + 1) as f64 * x;
            }
        };
        let b = vec![1.0; 6];
        assert!(matches!(
            conjugate_gradient(apply, &b, &[0.0; 6], 1e-12, 2),
            Err(Error::CgConvergence { iterations: 2, .. })
        ));
        let (x, it) = conjugate_gradient(apply, &b, &[0.0; 6], 1e-12, 60).unwrap();
        assert!(it <= 6);
        assert!((x[5] - 1.0 / 6.0).abs() < 1e-12);
    }
}
