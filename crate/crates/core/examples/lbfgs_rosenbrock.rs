//! The optimizer on its own: L-BFGS with a strong Wolfe line search on the
//! Rosenbrock function.

use pmnn::neural::{lbfgs_minimize, LbfgsConfig};

fn main() -> pmnn::Result<()> {
    let rosenbrock = |x: &[f64]| {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    };
    let result = lbfgs_minimize(rosenbrock, vec![-1.2, 1.0], &LbfgsConfig::default())?;
    println!("status {:?} after {} iterations ({} evaluations)", result.status, result.iterations, result.evaluations);
    println!("x = {:?}, f = {:.3e}", result.x, result.loss);
    Ok(())
}
