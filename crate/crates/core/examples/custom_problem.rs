//! A user-defined problem: D^α u = Γ(3)/Γ(3-α) t^(2-α) with u(0) = 0, whose
//! solution is t². Trains a small network, then saves and reloads it.

use pmnn::caputo::{gamma_fn, FractionalOrder};
use pmnn::neural::{forward, NetworkParams, NetworkSpec};
use pmnn::problem::{ExactSolution, FractionalIVP, SpatialOperator};
use pmnn::solver::{train, Scheme, TrainConfig};
use std::sync::Arc;

fn main() -> pmnn::Result<()> {
    let alpha = FractionalOrder::new(0.3)?;
    let c = gamma_fn(3.0)? / gamma_fn(3.0 - alpha.value())?;
    let a = alpha.value();
    let problem = FractionalIVP::builder(alpha, 1.0, vec![], SpatialOperator::None)
        .forcing(move |_, t| c * t.powf(2.0 - a))
        .exact(ExactSolution {
            u: Arc::new(|_: &[f64], t: f64| t * t),
            spatial_d2: Arc::new(|_: &[f64], _: f64| vec![]),
        })
        .build()?;

    let config = TrainConfig { nt: 21, network: Some(NetworkSpec::new(1, 2, 10)?), ..TrainConfig::default() };
    let (params, report) = train(&problem, Scheme::L2Sigma, &config)?;
    println!("L2 relative error {:.3e} after {} iterations", report.l2_relative_error.unwrap(), report.iterations);

    let mut snapshot = Vec::new();
    params.write_snapshot(&mut snapshot)?;
    let reloaded = NetworkParams::read_snapshot(snapshot.as_slice())?;
    println!("u(0.5) = {:.6} (exact 0.25), snapshot of {} bytes", forward(&reloaded, &[0.5])?, snapshot.len());
    Ok(())
}
