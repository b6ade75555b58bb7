//! Trains both schemes on the fractional ODE with solution t^(5+α).

use pmnn::benchmarks::ExampleId;
use pmnn::caputo::FractionalOrder;
use pmnn::solver::{train, Scheme, TrainConfig};

fn main() -> pmnn::Result<()> {
    let problem = ExampleId::Fode1.build(FractionalOrder::new(0.5)?);
    let config = TrainConfig { nt: 41, seed: 42, ..TrainConfig::default() };
    for scheme in Scheme::ALL {
        let (_, report) = train(&problem, scheme, &config)?;
        println!(
            "{scheme:8} iters {:5}  loss {:.3e}  L2 rel error {:.3e}  ({:.1} s, {:?})",
            report.iterations,
            report.final_losses.total,
            report.l2_relative_error.unwrap_or(f64::NAN),
            report.wall_time_s,
            report.status,
        );
    }
    Ok(())
}
