//! Trains both schemes on the 1D and 2D subdiffusion benchmarks.

use pmnn::benchmarks::ExampleId;
use pmnn::caputo::FractionalOrder;
use pmnn::solver::{train, Scheme, TrainConfig};

fn main() -> pmnn::Result<()> {
    let alpha = FractionalOrder::new(0.5)?;
    for (example, nt) in [(ExampleId::Conv1D, 41), (ExampleId::Conv2D, 21)] {
        let problem = example.build(alpha);
        let config = TrainConfig { nt, nx: 11, seed: 42, ..TrainConfig::default() };
        for scheme in Scheme::ALL {
            let (_, report) = train(&problem, scheme, &config)?;
            println!(
                "example {example} {scheme:8} iters {:5}  loss {:.3e}  L2 rel error {:.3e}  ({:.1} s)",
                report.iterations,
                report.final_losses.total,
                report.l2_relative_error.unwrap_or(f64::NAN),
                report.wall_time_s,
            );
        }
    }
    Ok(())
}
