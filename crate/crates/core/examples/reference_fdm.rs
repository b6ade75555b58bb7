//! Finite-difference reference solutions of the three benchmarks.

use pmnn::benchmarks::ExampleId;
use pmnn::caputo::FractionalOrder;
use pmnn::fdm::{fdm_solve, fdm_solve_fode_l2sigma};

fn main() -> pmnn::Result<()> {
    let alpha = FractionalOrder::new(0.5)?;
    let ode = ExampleId::Fode1.build(alpha);
    for nt in [65, 129, 257, 513] {
        let l1 = fdm_solve(&ode, nt, 0)?.max_abs_error(&ode).unwrap();
        let l2 = fdm_solve_fode_l2sigma(&ode, nt - 1)?.max_abs_error(&ode).unwrap();
        println!("example 1  nt {nt:4}  L1 {l1:.3e}  L2-1σ {l2:.3e}");
    }
    for (example, nx) in [(ExampleId::Conv1D, 65), (ExampleId::Conv2D, 17)] {
        let p = example.build(alpha);
        for nt in [33, 65, 129] {
            let s = fdm_solve(&p, nt, nx)?;
            let end = s.max_abs_error_at(&p, nt - 1).unwrap();
            println!(
                "example {example}  nt {nt:4}  nx {nx}  error at T {end:.3e}  overall {:.3e}",
                s.max_abs_error(&p).unwrap()
            );
        }
    }
    Ok(())
}
