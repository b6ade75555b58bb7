//! L1 and L2-1σ weights, and both approximations of D^α t³ against the
//! closed form.

use pmnn::caputo::{caputo_l1, caputo_l2sigma, caputo_power_oracle, l1_weights, l2sigma_weight_row, FractionalOrder};

fn main() -> pmnn::Result<()> {
    let alpha = FractionalOrder::new(0.5)?;
    println!("L1 weights:     {:?}", l1_weights(alpha, 5)?.as_slice());
    println!("L2-1σ row n=5:  {:?}", l2sigma_weight_row(alpha, 5)?.as_slice());

    println!("\n   N   L1 error      L2-1σ error");
    for n in [8, 16, 32, 64, 128] {
        let tau = 1.0 / n as f64;
        let samples: Vec<f64> = (0..=n).map(|k| (k as f64 * tau).powi(3)).collect();
        let l1 = caputo_l1(&samples, alpha, tau)?;
        let l2 = caputo_l2sigma(&samples, alpha, tau)?;
        let e1 = (l1 - caputo_power_oracle(3.0, alpha, 1.0)?).abs();
        let e2 = (l2 - caputo_power_oracle(3.0, alpha, 1.0 - (1.0 - alpha.sigma()) * tau)?).abs();
        println!("{n:4}   {e1:.3e}     {e2:.3e}");
    }
    Ok(())
}
