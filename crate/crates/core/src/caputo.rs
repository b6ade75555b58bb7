//! Discretizations of the Caputo time derivative of order `0 < alpha < 1`.
//!
//! Two uniform-grid quadratures are provided:
//!
//! * the **L1** formula, built from piecewise-linear interpolation and
//!   evaluated at grid nodes `t_n`, order `2 - alpha`;
//! * the **L2-1σ** formula, built from quadratic interpolation and evaluated
//!   at the shifted point `t_{n-1+σ}` with `σ = 1 - alpha/2`, order
//!   `3 - alpha`.
//!
//! Both share the prefactor `tau^(-alpha) / Γ(2 - alpha)`. Weight tables
//! are plain immutable values so one table can back every evaluation of a
//! training run.
//!
//! The module also carries two reference evaluations of the continuous
//! derivative: the closed form for monomials and an adaptive quadrature of
//! the defining integral.

use crate::error::{Error, Result};

/// Euler's gamma function for positive arguments.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("gamma_fn requires a finite x > 0, got {x}")));
    }
    Ok(libm::tgamma(x))
}

/// Fractional order `alpha`, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Domain(format!("fractional order must lie in the open interval (0, 1), got {alpha}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `σ = 1 - alpha/2`, the superconvergent offset of the L2-1σ formula.
    #[inline]
    pub fn sigma(self) -> f64 {
        1.0 - 0.5 * self.0
    }

    /// `Γ(2 - alpha)`.
    pub fn gamma_two_minus(self) -> f64 {
        libm::tgamma(2.0 - self.0)
    }

    /// Prefactor `tau^(-alpha) / Γ(2 - alpha)` shared by both quadratures.
    pub fn scale(self, tau: f64) -> f64 {
        tau.powf(-self.0) / self.gamma_two_minus()
    }
}

/// Uniform time grid `t_k = k * tau` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    tau: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        let tau = horizon / steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|k| k as f64 * tau).collect();
        nodes[steps] = horizon;
        Ok(Self { horizon, steps, tau, nodes })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `N` (the grid has `N + 1` nodes).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// Shifted evaluation time `t_{n-1+σ}` used by the L2-1σ formula.
    pub fn shifted(&self, n: usize, sigma: f64) -> f64 {
        (n as f64 - 1.0 + sigma) * self.tau
    }
}

/// Above this index the L1 weight is evaluated through `expm1`/`ln_1p` to
/// avoid cancellation between two nearly equal powers.
const L1_CANCELLATION_SWITCH: usize = 10_000;

/// L1 weights `a_l = (l+1)^(1-alpha) - l^(1-alpha)` for `l = 0..count`.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Weights {
    alpha: FractionalOrder,
    a: Vec<f64>,
}

impl L1Weights {
    pub fn alpha(&self) -> FractionalOrder {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    pub fn get(&self, l: usize) -> f64 {
        self.a[l]
    }

    /// Coefficient of `f(t_k)` (for `1 <= k <= n-1`) in the bracket of the L1
    /// formula at `t_n`, i.e. `a_{n-k-1} - a_{n-k}`.
    #[inline]
    pub fn history_coefficient(&self, n: usize, k: usize) -> f64 {
        self.a[n - k - 1] - self.a[n - k]
    }
}

fn l1_weight(beta: f64, l: usize) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let lf = l as f64;
    if l > L1_CANCELLATION_SWITCH {
        lf.powf(beta) * (beta * (1.0 / lf).ln_1p()).exp_m1()
    } else {
        (lf + 1.0).powf(beta) - lf.powf(beta)
    }
}

pub fn l1_weights(alpha: FractionalOrder, count: usize) -> Result<L1Weights> {
    if count == 0 {
        return Err(Error::InvalidArgument("l1_weights needs count >= 1".into()));
    }
    let beta = 1.0 - alpha.value();
    let a = (0..count).map(|l| l1_weight(beta, l)).collect();
    Ok(L1Weights { alpha, a })
}

fn require_samples(samples: &[f64], tau: f64) -> Result<usize> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Caputo quadrature needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {tau}")));
    }
    Ok(samples.len() - 1)
}

/// L1 approximation of the Caputo derivative at `t_n`, given samples
/// `f(t_0), ..., f(t_n)` on a uniform grid with step `tau`.
pub fn caputo_l1(samples: &[f64], alpha: FractionalOrder, tau: f64) -> Result<f64> {
    let n = require_samples(samples, tau)?;
    let weights = l1_weights(alpha, n)?;
    Ok(caputo_l1_with(&weights, samples, tau))
}

/// Same as [`caputo_l1`] with a precomputed weight table (`weights.len() >= n`).
pub fn caputo_l1_with(weights: &L1Weights, samples: &[f64], tau: f64) -> f64 {
    // summed by parts, Σ_k a_k (f_{n-k} - f_{n-k-1}), so constants cancel exactly
    let n = samples.len() - 1;
    let a = weights.as_slice();
    let acc: f64 = (0..n).map(|k| a[k] * (samples[n - k] - samples[n - k - 1])).sum();
    weights.alpha.scale(tau) * acc
}

/// One row `c_k^{(n, alpha)}, k = 0..n` of the L2-1σ coefficient table.
#[derive(Debug, Clone, PartialEq)]
pub struct L2SigmaWeightRow {
    alpha: FractionalOrder,
    n: usize,
    c: Vec<f64>,
}

impl L2SigmaWeightRow {
    pub fn alpha(&self) -> FractionalOrder {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.alpha.sigma()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    pub fn get(&self, k: usize) -> f64 {
        self.c[k]
    }
}

pub fn l2sigma_weight_row(alpha: FractionalOrder, n: usize) -> Result<L2SigmaWeightRow> {
    if n == 0 {
        return Err(Error::InvalidArgument("l2sigma_weight_row needs n >= 1".into()));
    }
    let a = alpha.value();
    let s = alpha.sigma();
    let p1 = 1.0 - a;
    let p2 = 2.0 - a;
    if n == 1 {
        return Ok(L2SigmaWeightRow { alpha, n, c: vec![s.powf(p1)] });
    }

    let mut c = Vec::with_capacity(n);
    c.push(((1.0 + s).powf(p2) - s.powf(p2)) / p2 - ((1.0 + s).powf(p1) - s.powf(p1)) / 2.0);
    for k in 1..n - 1 {
        let k = k as f64;
        let second_diff = |p: f64| (k + 1.0 + s).powf(p) - 2.0 * (k + s).powf(p) + (k - 1.0 + s).powf(p);
        c.push(second_diff(p2) / p2 - second_diff(p1) / 2.0);
    }
    let m = (n - 1) as f64;
    c.push((3.0 * (m + s).powf(p1) - (m - 1.0 + s).powf(p1)) / 2.0 - ((m + s).powf(p2) - (m - 1.0 + s).powf(p2)) / p2);
    Ok(L2SigmaWeightRow { alpha, n, c })
}

/// Triangular table of L2-1σ rows `1..=n_max`, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct L2SigmaTable {
    rows: Vec<L2SigmaWeightRow>,
}

impl L2SigmaTable {
    pub fn new(alpha: FractionalOrder, n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidArgument("L2-1σ table needs at least one row".into()));
        }
        let rows = (1..=n_max).map(|n| l2sigma_weight_row(alpha, n)).collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn n_max(&self) -> usize {
        self.rows.len()
    }

    /// Row for time level `n` (1-based).
    pub fn row(&self, n: usize) -> &L2SigmaWeightRow {
        &self.rows[n - 1]
    }
}

/// L2-1σ approximation of the Caputo derivative at `t_{n-1+σ}`, given samples
/// `f(t_0), ..., f(t_n)`.
pub fn caputo_l2sigma(samples: &[f64], alpha: FractionalOrder, tau: f64) -> Result<f64> {
    let n = require_samples(samples, tau)?;
    let row = l2sigma_weight_row(alpha, n)?;
    Ok(caputo_l2sigma_with(&row, samples, tau))
}

/// Same as [`caputo_l2sigma`] with a precomputed row (`row.n() == samples.len() - 1`).
pub fn caputo_l2sigma_with(row: &L2SigmaWeightRow, samples: &[f64], tau: f64) -> f64 {
    let n = row.n;
    debug_assert_eq!(samples.len(), n + 1);
    let acc: f64 = row.c.iter().enumerate().map(|(k, c)| c * (samples[n - k] - samples[n - k - 1])).sum();
    row.alpha.scale(tau) * acc
}

/// Closed-form Caputo derivative of `t^p`:
/// `Γ(p+1) / Γ(p+1-alpha) * t^(p-alpha)`.
pub fn caputo_power_oracle(p: f64, alpha: FractionalOrder, t: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "power oracle needs p > 0 (constants have zero derivative), got {p}"
        )));
    }
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("power oracle needs t >= 0, got {t}")));
    }
    let a = alpha.value();
    if t == 0.0 {
        return Ok(0.0);
    }
    let ratio = (libm::lgamma(p + 1.0) - libm::lgamma(p + 1.0 - a)).exp();
    Ok(ratio * t.powf(p - a))
}

const MAX_SUBINTERVALS: usize = 4000;

/// Caputo derivative at `t` by adaptive Gauss-Kronrod quadrature of the
/// defining integral `(1/Γ(1-α)) ∫_0^t (t-s)^(-α) f'(s) ds`.
///
/// The substitution `s = t - v^(1/(1-α))` turns the kernel into a constant,
/// leaving `(1/(1-α)) ∫_0^{t^(1-α)} f'(t - v^(1/(1-α))) dv`.
pub fn caputo_quadrature_oracle<F>(fprime: F, alpha: FractionalOrder, t: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("quadrature oracle needs t > 0, got {t}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let beta = 1.0 - alpha.value();
    let exponent = 1.0 / beta;
    let upper = t.powf(beta);
    let norm = beta * libm::tgamma(1.0 - alpha.value());
    let integrand = |v: f64| fprime(t - v.powf(exponent));
    // the integrand is scaled by 1/norm afterwards, so tighten accordingly
    let (estimate, _) = adaptive_gauss_kronrod(integrand, 0.0, upper, tol * norm)?;
    Ok(estimate / norm)
}

// 15-point Kronrod nodes on [-1, 1] (non-negative half) with the embedded
// 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive G7-K15 integration. Returns `(estimate, error_bound)` or a
/// convergence error carrying the best estimate.
pub(crate) fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    struct Piece {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
    }
    let (value, error) = gauss_kronrod_15(&f, a, b);
    let mut pieces = vec![Piece { a, b, value, error }];
    loop {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let err: f64 = pieces.iter().map(|p| p.error).sum();
        if !total.is_finite() {
            return Err(Error::NonFinite { tag: "quadrature integrand".into() });
        }
        if err <= tol {
            return Ok((total, err));
        }
        if pieces.len() >= MAX_SUBINTERVALS {
            return Err(Error::QuadratureConvergence { estimate: total, error_bound: err });
        }
        let (worst, _) = pieces.iter().enumerate().max_by(|x, y| x.1.error.total_cmp(&y.1.error)).expect("non-empty");
        let piece = pieces.swap_remove(worst);
        let mid = 0.5 * (piece.a + piece.b);
        if mid <= piece.a || mid >= piece.b {
            return Err(Error::QuadratureConvergence { estimate: total, error_bound: err });
        }
        for (lo, hi) in [(piece.a, mid), (mid, piece.b)] {
            let (value, error) = gauss_kronrod_15(&f, lo, hi);
            pieces.push(Piece { a: lo, b: hi, value, error });
        }
    }
}

/// Least-squares slope of `ln(error)` against `ln(step)`.
///
/// Returns `None` when fewer than two usable points remain (errors that are
/// zero or not finite are dropped).
pub fn fitted_order(steps: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(errors)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
