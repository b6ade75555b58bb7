//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! No box constraints are handled; the training problems here are
//! unconstrained. The line search brackets a step and then zooms with
//! safeguarded cubic interpolation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::network::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the infinity norm of the gradient drops below this.
    pub grad_tolerance: f64,
    /// Stop once the relative loss change stays below this for
    /// [`STALL_WINDOW`] successive iterations.
    pub loss_rel_tolerance: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 5000,
            grad_tolerance: 1e-9,
            loss_rel_tolerance: 1e-12,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidArgument("memory and max_iterations must be positive".into()));
        }
        if !(self.grad_tolerance > 0.0) || !(self.loss_rel_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        Ok(())
    }
}

pub const STALL_WINDOW: usize = 5;
pub const MAX_ZOOM_STEPS: usize = 40;
const MAX_BRACKET_STEPS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
}

/// One accepted line-search step, `phi(s) = f(x + s d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedStep {
    pub step: f64,
    pub phi0: f64,
    pub dphi0: f64,
    pub phi: f64,
    pub dphi: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Loss at the start and after every accepted iteration.
    pub history: Vec<f64>,
    pub status: LbfgsStatus,
    pub iterations: usize,
    pub evaluations: usize,
    pub steps: Vec<AcceptedStep>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Probe {
    step: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    evaluations: usize,
}

enum Search {
    Accepted(Probe),
    /// Best sufficient-decrease point seen, if any.
    Failed(Option<Probe>),
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn probe(&mut self, step: f64) -> Probe {
        self.evaluations += 1;
        let xs: Vec<f64> = self.x.iter().zip(self.d).map(|(x, d)| x + step * d).collect();
        match (self.objective)(&xs) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let dphi = dot(&g, self.d);
                Probe { step, f, g, dphi }
            }
            // treat failures as an infinitely bad step so the bracket shrinks
            _ => Probe { step, f: f64::INFINITY, g: Vec::new(), dphi: f64::NAN },
        }
    }

    fn armijo(&self, p: &Probe) -> bool {
        p.f <= self.f0 + self.c1 * p.step * self.dphi0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.dphi.abs() <= -self.c2 * self.dphi0
    }

    fn run(mut self, initial_step: f64) -> (Search, usize) {
        let mut prev = Probe { step: 0.0, f: self.f0, g: Vec::new(), dphi: self.dphi0 };
        let mut step = initial_step;
        for i in 0..MAX_BRACKET_STEPS {
            let cur = self.probe(step);
            if !self.armijo(&cur) || (i > 0 && cur.f >= prev.f) {
                let r = self.zoom(prev, cur);
                return (r, self.evaluations);
            }
            if self.curvature(&cur) {
                return (Search::Accepted(cur), self.evaluations);
            }
            if cur.dphi >= 0.0 {
                let r = self.zoom(cur, prev);
                return (r, self.evaluations);
            }
            step = cur.step * 2.0;
            prev = cur;
        }
        let best = (prev.step > 0.0).then_some(prev);
        (Search::Failed(best), self.evaluations)
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Search {
        for _ in 0..MAX_ZOOM_STEPS {
            let trial = self.interpolate(&lo, &hi);
            let p = self.probe(trial);
            if !self.armijo(&p) || p.f >= lo.f {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return Search::Accepted(p);
                }
                if p.dphi * (hi.step - lo.step) >= 0.0 {
                    hi = std::mem::replace(&mut lo, p);
                } else {
                    lo = p;
                }
            }
            if (hi.step - lo.step).abs() <= f64::EPSILON * lo.step.abs().max(1e-300) {
                break;
            }
        }
        Search::Failed((lo.step > 0.0).then_some(lo))
    }

    /// Minimizer of the cubic through both ends, kept at least 10% of the
    /// interval away from either end; bisection when that fails.
    fn interpolate(&self, lo: &Probe, hi: &Probe) -> f64 {
        let (a, b) = (lo.step, hi.step);
        let mid = 0.5 * (a + b);
        let (left, right) = if a < b { (a, b) } else { (b, a) };
        let margin = 0.1 * (right - left);
        if !hi.f.is_finite() || !hi.dphi.is_finite() {
            return mid;
        }
        let d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a - b);
        let disc = d1 * d1 - lo.dphi * hi.dphi;
        if disc < 0.0 {
            return mid;
        }
        let d2 = (b - a).signum() * disc.sqrt();
        let t = b - (b - a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
        if t.is_finite() && t >= left + margin && t <= right - margin {
            t
        } else {
            mid
        }
    }
}

/// Minimizes `objective` (returning loss and gradient) from `x0`.
///
/// Errors only if the objective fails at `x0`; later failures of the
/// objective shrink the line search instead.
pub fn lbfgs_minimize<F>(mut objective: F, x0: Vec<f64>, config: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    config.validate()?;
    let (mut f, mut g) = objective(&x0)?;
    if !f.is_finite() {
        return Err(Error::NonFinite { tag: "initial loss".into() });
    }
    let mut x = x0;
    let mut history = vec![f];
    let mut steps = Vec::new();
    let mut evaluations = 1;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut stalled = 0;
    let mut iterations = 0;

    let finish = |x, f, g, history, status, iterations, evaluations, steps| LbfgsResult {
        x,
        loss: f,
        grad: g,
        history,
        status,
        iterations,
        evaluations,
        steps,
    };

    if inf_norm(&g) < config.grad_tolerance {
        return Ok(finish(x, f, g, history, LbfgsStatus::Converged, 0, evaluations, steps));
    }

    loop {
        if iterations >= config.max_iterations {
            return Ok(finish(x, f, g, history, LbfgsStatus::MaxIterations, iterations, evaluations, steps));
        }

        let mut d = two_loop_direction(&g, &pairs);
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            dphi0 = dot(&g, &d);
        }
        let initial_step = if pairs.is_empty() { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };

        let search = LineSearch {
            objective: &mut objective,
            x: &x,
            d: &d,
            f0: f,
            dphi0,
            c1: config.wolfe_c1,
            c2: config.wolfe_c2,
            evaluations: 0,
        };
        let (outcome, used) = search.run(initial_step);
        evaluations += used;
        let probe = match outcome {
            Search::Accepted(p) => p,
            Search::Failed(best) => {
                if let Some(p) = best.filter(|p| p.f < f) {
                    for (xi, di) in x.iter_mut().zip(&d) {
                        *xi += p.step * di;
                    }
                    f = p.f;
                    g = p.g;
                    history.push(f);
                }
                return Ok(finish(x, f, g, history, LbfgsStatus::LineSearchFailure, iterations, evaluations, steps));
            }
        };

        iterations += 1;
        steps.push(AcceptedStep { step: probe.step, phi0: f, dphi0, phi: probe.f, dphi: probe.dphi });
        let s: Vec<f64> = d.iter().map(|di| probe.step * di).collect();
        let y: Vec<f64> = probe.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if pairs.len() == config.memory {
                pairs.pop_front();
            }
            pairs.push_back((s.clone(), y, 1.0 / sy));
        }
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        let rel_change = {
            let scale = f.abs().max(probe.f.abs());
            if scale == 0.0 {
                0.0
            } else {
                (f - probe.f).abs() / scale
            }
        };
        f = probe.f;
        g = probe.g;
        history.push(f);

        if inf_norm(&g) < config.grad_tolerance {
            return Ok(finish(x, f, g, history, LbfgsStatus::Converged, iterations, evaluations, steps));
        }
        stalled = if rel_change < config.loss_rel_tolerance { stalled + 1 } else { 0 };
        if stalled >= STALL_WINDOW {
            return Ok(finish(x, f, g, history, LbfgsStatus::Converged, iterations, evaluations, steps));
        }
    }
}

/// Two-loop recursion: `-H g` with `H_0 = (sᵀy / yᵀy) I` from the newest pair.
fn two_loop_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// [`lbfgs_minimize`] over network parameters.
pub fn minimize_params<F>(
    mut objective: F,
    initial: &NetworkParams,
    config: &LbfgsConfig,
) -> Result<(NetworkParams, LbfgsResult)>
where
    F: FnMut(&NetworkParams) -> Result<(f64, Vec<f64>)>,
{
    let spec = *initial.spec();
    let result = lbfgs_minimize(
        |x| {
            let p = NetworkParams::from_flat(spec, x.to_vec())?;
            objective(&p)
        },
        initial.flat().to_vec(),
        config,
    )?;
    let params = NetworkParams::from_flat(spec, result.x.clone())?;
    Ok((params, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let cfg = LbfgsConfig { grad_tolerance: 1e-10, ..Default::default() };
        let r = lbfgs_minimize(rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert!(r.iterations <= 200, "{}", r.iterations);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn optimal_start_returns_immediately() {
        let r = lbfgs_minimize(rosenbrock, vec![1.0, 1.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn accepted_steps_satisfy_strong_wolfe() {
        let cfg = LbfgsConfig::default();
        let r = lbfgs_minimize(rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        for s in &r.steps {
            assert!(s.phi <= s.phi0 + cfg.wolfe_c1 * s.step * s.dphi0);
            assert!(s.dphi.abs() <= -cfg.wolfe_c2 * s.dphi0);
        }
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = LbfgsConfig { wolfe_c1: 0.95, ..Default::default() };
        assert!(lbfgs_minimize(rosenbrock, vec![0.0, 0.0], &cfg).is_err());
        let cfg = LbfgsConfig { memory: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn max_iterations_status() {
        let cfg = LbfgsConfig { max_iterations: 3, ..Default::default() };
        let r = lbfgs_minimize(rosenbrock, vec![-1.2, 1.0], &cfg).unwrap();
        assert_eq!(r.status, LbfgsStatus::MaxIterations);
        assert_eq!(r.history.len(), 4);
    }

    #[test]
    fn line_search_failure_on_inconsistent_gradient() {
        // gradient points the wrong way: no step can satisfy sufficient decrease
        let bad = |x: &[f64]| Ok((x[0] * x[0], vec![-2.0 * x[0] - 1.0]));
        let r = lbfgs_minimize(bad, vec![1.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(r.status, LbfgsStatus::LineSearchFailure);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
