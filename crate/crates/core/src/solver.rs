//! Training a network to satisfy a temporal iteration scheme.
//!
//! Discretizing the Caputo derivative turns `D^α u = L u + f` into an explicit
//! expression for `u^n` in terms of the operator term and the history
//! `u^0..u^{n-1}`. Substituting the network `û` everywhere gives a target
//! `U^n`; the interior loss is the mean of `(û^n - U^n)²`. Initial and boundary
//! data enter as ordinary mean-squared mismatches.
//!
//! The scheme structure depends only on the grid, so it is compiled once
//! into a [`LossPlan`]: two batches of network inputs (plain values and
//! operator jets) and, for every residual, a sparse linear combination of
//! batch outputs plus a constant. A plan can be evaluated on any
//! [`LossBackend`]: the recording [`Tape`] when gradients are needed, plain
//! `f64` arithmetic otherwise.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caputo::{l1_weights, L1Weights, L2SigmaTable, L2SigmaWeightRow, TimeGrid};
use crate::error::{Error, Result};
use crate::neural::lbfgs::{minimize_params, LbfgsConfig, LbfgsStatus};
use crate::neural::network::{forward_batch, init_params, JetPass, JetValue, NetworkParams, NetworkSpec};
use crate::neural::tape::{loss_gradient, Tape, Var};
use crate::problem::{ExactSolution, FractionalIVP, JetComponent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2sigma")]
    L2Sigma,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::L1, Scheme::L2Sigma];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::L1 => "l1",
            Scheme::L2Sigma => "l2sigma",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "L1" => Ok(Scheme::L1),
            "l2sigma" | "L2Sigma" | "l2-1sigma" => Ok(Scheme::L2Sigma),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}` (expected l1 or l2sigma)"))),
        }
    }
}

/// Anything that can be sampled like the network: value and jets at points.
pub trait Surrogate {
    fn input_dim(&self) -> usize;

    /// Jets at a row-major batch of points.
    fn jets(&self, points: &[f64], tracked: &[usize]) -> Result<Vec<JetValue>>;

    fn values(&self, points: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jets(points, &[])?.into_iter().map(|j| j.value).collect())
    }
}

impl Surrogate for NetworkParams {
    fn input_dim(&self) -> usize {
        self.spec().input_dim
    }

    fn jets(&self, points: &[f64], tracked: &[usize]) -> Result<Vec<JetValue>> {
        let dim = self.input_dim().max(1);
        let chunks = points
            .par_chunks(1024 * dim)
            .map(|chunk| {
                let pass = JetPass::run(self, chunk, tracked)?;
                let out = &pass.output;
                Ok((0..pass.points())
                    .map(|p| JetValue {
                        value: out.value[[p, 0]],
                        d1: out.d1.iter().map(|a| a[[p, 0]]).collect(),
                        d2: out.d2.iter().map(|a| a[[p, 0]]).collect(),
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        if chunks.is_empty() {
            return Err(Error::InvalidArgument("empty point batch".into()));
        }
        Ok(chunks.concat())
    }

    fn values(&self, points: &[f64]) -> Result<Vec<f64>> {
        forward_batch(self, points)
    }
}

/// The exact solution of a problem posing as a network.
///
/// Second derivatives come from the closed form; first derivatives are
/// central differences (no operator here reads them).
pub struct ExactSampler<'a> {
    exact: &'a ExactSolution,
    input_dim: usize,
}

impl<'a> ExactSampler<'a> {
    pub fn new(problem: &'a FractionalIVP) -> Result<Self> {
        let exact = problem.exact().ok_or_else(|| Error::InvalidArgument("problem has no exact solution".into()))?;
        Ok(Self { exact, input_dim: problem.input_dim() })
    }
}

impl Surrogate for ExactSampler<'_> {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn jets(&self, points: &[f64], tracked: &[usize]) -> Result<Vec<JetValue>> {
        let dim = self.input_dim;
        if !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument("point batch length not a multiple of input dimension".into()));
        }
        let spatial = dim - 1;
        if let Some(bad) = tracked.iter().find(|&&i| i >= spatial) {
            return Err(Error::InvalidArgument(format!("exact sampler only tracks spatial inputs, got {bad}")));
        }
        let u = &self.exact.u;
        Ok(points
            .chunks(dim)
            .map(|p| {
                let (x, t) = (&p[..spatial], p[spatial]);
                let d2_all = if tracked.is_empty() { Vec::new() } else { (self.exact.spatial_d2)(x, t) };
                let d1 = tracked
                    .iter()
                    .map(|&i| {
                        let h = 1e-6;
                        let mut xp = x.to_vec();
                        let mut xm = x.to_vec();
                        xp[i] += h;
                        xm[i] -= h;
                        (u(&xp, t) - u(&xm, t)) / (2.0 * h)
                    })
                    .collect();
                JetValue { value: u(x, t), d1, d2: tracked.iter().map(|&i| d2_all[i]).collect() }
            })
            .collect())
    }
}

/// An interior training point: spatial node index and time level `n >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorPoint {
    pub node: usize,
    pub n: usize,
}

/// Training points of the interior scheme, the initial data and the
/// boundary data.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    grid: TimeGrid,
    nodes: Vec<Vec<f64>>,
    interior: Vec<InteriorPoint>,
    initial: Vec<Vec<f64>>,
    boundary: Vec<(Vec<f64>, f64)>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    v[n - 1] = hi;
    v
}

/// Tensor grid with `n` nodes per axis, first axis fastest.
pub(crate) fn tensor_nodes(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = axis
            .iter()
            .flat_map(|&c| {
                out.iter().map(move |prefix| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    // reorder so that the first coordinate varies fastest
    out.sort_by(|a, b| {
        a.iter()
            .rev()
            .zip(b.iter().rev())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

impl CollocationSet {
    /// Uniform tensor grid: `nt` time nodes on `[0, T]` and `nx` nodes per
    /// spatial axis including the endpoints.
    ///
    /// Interior points are every non-boundary spatial node at `t_1..t_N`;
    /// initial points are all spatial nodes at `t = 0`; boundary points are
    /// the boundary nodes at every time node.
    pub fn tensor(problem: &FractionalIVP, nt: usize, nx: usize) -> Result<Self> {
        if nt < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 time nodes, got {nt}")));
        }
        let grid = TimeGrid::new(problem.horizon(), nt - 1)?;
        if problem.spatial_dim() == 0 {
            let interior = (1..nt).map(|n| InteriorPoint { node: 0, n }).collect();
            return Ok(Self { grid, nodes: vec![vec![]], interior, initial: vec![vec![]], boundary: vec![] });
        }
        if nx < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 spatial nodes per axis, got {nx}")));
        }
        let axes: Vec<Vec<f64>> = problem.domain().iter().map(|&(lo, hi)| linspace(lo, hi, nx)).collect();
        let all = tensor_nodes(&axes);
        let (edge, inner): (Vec<_>, Vec<_>) = all.iter().cloned().partition(|x| problem.on_boundary(x));
        let interior = (0..inner.len()).flat_map(|node| (1..nt).map(move |n| InteriorPoint { node, n })).collect();
        let boundary = grid.nodes().iter().flat_map(|&t| edge.iter().map(move |x| (x.clone(), t))).collect();
        Ok(Self { grid, nodes: inner, interior, initial: all, boundary })
    }

    /// Assembles a set from explicit parts, checking its invariants.
    pub fn from_parts(
        problem: &FractionalIVP,
        grid: TimeGrid,
        nodes: Vec<Vec<f64>>,
        interior: Vec<InteriorPoint>,
        initial: Vec<Vec<f64>>,
        boundary: Vec<(Vec<f64>, f64)>,
    ) -> Result<Self> {
        let dim = problem.spatial_dim();
        if interior.is_empty() {
            return Err(Error::InvalidArgument("collocation set has no interior points".into()));
        }
        if nodes.iter().chain(&initial).chain(boundary.iter().map(|b| &b.0)).any(|x| x.len() != dim) {
            return Err(Error::InvalidArgument(format!("spatial points must have {dim} coordinates")));
        }
        if let Some(p) = interior.iter().find(|p| p.n == 0 || p.n > grid.steps() || p.node >= nodes.len()) {
            return Err(Error::InvalidArgument(format!("interior point {p:?} outside the grid")));
        }
        if let Some((x, t)) = boundary.iter().find(|(x, _)| !problem.on_boundary(x)) {
            return Err(Error::InvalidArgument(format!("boundary point {x:?} at t = {t} is not on the boundary")));
        }
        Ok(Self { grid, nodes, interior, initial, boundary })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn interior(&self) -> &[InteriorPoint] {
        &self.interior
    }

    pub fn initial(&self) -> &[Vec<f64>] {
        &self.initial
    }

    pub fn boundary(&self) -> &[(Vec<f64>, f64)] {
        &self.boundary
    }

    pub fn n_f(&self) -> usize {
        self.interior.len()
    }

    pub fn n_ic(&self) -> usize {
        self.initial.len()
    }

    pub fn n_bc(&self) -> usize {
        self.boundary.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_f: f64,
    pub loss_ic: f64,
    pub loss_bc: f64,
    pub total: f64,
}

fn point(space: &[f64], t: f64) -> impl Iterator<Item = f64> + '_ {
    space.iter().copied().chain(std::iter::once(t))
}

/// `U^n` of the L1 scheme at one spatial point, read off `surrogate`.
pub fn l1_target<S: Surrogate + ?Sized>(
    problem: &FractionalIVP,
    surrogate: &S,
    space: &[f64],
    n: usize,
    weights: &L1Weights,
    tau: f64,
) -> Result<f64> {
    if n == 0 || n > weights.len() {
        return Err(Error::InvalidArgument(format!("time level {n} outside 1..={}", weights.len())));
    }
    let alpha = problem.alpha();
    let a = weights.as_slice();
    let pts: Vec<f64> = (0..=n).flat_map(|k| point(space, k as f64 * tau).collect::<Vec<_>>()).collect();
    let u = surrogate.values(&pts)?;
    let tn = n as f64 * tau;
    let tracked = problem.operator().tracked_inputs();
    let jet = surrogate.jets(&point(space, tn).collect::<Vec<_>>(), &tracked)?.remove(0);
    let op = problem.operator().apply(jet.value, &jet.d2);

    let mut target = alpha.gamma_two_minus() * tau.powf(alpha.value()) / a[0] * (op + problem.forcing(space, tn));
    for k in 1..n {
        target += (a[n - k - 1] - a[n - k]) / a[0] * u[k];
    }
    target += a[n - 1] / a[0] * u[0];
    Ok(target)
}

/// `U^n` of the L2-1σ scheme at one spatial point; the operator and the
/// forcing are read at `t_{n-1+σ}`.
pub fn l2sigma_target<S: Surrogate + ?Sized>(
    problem: &FractionalIVP,
    surrogate: &S,
    space: &[f64],
    n: usize,
    row: &L2SigmaWeightRow,
    tau: f64,
) -> Result<f64> {
    if n == 0 || row.n() != n {
        return Err(Error::InvalidArgument(format!("weight row {} does not match time level {n}", row.n())));
    }
    let alpha = problem.alpha();
    let c = row.as_slice();
    let pts: Vec<f64> = (0..n).flat_map(|k| point(space, k as f64 * tau).collect::<Vec<_>>()).collect();
    let u = surrogate.values(&pts)?;
    let ts = (n as f64 - 1.0 + row.sigma()) * tau;
    let tracked = problem.operator().tracked_inputs();
    let jet = surrogate.jets(&point(space, ts).collect::<Vec<_>>(), &tracked)?.remove(0);
    let op = problem.operator().apply(jet.value, &jet.d2);

    let mut target = alpha.gamma_two_minus() * tau.powf(alpha.value()) / c[0] * (op + problem.forcing(space, ts));
    for k in 1..n {
        target += c[k] / c[0] * (u[n - k - 1] - u[n - k]);
    }
    target += u[n - 1];
    Ok(target)
}

/// Output of a batch evaluation as seen by the loss: value and the pure
/// second derivatives along tracked axes.
#[derive(Debug, Clone)]
pub struct EvalJet<S> {
    pub value: S,
    pub d2: Vec<S>,
}

/// Arithmetic the loss plan needs.
pub trait LossBackend {
    type Scalar: Copy;

    fn evaluate(&mut self, points: &[f64], tracked: &[usize]) -> Result<Vec<EvalJet<Self::Scalar>>>;

    fn affine(&mut self, terms: &[(Self::Scalar, f64)], offset: f64) -> Self::Scalar;

    fn mean_square(&mut self, xs: &[Self::Scalar]) -> Self::Scalar;

    fn value(&self, s: Self::Scalar) -> f64;

    fn tag(&mut self, _s: Self::Scalar, _name: &str) {}
}

impl LossBackend for Tape<'_> {
    type Scalar = Var;

    fn evaluate(&mut self, points: &[f64], tracked: &[usize]) -> Result<Vec<EvalJet<Var>>> {
        Ok(self.network(points, tracked)?.into_iter().map(|j| EvalJet { value: j.value, d2: j.d2 }).collect())
    }

    fn affine(&mut self, terms: &[(Var, f64)], offset: f64) -> Var {
        Tape::affine(self, terms, offset)
    }

    fn mean_square(&mut self, xs: &[Var]) -> Var {
        Tape::mean_square(self, xs)
    }

    fn value(&self, s: Var) -> f64 {
        Tape::value(self, s)
    }

    fn tag(&mut self, s: Var, name: &str) {
        Tape::tag(self, s, name)
    }
}

/// Plain evaluation of a plan through a [`Surrogate`].
pub struct ValueBackend<'a, S: ?Sized>(pub &'a S);

impl<S: Surrogate + ?Sized> LossBackend for ValueBackend<'_, S> {
    type Scalar = f64;

    fn evaluate(&mut self, points: &[f64], tracked: &[usize]) -> Result<Vec<EvalJet<f64>>> {
        Ok(self.0.jets(points, tracked)?.into_iter().map(|j| EvalJet { value: j.value, d2: j.d2 }).collect())
    }

    fn affine(&mut self, terms: &[(f64, f64)], offset: f64) -> f64 {
        terms.iter().fold(offset, |acc, (v, c)| acc + c * v)
    }

    fn mean_square(&mut self, xs: &[f64]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
    }

    fn value(&self, s: f64) -> f64 {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Value(usize),
    Jet(usize, JetComponent),
}

#[derive(Debug, Clone, PartialEq)]
struct Residual {
    terms: Vec<(Source, f64)>,
    offset: f64,
}

/// Loss terms as backend scalars.
#[derive(Debug, Clone, Copy)]
pub struct LossParts<S> {
    pub loss_f: S,
    pub loss_ic: S,
    pub loss_bc: S,
    pub total: S,
}

/// Precompiled residuals of one (problem, scheme, collocation) triple.
#[derive(Debug, Clone)]
pub struct LossPlan {
    scheme: Scheme,
    input_dim: usize,
    tracked: Vec<usize>,
    value_points: Vec<f64>,
    jet_points: Vec<f64>,
    interior: Vec<Residual>,
    initial: Vec<Residual>,
    boundary: Vec<Residual>,
}

impl LossPlan {
    pub fn new(problem: &FractionalIVP, scheme: Scheme, colloc: &CollocationSet) -> Result<Self> {
        if colloc.interior.is_empty() {
            return Err(Error::InvalidArgument("collocation set has no interior points".into()));
        }
        let grid = &colloc.grid;
        let steps = grid.steps();
        let tau = grid.tau();
        let alpha = problem.alpha();
        let op_terms = problem.operator().terms();
        let tracked = problem.operator().tracked_inputs();
        let levels = steps + 1;
        let gamma_tau = alpha.gamma_two_minus() * tau.powf(alpha.value());

        // values at (node, t_k), then initial points, then boundary points
        let mut value_points = Vec::new();
        for x in &colloc.nodes {
            for &t in grid.nodes() {
                value_points.extend(point(x, t));
            }
        }
        let initial_base = colloc.nodes.len() * levels;
        for x in &colloc.initial {
            value_points.extend(point(x, 0.0));
        }
        let boundary_base = initial_base + colloc.initial.len();
        for (x, t) in &colloc.boundary {
            value_points.extend(point(x, *t));
        }

        // operator jets at (node, level n), n = 1..=N
        let op_time = |n: usize| match scheme {
            Scheme::L1 => grid.node(n),
            Scheme::L2Sigma => grid.shifted(n, alpha.sigma()),
        };
        let mut jet_points = Vec::new();
        for x in &colloc.nodes {
            for n in 1..=steps {
                jet_points.extend(point(x, op_time(n)));
            }
        }

        let l1 = match scheme {
            Scheme::L1 => Some(l1_weights(alpha, steps)?),
            Scheme::L2Sigma => None,
        };
        let l2 = match scheme {
            Scheme::L2Sigma => Some(L2SigmaTable::new(alpha, steps)?),
            Scheme::L1 => None,
        };

        let interior = colloc
            .interior
            .iter()
            .map(|ip| {
                let (node, n) = (ip.node, ip.n);
                let x = &colloc.nodes[node];
                // residual û^n - U^n; coefficients per history level
                let mut level = vec![0.0; n + 1];
                level[n] += 1.0;
                let (g, t_op) = match (&l1, &l2) {
                    (Some(w), _) => {
                        let a = w.as_slice();
                        for k in 1..n {
                            level[k] -= (a[n - k - 1] - a[n - k]) / a[0];
                        }
                        level[0] -= a[n - 1] / a[0];
                        (gamma_tau / a[0], op_time(n))
                    }
                    (_, Some(table)) => {
                        let c = table.row(n).as_slice();
                        for k in 1..n {
                            level[n - k - 1] -= c[k] / c[0];
                            level[n - k] += c[k] / c[0];
                        }
                        level[n - 1] -= 1.0;
                        (gamma_tau / c[0], op_time(n))
                    }
                    _ => unreachable!("one weight table per scheme"),
                };
                let mut terms: Vec<(Source, f64)> = level
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(k, c)| (Source::Value(node * levels + k), *c))
                    .collect();
                let jet = node * steps + (n - 1);
                terms.extend(op_terms.iter().map(|&(comp, w)| (Source::Jet(jet, comp), -g * w)));
                Residual { terms, offset: -g * problem.forcing(x, t_op) }
            })
            .collect();

        let initial = colloc
            .initial
            .iter()
            .enumerate()
            .map(|(i, x)| Residual { terms: vec![(Source::Value(initial_base + i), 1.0)], offset: -problem.initial(x) })
            .collect();
        let boundary = colloc
            .boundary
            .iter()
            .enumerate()
            .map(|(i, (x, t))| Residual {
                terms: vec![(Source::Value(boundary_base + i), 1.0)],
                offset: -problem.boundary(x, *t),
            })
            .collect();

        Ok(Self {
            scheme,
            input_dim: problem.input_dim(),
            tracked,
            value_points,
            jet_points,
            interior,
            initial,
            boundary,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Inputs at which operator jets are taken, row-major.
    pub fn operator_points(&self) -> &[f64] {
        &self.jet_points
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn evaluate<B: LossBackend>(&self, backend: &mut B) -> Result<LossParts<B::Scalar>> {
        let values = backend.evaluate(&self.value_points, &[])?;
        let jets = backend.evaluate(&self.jet_points, &self.tracked)?;
        let resolve = |backend: &mut B, rs: &[Residual]| {
            let scalars: Vec<B::Scalar> = rs
                .iter()
                .map(|r| {
                    let terms: Vec<(B::Scalar, f64)> = r
                        .terms
                        .iter()
                        .map(|&(src, c)| {
                            let s = match src {
                                Source::Value(i) => values[i].value,
                                Source::Jet(j, JetComponent::Value) => jets[j].value,
                                Source::Jet(j, JetComponent::SecondDeriv(axis)) => jets[j].d2[axis],
                            };
                            (s, c)
                        })
                        .collect();
                    backend.affine(&terms, r.offset)
                })
                .collect();
            backend.mean_square(&scalars)
        };
        let loss_f = resolve(backend, &self.interior);
        let loss_ic = resolve(backend, &self.initial);
        let loss_bc = resolve(backend, &self.boundary);
        backend.tag(loss_f, "loss_f");
        backend.tag(loss_ic, "loss_ic");
        backend.tag(loss_bc, "loss_bc");
        let total = backend.affine(&[(loss_f, 1.0), (loss_ic, 1.0), (loss_bc, 1.0)], 0.0);
        Ok(LossParts { loss_f, loss_ic, loss_bc, total })
    }

    pub fn breakdown<S: Surrogate + ?Sized>(&self, surrogate: &S) -> Result<LossBreakdown> {
        let mut backend = ValueBackend(surrogate);
        let p = self.evaluate(&mut backend)?;
        Ok(LossBreakdown { loss_f: p.loss_f, loss_ic: p.loss_ic, loss_bc: p.loss_bc, total: p.total })
    }

    /// Total loss and its gradient with respect to the network parameters.
    pub fn loss_and_gradient(&self, params: &NetworkParams) -> Result<(f64, Vec<f64>)> {
        loss_gradient(params, |tape| Ok(self.evaluate(tape)?.total))
    }
}

/// The three-term loss of `surrogate` on `colloc` under `scheme`.
pub fn assemble_loss<S: Surrogate + ?Sized>(
    problem: &FractionalIVP,
    surrogate: &S,
    scheme: Scheme,
    colloc: &CollocationSet,
) -> Result<LossBreakdown> {
    LossPlan::new(problem, scheme, colloc)?.breakdown(surrogate)
}

/// Uniform evaluation grid: 500 points in time for an ODE, 100 points per
/// axis otherwise (space and time alike). Row-major, time last.
pub fn test_grid(problem: &FractionalIVP) -> Vec<f64> {
    let per_axis = if problem.spatial_dim() == 0 { 500 } else { 100 };
    let mut axes: Vec<Vec<f64>> = problem.domain().iter().map(|&(lo, hi)| linspace(lo, hi, per_axis)).collect();
    axes.push(linspace(0.0, problem.horizon(), per_axis));
    tensor_nodes(&axes).into_iter().flatten().collect()
}

/// `‖û - u‖₂ / ‖u‖₂` over `points` (row-major, time last).
pub fn l2_relative_error<S: Surrogate + ?Sized>(surrogate: &S, problem: &FractionalIVP, points: &[f64]) -> Result<f64> {
    let exact = problem.exact().ok_or_else(|| Error::InvalidArgument("problem has no exact solution".into()))?;
    let dim = problem.input_dim();
    if points.is_empty() || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument("test grid is empty or ragged".into()));
    }
    let pred = surrogate.values(points)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (p, uh) in points.chunks(dim).zip(pred) {
        let u = (exact.u)(&p[..dim - 1], p[dim - 1]);
        num += (uh - u) * (uh - u);
        den += u * u;
    }
    if den == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Time nodes on `[0, T]`, including both ends.
    pub nt: usize,
    /// Spatial nodes per axis, including both ends (unused for ODEs).
    pub nx: usize,
    pub seed: u64,
    pub lbfgs: LbfgsConfig,
    pub network: Option<NetworkSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { nt: 41, nx: 11, seed: 42, lbfgs: LbfgsConfig::default(), network: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub alpha: f64,
    pub nt: usize,
    pub nx: usize,
    pub seed: u64,
    pub iterations: usize,
    pub evaluations: usize,
    pub wall_time_s: f64,
    #[serde(flatten)]
    pub final_losses: LossBreakdown,
    pub l2_relative_error: Option<f64>,
    pub status: LbfgsStatus,
    pub network: NetworkSpec,
    pub lbfgs: LbfgsConfig,
    pub loss_history: Vec<f64>,
}

/// Trains a fresh network on `problem` and reports the outcome.
///
/// A line-search failure is not an error: the best parameters found are
/// returned with `status` set accordingly.
pub fn train(problem: &FractionalIVP, scheme: Scheme, config: &TrainConfig) -> Result<(NetworkParams, SolveReport)> {
    let colloc = CollocationSet::tensor(problem, config.nt, config.nx)?;
    let plan = LossPlan::new(problem, scheme, &colloc)?;
    let spec = config.network.unwrap_or_else(|| NetworkSpec::default_for(problem.input_dim()));
    if spec.input_dim != problem.input_dim() {
        return Err(Error::InvalidArgument(format!(
            "network takes {} inputs, problem needs {}",
            spec.input_dim,
            problem.input_dim()
        )));
    }
    let initial = init_params(spec, config.seed);

    let start = Instant::now();
    let (params, result) = minimize_params(|p| plan.loss_and_gradient(p), &initial, &config.lbfgs)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let final_losses = plan.breakdown(&params)?;
    let l2_relative_error = match problem.exact() {
        Some(_) => Some(l2_relative_error(&params, problem, &test_grid(problem))?),
        None => None,
    };
    let report = SolveReport {
        scheme,
        alpha: problem.alpha().value(),
        nt: config.nt,
        nx: if problem.spatial_dim() == 0 { 1 } else { config.nx },
        seed: config.seed,
        iterations: result.iterations,
        evaluations: result.evaluations,
        wall_time_s,
        final_losses,
        l2_relative_error,
        status: result.status,
        network: spec,
        lbfgs: config.lbfgs,
        loss_history: result.history,
    };
    Ok((params, report))
}
