//! Reverse-mode differentiation of scalar objectives built from network
//! evaluations.
//!
//! A [`Tape`] records every scalar produced while an objective is assembled.
//! Each node keeps its value and the local partial derivatives with respect
//! to its operands. Network evaluations enter as batches: the jet pass for a
//! batch is kept whole, and during the reverse sweep the adjoints landing on
//! its outputs are handed to [`JetPass::backward`] in one go. Parameters can
//! also be used directly through [`Tape::param`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neural::network::{JetPass, NetworkParams};

/// Points per jet pass; batches are split so passes run in parallel.
const CHUNK_POINTS: usize = 256;

/// Handle to a recorded scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Recorded jet of one network evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct JetVar {
    pub value: Var,
    pub d1: Vec<Var>,
    pub d2: Vec<Var>,
}

struct Batch {
    pass: JetPass,
    first_node: usize,
}

pub struct Tape<'p> {
    params: &'p NetworkParams,
    values: Vec<f64>,
    /// `edge_start[i]..edge_start[i+1]` indexes the operands of node `i`.
    edge_start: Vec<usize>,
    edges: Vec<(usize, f64)>,
    param_nodes: Vec<(usize, usize)>,
    batches: Vec<Batch>,
    tags: Vec<(Var, String)>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p NetworkParams) -> Self {
        Self {
            params,
            values: Vec::new(),
            edge_start: vec![0],
            edges: Vec::new(),
            param_nodes: Vec::new(),
            batches: Vec::new(),
            tags: Vec::new(),
        }
    }

    pub fn params(&self) -> &NetworkParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: f64, operands: impl IntoIterator<Item = (Var, f64)>) -> Var {
        self.edges.extend(operands.into_iter().map(|(v, d)| (v.0, d)));
        self.edge_start.push(self.edges.len());
        self.values.push(value);
        Var(self.values.len() - 1)
    }

    #[inline]
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn constant(&mut self, c: f64) -> Var {
        self.push(c, [])
    }

    pub fn param(&mut self, index: usize) -> Var {
        let v = self.push(self.params.flat()[index], []);
        self.param_nodes.push((v.0, index));
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(self.value(a) + self.value(b), [(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(self.value(a) - self.value(b), [(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x * y, [(a, y), (b, x)])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(c * self.value(a), [(a, c)])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(x * x, [(a, 2.0 * x)])
    }

    /// `offset + Σ c_i v_i`.
    pub fn affine(&mut self, terms: &[(Var, f64)], offset: f64) -> Var {
        let value = terms.iter().fold(offset, |acc, (v, c)| acc + c * self.value(*v));
        self.push(value, terms.iter().copied())
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let value = xs.iter().map(|v| self.value(*v)).sum();
        self.push(value, xs.iter().map(|v| (*v, 1.0)).collect::<Vec<_>>())
    }

    /// Arithmetic mean; zero for an empty slice.
    pub fn mean(&mut self, xs: &[Var]) -> Var {
        if xs.is_empty() {
            return self.constant(0.0);
        }
        let w = 1.0 / xs.len() as f64;
        let value = xs.iter().map(|v| self.value(*v)).sum::<f64>() * w;
        self.push(value, xs.iter().map(|v| (*v, w)).collect::<Vec<_>>())
    }

    /// Mean of squares in index order; zero for an empty slice.
    pub fn mean_square(&mut self, xs: &[Var]) -> Var {
        if xs.is_empty() {
            return self.constant(0.0);
        }
        let w = 1.0 / xs.len() as f64;
        let value = xs.iter().map(|v| self.value(*v).powi(2)).sum::<f64>() * w;
        let operands: Vec<_> = xs.iter().map(|v| (*v, 2.0 * w * self.value(*v))).collect();
        self.push(value, operands)
    }

    /// Labels `v` so a non-finite value is reported under `tag`.
    pub fn tag(&mut self, v: Var, tag: impl Into<String>) {
        self.tags.push((v, tag.into()));
    }

    /// Evaluates the network at a batch of points (row-major, `input_dim`
    /// coordinates each), recording value and jets along `tracked` inputs.
    pub fn network(&mut self, points: &[f64], tracked: &[usize]) -> Result<Vec<JetVar>> {
        let dim = self.params.spec().input_dim;
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "point batch of length {} is not a multiple of input dimension {dim}",
                points.len()
            )));
        }
        let passes = points
            .par_chunks(CHUNK_POINTS * dim)
            .map(|chunk| JetPass::run(self.params, chunk, tracked))
            .collect::<Result<Vec<_>>>()?;
        let k = tracked.len();
        let mut out = Vec::with_capacity(points.len() / dim);
        for pass in passes {
            let first_node = self.values.len();
            for p in 0..pass.points() {
                let value = self.push(pass.output.value[[p, 0]], []);
                let d1 = (0..k).map(|i| self.push(pass.output.d1[i][[p, 0]], [])).collect();
                let d2 = (0..k).map(|i| self.push(pass.output.d2[i][[p, 0]], [])).collect();
                out.push(JetVar { value, d1, d2 });
            }
            self.batches.push(Batch { pass, first_node });
        }
        Ok(out)
    }

    pub fn forward(&mut self, input: &[f64]) -> Result<Var> {
        Ok(self.network(input, &[])?[0].value)
    }

    pub fn forward_jet(&mut self, input: &[f64], tracked: &[usize]) -> Result<JetVar> {
        Ok(self.network(input, tracked)?.remove(0))
    }

    fn check_finite(&self, output: Var) -> Result<()> {
        for (v, tag) in &self.tags {
            if !self.value(*v).is_finite() {
                return Err(Error::NonFinite { tag: tag.clone() });
            }
        }
        for b in &self.batches {
            let n = b.pass.points() * (1 + 2 * b.pass.tracked());
            if self.values[b.first_node..b.first_node + n].iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { tag: "network output".into() });
            }
        }
        if !self.value(output).is_finite() {
            return Err(Error::NonFinite { tag: "objective".into() });
        }
        Ok(())
    }

    /// Gradient of `output` with respect to the flat parameter vector.
    pub fn gradient(&self, output: Var) -> Result<Vec<f64>> {
        self.check_finite(output)?;
        let mut adj = vec![0.0; self.values.len()];
        adj[output.0] = 1.0;
        for node in (0..=output.0).rev() {
            let a = adj[node];
            if a == 0.0 {
                continue;
            }
            for &(parent, partial) in &self.edges[self.edge_start[node]..self.edge_start[node + 1]] {
                adj[parent] += a * partial;
            }
        }

        let mut grad = vec![0.0; self.params.flat().len()];
        for &(node, index) in &self.param_nodes {
            grad[index] += adj[node];
        }
        // per-batch gradients in parallel, summed in batch order for determinism
        let partials: Vec<Option<Vec<f64>>> = self
            .batches
            .par_iter()
            .map(|b| {
                let k = b.pass.tracked();
                let stride = 1 + 2 * k;
                let p = b.pass.points();
                let block = &adj[b.first_node..b.first_node + p * stride];
                if block.iter().all(|&a| a == 0.0) {
                    return None;
                }
                let adj_value: Vec<f64> = (0..p).map(|j| block[j * stride]).collect();
                let adj_d1: Vec<Vec<f64>> =
                    (0..k).map(|i| (0..p).map(|j| block[j * stride + 1 + i]).collect()).collect();
                let adj_d2: Vec<Vec<f64>> =
                    (0..k).map(|i| (0..p).map(|j| block[j * stride + 1 + k + i]).collect()).collect();
                let mut g = vec![0.0; grad.len()];
                b.pass.backward(self.params, &adj_value, &adj_d1, &adj_d2, &mut g);
                Some(g)
            })
            .collect();
        for g in partials.into_iter().flatten() {
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        Ok(grad)
    }
}

/// Records `objective` on a fresh tape and returns its value and its
/// gradient with respect to `params`.
pub fn loss_gradient<F>(params: &NetworkParams, objective: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Tape<'_>) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let out = objective(&mut tape)?;
    let grad = tape.gradient(out)?;
    Ok((tape.value(out), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::network::{init_params, NetworkSpec};

    #[test]
    fn half_squared_norm_gradient_is_identity() {
        let p = init_params(NetworkSpec::new(2, 2, 4).unwrap(), 1);
        let (loss, grad) = loss_gradient(&p, |t| {
            let vars: Vec<Var> = (0..t.params().flat().len()).map(|i| t.param(i)).collect();
            let sq: Vec<Var> = vars.iter().map(|v| t.square(*v)).collect();
            let s = t.sum(&sq);
            Ok(t.scale(s, 0.5))
        })
        .unwrap();
        let expect: f64 = p.flat().iter().map(|x| x * x).sum::<f64>() / 2.0;
        assert!((loss - expect).abs() < 1e-14);
        for (g, x) in grad.iter().zip(p.flat()) {
            assert!((g - x).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_ops_partials() {
        let p = init_params(NetworkSpec::new(1, 1, 2).unwrap(), 2);
        let mut t = Tape::new(&p);
        let a = t.param(0);
        let b = t.param(1);
        let prod = t.mul(a, b);
        let diff = t.sub(prod, a);
        let m = t.mean_square(&[diff, b]);
        let g = t.gradient(m).unwrap();
        let (x, y) = (p.flat()[0], p.flat()[1]);
        let d = x * y - x;
        assert!((g[0] - d * (y - 1.0)).abs() < 1e-14);
        assert!((g[1] - (d * x + y)).abs() < 1e-14);
    }

    #[test]
    fn non_finite_term_reports_tag() {
        let p = init_params(NetworkSpec::new(1, 1, 2).unwrap(), 2);
        let err = loss_gradient(&p, |t| {
            let c = t.constant(f64::INFINITY);
            t.tag(c, "loss_f");
            let z = t.constant(0.0);
            Ok(t.add(c, z))
        })
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { tag } if tag == "loss_f"));
    }
}
