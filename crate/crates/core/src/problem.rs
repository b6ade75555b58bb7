//! Initial-boundary value problems `D_t^α u = L u + f` on `Ω × (0, T]`.
//!
//! Points are passed as coordinate slices with the spatial coordinates first
//! and time last, matching the network input layout `(x, [y,] t)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::caputo::FractionalOrder;
use crate::error::{Error, Result};

/// `(space, t) -> value`.
pub type SpaceTimeFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
/// `space -> value`.
pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `(space, t) -> [∂²u/∂x_i²]` for each spatial axis.
pub type SpatialSecondDerivs = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;

/// Integer-order spatial operator `L`, all with unit coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpatialOperator {
    /// `L u = 0`.
    None,
    /// `L u = -u` (ODE case).
    NegIdentity,
    /// `L u = u_xx`.
    SecondDerivX,
    /// `L u = u_xx + u_yy`.
    LaplacianXY,
}

/// Which jet component an operator term reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetComponent {
    Value,
    /// Pure second derivative along tracked spatial axis `i`.
    SecondDeriv(usize),
}

impl SpatialOperator {
    fn fits(self, spatial_dim: usize) -> bool {
        match self {
            SpatialOperator::None => true,
            SpatialOperator::NegIdentity => spatial_dim == 0,
            SpatialOperator::SecondDerivX => spatial_dim == 1,
            SpatialOperator::LaplacianXY => spatial_dim == 2,
        }
    }

    /// Spatial input indices whose derivatives the operator needs.
    pub fn tracked_inputs(self) -> Vec<usize> {
        match self {
            SpatialOperator::None | SpatialOperator::NegIdentity => vec![],
            SpatialOperator::SecondDerivX => vec![0],
            SpatialOperator::LaplacianXY => vec![0, 1],
        }
    }

    /// `L u` as a linear combination of jet components.
    pub fn terms(self) -> Vec<(JetComponent, f64)> {
        match self {
            SpatialOperator::None => vec![],
            SpatialOperator::NegIdentity => vec![(JetComponent::Value, -1.0)],
            SpatialOperator::SecondDerivX => vec![(JetComponent::SecondDeriv(0), 1.0)],
            SpatialOperator::LaplacianXY => {
                vec![(JetComponent::SecondDeriv(0), 1.0), (JetComponent::SecondDeriv(1), 1.0)]
            }
        }
    }

    /// Applies `L` given the value and the pure second derivatives.
    pub fn apply(self, value: f64, second: &[f64]) -> f64 {
        self.terms()
            .into_iter()
            .map(|(c, w)| match c {
                JetComponent::Value => w * value,
                JetComponent::SecondDeriv(i) => w * second[i],
            })
            .sum()
    }
}

/// Exact solution with its spatial second derivatives.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: SpaceTimeFn,
    pub spatial_d2: SpatialSecondDerivs,
}

impl ExactSolution {
    /// `L u` of the exact solution.
    pub fn apply_operator(&self, op: SpatialOperator, space: &[f64], t: f64) -> f64 {
        let d2 = if op.tracked_inputs().is_empty() { Vec::new() } else { (self.spatial_d2)(space, t) };
        op.apply((self.u)(space, t), &d2)
    }
}

#[derive(Clone)]
pub struct FractionalIVP {
    alpha: FractionalOrder,
    horizon: f64,
    domain: Vec<(f64, f64)>,
    operator: SpatialOperator,
    forcing: SpaceTimeFn,
    boundary: SpaceTimeFn,
    initial: SpaceFn,
    exact: Option<ExactSolution>,
}

impl fmt::Debug for FractionalIVP {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FractionalIVP")
            .field("alpha", &self.alpha)
            .field("horizon", &self.horizon)
            .field("domain", &self.domain)
            .field("operator", &self.operator)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

pub struct FractionalIVPBuilder {
    alpha: FractionalOrder,
    horizon: f64,
    domain: Vec<(f64, f64)>,
    operator: SpatialOperator,
    forcing: Option<SpaceTimeFn>,
    boundary: Option<SpaceTimeFn>,
    initial: Option<SpaceFn>,
    exact: Option<ExactSolution>,
}

impl FractionalIVPBuilder {
    pub fn forcing(mut self, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    pub fn boundary(mut self, mu: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.boundary = Some(Arc::new(mu));
        self
    }

    pub fn initial(mut self, phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.initial = Some(Arc::new(phi));
        self
    }

    pub fn exact(mut self, exact: ExactSolution) -> Self {
        self.exact = Some(exact);
        self
    }

    /// Missing forcing defaults to zero; missing boundary and initial data
    /// default to the exact solution when one is given, zero otherwise.
    pub fn build(self) -> Result<FractionalIVP> {
        let dim = self.domain.len();
        if dim > 2 {
            return Err(Error::InvalidArgument(format!("spatial dimension {dim} not supported")));
        }
        if !self.operator.fits(dim) {
            return Err(Error::InvalidArgument(format!(
                "operator {:?} does not fit spatial dimension {dim}",
                self.operator
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.domain.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument(format!("empty spatial interval in {:?}", self.domain)));
        }
        let exact_u = self.exact.as_ref().map(|e| e.u.clone());
        let boundary = match (self.boundary, &exact_u) {
            (Some(b), _) => b,
            (None, Some(u)) => u.clone(),
            (None, None) => Arc::new(|_: &[f64], _: f64| 0.0),
        };
        let initial = match (self.initial, exact_u) {
            (Some(i), _) => i,
            (None, Some(u)) => Arc::new(move |x: &[f64]| u(x, 0.0)),
            (None, None) => Arc::new(|_: &[f64]| 0.0),
        };
        Ok(FractionalIVP {
            alpha: self.alpha,
            horizon: self.horizon,
            domain: self.domain,
            operator: self.operator,
            forcing: self.forcing.unwrap_or_else(|| Arc::new(|_: &[f64], _: f64| 0.0)),
            boundary,
            initial,
            exact: self.exact,
        })
    }
}

impl FractionalIVP {
    /// Starts a problem on `domain` (one `(lo, hi)` per spatial axis; empty
    /// for an ODE) over `(0, horizon]`.
    pub fn builder(
        alpha: FractionalOrder,
        horizon: f64,
        domain: Vec<(f64, f64)>,
        operator: SpatialOperator,
    ) -> FractionalIVPBuilder {
        FractionalIVPBuilder {
            alpha,
            horizon,
            domain,
            operator,
            forcing: None,
            boundary: None,
            initial: None,
            exact: None,
        }
    }

    pub fn alpha(&self) -> FractionalOrder {
        self.alpha
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn spatial_dim(&self) -> usize {
        self.domain.len()
    }

    /// Network input dimension: spatial axes plus time.
    pub fn input_dim(&self) -> usize {
        self.domain.len() + 1
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn operator(&self) -> SpatialOperator {
        self.operator
    }

    pub fn forcing(&self, space: &[f64], t: f64) -> f64 {
        (self.forcing)(space, t)
    }

    pub fn boundary(&self, space: &[f64], t: f64) -> f64 {
        (self.boundary)(space, t)
    }

    pub fn initial(&self, space: &[f64]) -> f64 {
        (self.initial)(space)
    }

    pub fn exact(&self) -> Option<&ExactSolution> {
        self.exact.as_ref()
    }

    pub fn exact_value(&self, space: &[f64], t: f64) -> Option<f64> {
        self.exact.as_ref().map(|e| (e.u)(space, t))
    }

    /// Returns a copy with a different fractional order but the same data.
    pub fn with_alpha(&self, alpha: FractionalOrder) -> Self {
        Self { alpha, ..self.clone() }
    }

    /// Whether `space` lies on `∂Ω` (within `1e-12` of a face).
    pub fn on_boundary(&self, space: &[f64]) -> bool {
        self.domain.iter().zip(space).any(|((lo, hi), x)| (x - lo).abs() < 1e-12 || (x - hi).abs() < 1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha() -> FractionalOrder {
        FractionalOrder::new(0.5).unwrap()
    }

    #[test]
    fn operator_must_match_dimension() {
        assert!(FractionalIVP::builder(alpha(), 1.0, vec![], SpatialOperator::SecondDerivX).build().is_err());
        assert!(FractionalIVP::builder(alpha(), 1.0, vec![(0.0, 1.0)], SpatialOperator::NegIdentity).build().is_err());
        assert!(FractionalIVP::builder(alpha(), 1.0, vec![(0.0, 1.0)], SpatialOperator::LaplacianXY).build().is_err());
        assert!(FractionalIVP::builder(alpha(), 1.0, vec![(0.0, 1.0); 2], SpatialOperator::LaplacianXY)
            .build()
            .is_ok());
        assert!(FractionalIVP::builder(alpha(), 0.0, vec![], SpatialOperator::None).build().is_err());
    }

    #[test]
    fn operator_application() {
        assert_eq!(SpatialOperator::NegIdentity.apply(3.0, &[]), -3.0);
        assert_eq!(SpatialOperator::LaplacianXY.apply(3.0, &[1.5, 2.0]), 3.5);
        assert_eq!(SpatialOperator::None.apply(3.0, &[]), 0.0);
    }

    #[test]
    fn data_defaults_follow_exact_solution() {
        let exact = ExactSolution {
            u: Arc::new(|x: &[f64], t: f64| x[0] + t),
            spatial_d2: Arc::new(|_: &[f64], _: f64| vec![0.0]),
        };
        let p = FractionalIVP::builder(alpha(), 1.0, vec![(0.0, 1.0)], SpatialOperator::SecondDerivX)
            .exact(exact)
            .build()
            .unwrap();
        assert_eq!(p.initial(&[0.25]), 0.25);
        assert_eq!(p.boundary(&[1.0], 0.5), 1.5);
        assert_eq!(p.forcing(&[0.3], 0.2), 0.0);
        assert!(p.on_boundary(&[1.0]) && !p.on_boundary(&[0.5]));
    }
}
