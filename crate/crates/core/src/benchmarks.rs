//! Benchmark problems with closed-form solutions.
//!
//! | id | equation | exact solution |
//! |----|----------|----------------|
//! | `Fode1` | `D^α u = -u + f` on `(0, 1]` | `t^(5+α)` |
//! | `Conv1D` | `D^α u = u_xx` on `[0,1] × (0, 1]` | `x² + 2 t^α / Γ(1+α)` |
//! | `Conv2D` | `D^α u = Δu + f` on `[0,1]² × (0, 1]` | `t² e^(x+y)` |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::caputo::FractionalOrder;
use crate::error::{Error, Result};
use crate::problem::{ExactSolution, FractionalIVP, SpatialOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleId {
    Fode1,
    Conv1D,
    Conv2D,
}

impl ExampleId {
    pub const ALL: [ExampleId; 3] = [ExampleId::Fode1, ExampleId::Conv1D, ExampleId::Conv2D];

    pub fn build(self, alpha: FractionalOrder) -> FractionalIVP {
        match self {
            ExampleId::Fode1 => example1(alpha),
            ExampleId::Conv1D => example2(alpha),
            ExampleId::Conv2D => example3(alpha),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            ExampleId::Fode1 => 1,
            ExampleId::Conv1D => 2,
            ExampleId::Conv2D => 3,
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "fode1" => Ok(ExampleId::Fode1),
            "2" | "conv1d" => Ok(ExampleId::Conv1D),
            "3" | "conv2d" => Ok(ExampleId::Conv2D),
            other => Err(Error::InvalidArgument(format!("unknown example `{other}` (expected 1, 2 or 3)"))),
        }
    }
}

/// Fractional ODE with solution `t^(5+α)`.
pub fn example1(alpha: FractionalOrder) -> FractionalIVP {
    let a = alpha.value();
    let coeff = libm::tgamma(6.0 + a) / 120.0;
    let exact = ExactSolution {
        u: Arc::new(move |_: &[f64], t: f64| t.powf(5.0 + a)),
        spatial_d2: Arc::new(|_: &[f64], _: f64| Vec::new()),
    };
    FractionalIVP::builder(alpha, 1.0, vec![], SpatialOperator::NegIdentity)
        .forcing(move |_, t| coeff * t.powi(5) + t.powf(5.0 + a))
        .initial(|_| 0.0)
        .exact(exact)
        .build()
        .expect("valid benchmark")
}

/// 1D subdiffusion with solution `x² + 2 t^α / Γ(1+α)`.
pub fn example2(alpha: FractionalOrder) -> FractionalIVP {
    let a = alpha.value();
    let c = 2.0 / libm::tgamma(1.0 + a);
    let exact = ExactSolution {
        u: Arc::new(move |x: &[f64], t: f64| x[0] * x[0] + c * t.powf(a)),
        spatial_d2: Arc::new(|_: &[f64], _: f64| vec![2.0]),
    };
    let u = exact.u.clone();
    FractionalIVP::builder(alpha, 1.0, vec![(0.0, 1.0)], SpatialOperator::SecondDerivX)
        .initial(|x| x[0] * x[0])
        .boundary(move |x, t| u(x, t))
        .exact(exact)
        .build()
        .expect("valid benchmark")
}

/// 2D subdiffusion with source, solution `t² e^(x+y)`.
pub fn example3(alpha: FractionalOrder) -> FractionalIVP {
    let a = alpha.value();
    let g3 = libm::tgamma(3.0 - a);
    let exact = ExactSolution {
        u: Arc::new(|x: &[f64], t: f64| t * t * (x[0] + x[1]).exp()),
        spatial_d2: Arc::new(|x: &[f64], t: f64| {
            let v = t * t * (x[0] + x[1]).exp();
            vec![v, v]
        }),
    };
    let u = exact.u.clone();
    FractionalIVP::builder(alpha, 1.0, vec![(0.0, 1.0), (0.0, 1.0)], SpatialOperator::LaplacianXY)
        .forcing(move |x, t| (2.0 * t.powf(2.0 - a) / g3 - 2.0 * t * t) * (x[0] + x[1]).exp())
        .initial(|_| 0.0)
        .boundary(move |x, t| u(x, t))
        .exact(exact)
        .build()
        .expect("valid benchmark")
}
