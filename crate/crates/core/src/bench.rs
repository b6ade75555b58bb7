//! Drivers behind the `pmnn` command: weight listings, convergence studies,
//! single solves, error tables and reference solves.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::ExampleId;
use crate::caputo::{
    caputo_l1_with, caputo_l2sigma_with, caputo_power_oracle, fitted_order, l1_weights, l2sigma_weight_row,
    FractionalOrder, L2SigmaTable, TimeGrid,
};
use crate::error::{Error, Result};
use crate::fdm::{fdm_solve, fdm_solve_fode_l2sigma, GridSolution};
use crate::neural::{LbfgsConfig, NetworkParams};
use crate::problem::FractionalIVP;
use crate::solver::{test_grid, train, Scheme, SolveReport, TrainConfig};

/// The first `n` weights of a scheme: `a_0..a_{n-1}` for L1, row `n` of
/// the L2-1σ table otherwise.
pub fn weights(alpha: f64, scheme: Scheme, n: usize) -> Result<Vec<f64>> {
    let alpha = FractionalOrder::new(alpha)?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one weight".into()));
    }
    Ok(match scheme {
        Scheme::L1 => l1_weights(alpha, n)?.as_slice().to_vec(),
        Scheme::L2Sigma => l2sigma_weight_row(alpha, n)?.as_slice().to_vec(),
    })
}

/// Writes `k weight` lines with 12 digits after the point.
pub fn write_weights<W: Write>(mut w: W, values: &[f64]) -> Result<()> {
    for (k, v) in values.iter().enumerate() {
        writeln!(w, "{k} {v:.12}")?;
    }
    Ok(())
}

/// Smooth test functions for convergence studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestFunction {
    Const,
    Linear,
    Quadratic,
    Cubic,
    Quartic,
}

impl TestFunction {
    fn power(self) -> i32 {
        match self {
            TestFunction::Const => 0,
            TestFunction::Linear => 1,
            TestFunction::Quadratic => 2,
            TestFunction::Cubic => 3,
            TestFunction::Quartic => 4,
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        t.powi(self.power())
    }

    /// Exact Caputo derivative.
    pub fn caputo(self, alpha: FractionalOrder, t: f64) -> Result<f64> {
        match self.power() {
            0 => Ok(0.0),
            p => caputo_power_oracle(p as f64, alpha, t),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.power() {
            0 => f.write_str("const"),
            1 => f.write_str("t"),
            p => write!(f, "t{p}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "const" | "1" => Ok(TestFunction::Const),
            "t" | "t1" => Ok(TestFunction::Linear),
            "t2" => Ok(TestFunction::Quadratic),
            "t3" => Ok(TestFunction::Cubic),
            "t4" => Ok(TestFunction::Quartic),
            other => Err(Error::InvalidArgument(format!("unknown function `{other}` (const, t, t2, t3, t4)"))),
        }
    }
}

/// Error of a Caputo approximation on `[0, 1]`, as a function of step count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub steps: Vec<usize>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log τ`; `None` when the
    /// scheme is exact on the function.
    pub order: Option<f64>,
}

/// Errors at or below this level count as exact.
pub const EXACT_THRESHOLD: f64 = 1e-13;

/// Maximum nodal error of the scheme over `n = 1..=N` with `τ = 1/N`.
///
/// L1 is compared at `t_n`, L2-1σ at `t_{n-1+σ}`.
pub fn scheme_error(scheme: Scheme, alpha: FractionalOrder, f: TestFunction, steps: usize) -> Result<f64> {
    let grid = TimeGrid::new(1.0, steps)?;
    let tau = grid.tau();
    let samples: Vec<f64> = grid.nodes().iter().map(|&t| f.eval(t)).collect();
    let mut worst = 0.0_f64;
    match scheme {
        Scheme::L1 => {
            let w = l1_weights(alpha, steps)?;
            for n in 1..=steps {
                let approx = caputo_l1_with(&w, &samples[..=n], tau);
                worst = worst.max((approx - f.caputo(alpha, grid.node(n))?).abs());
            }
        }
        Scheme::L2Sigma => {
            let table = L2SigmaTable::new(alpha, steps)?;
            for n in 1..=steps {
                let approx = caputo_l2sigma_with(table.row(n), &samples[..=n], tau);
                let exact = f.caputo(alpha, grid.shifted(n, alpha.sigma()))?;
                worst = worst.max((approx - exact).abs());
            }
        }
    }
    Ok(worst)
}

pub fn convergence_study(scheme: Scheme, alpha: f64, f: TestFunction, steps: &[usize]) -> Result<ConvergenceStudy> {
    let alpha = FractionalOrder::new(alpha)?;
    if steps.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 step counts, got {}", steps.len())));
    }
    let errors = steps.iter().map(|&n| scheme_error(scheme, alpha, f, n)).collect::<Result<Vec<_>>>()?;
    let order = if errors.iter().all(|&e| e <= EXACT_THRESHOLD) {
        None
    } else {
        let taus: Vec<f64> = steps.iter().map(|&n| 1.0 / n as f64).collect();
        fitted_order(&taus, &errors)
    };
    Ok(ConvergenceStudy { steps: steps.to_vec(), errors, order })
}

/// CSV `N,error,order`; the fitted order is repeated on every row, or
/// `exact` when all errors vanish.
pub fn write_convergence_csv<W: Write>(mut w: W, study: &ConvergenceStudy) -> Result<()> {
    writeln!(w, "N,error,order")?;
    let order = match study.order {
        Some(p) => p.to_string(),
        None => "exact".to_string(),
    };
    for (n, e) in study.steps.iter().zip(&study.errors) {
        writeln!(w, "{n},{e},{order}")?;
    }
    Ok(())
}

/// One trained solve as requested on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub example: ExampleId,
    pub alpha: f64,
    pub scheme: Scheme,
    pub nt: usize,
    pub nx: usize,
    pub seed: u64,
    pub max_iters: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { example: ExampleId::Fode1, alpha: 0.5, scheme: Scheme::L1, nt: 41, nx: 11, seed: 42, max_iters: None }
    }
}

impl RunConfig {
    pub fn problem(&self) -> Result<FractionalIVP> {
        Ok(self.example.build(FractionalOrder::new(self.alpha)?))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut lbfgs = LbfgsConfig::default();
        if let Some(m) = self.max_iters {
            lbfgs.max_iterations = m;
        }
        lbfgs.validate()?;
        if self.nt < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 time nodes, got {}", self.nt)));
        }
        if self.example != ExampleId::Fode1 && self.nx < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 spatial nodes, got {}", self.nx)));
        }
        Ok(TrainConfig { nt: self.nt, nx: self.nx, seed: self.seed, lbfgs, network: None })
    }
}

/// A solve report tagged with the benchmark it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub example: ExampleId,
    #[serde(flatten)]
    pub report: SolveReport,
}

pub fn run_solve(config: &RunConfig) -> Result<(FractionalIVP, NetworkParams, RunReport)> {
    let problem = config.problem()?;
    let train_config = config.train_config()?;
    let (params, report) = train(&problem, config.scheme, &train_config)?;
    Ok((problem, params, RunReport { example: config.example, report }))
}

/// CSV `t[,x[,y]],u_exact,u_pred,abs_err` on the evaluation grid.
pub fn write_prediction_csv<W: Write>(mut w: W, problem: &FractionalIVP, params: &NetworkParams) -> Result<()> {
    let exact = problem.exact().ok_or_else(|| Error::InvalidArgument("problem has no exact solution".into()))?;
    let dim = problem.input_dim();
    let points = test_grid(problem);
    let pred = crate::neural::forward_batch(params, &points)?;
    let names = ["x", "y"];
    let mut header = vec!["t"];
    header.extend(&names[..dim - 1]);
    header.extend(["u_exact", "u_pred", "abs_err"]);
    writeln!(w, "{}", header.join(","))?;
    for (p, up) in points.chunks(dim).zip(pred) {
        let (x, t) = (&p[..dim - 1], p[dim - 1]);
        let ue = (exact.u)(x, t);
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(f64::to_string));
        row.extend([ue.to_string(), up.to_string(), (up - ue).abs().to_string()]);
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Finite-difference reference for a benchmark; the L2-1σ variant is only
/// available for the ODE.
pub fn run_fdm(example: ExampleId, alpha: f64, scheme: Scheme, nt: usize, nx: usize) -> Result<GridSolution> {
    let problem = example.build(FractionalOrder::new(alpha)?);
    match (scheme, example) {
        (Scheme::L1, _) => fdm_solve(&problem, nt, nx),
        (Scheme::L2Sigma, ExampleId::Fode1) => {
            if nt < 2 {
                return Err(Error::InvalidArgument(format!("need at least 2 time nodes, got {nt}")));
            }
            fdm_solve_fode_l2sigma(&problem, nt - 1)
        }
        (Scheme::L2Sigma, _) => {
            Err(Error::InvalidArgument("the L2-1σ reference solver only covers the ODE example".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableId {
    OdeErr,
    Pde1dErr,
    Pde1dNx,
    Pde2dErr,
    Pde2dNx,
}

impl TableId {
    pub const ALL: [TableId; 5] =
        [TableId::OdeErr, TableId::Pde1dErr, TableId::Pde1dNx, TableId::Pde2dErr, TableId::Pde2dNx];

    pub fn example(self) -> ExampleId {
        match self {
            TableId::OdeErr => ExampleId::Fode1,
            TableId::Pde1dErr | TableId::Pde1dNx => ExampleId::Conv1D,
            TableId::Pde2dErr | TableId::Pde2dNx => ExampleId::Conv2D,
        }
    }

    /// Every cell of the table with its published error.
    pub fn cells(self) -> Vec<TableCell> {
        let alphas = [0.25, 0.5, 0.75];
        let by_nt = |nts: &[usize], nx: usize, published: &[[f64; 6]]| {
            let mut out = Vec::new();
            for (row, &nt) in published.iter().zip(nts) {
                for (ai, &alpha) in alphas.iter().enumerate() {
                    for (si, scheme) in Scheme::ALL.into_iter().enumerate() {
                        out.push(TableCell { nt, nx, alpha, scheme, published: row[2 * ai + si] });
                    }
                }
            }
            out
        };
        let by_nx = |nxs: &[usize], nt: usize, published: &[[f64; 2]]| {
            let mut out = Vec::new();
            for (row, &nx) in published.iter().zip(nxs) {
                for (si, scheme) in Scheme::ALL.into_iter().enumerate() {
                    out.push(TableCell { nt, nx, alpha: 0.5, scheme, published: row[si] });
                }
            }
            out
        };
        match self {
            TableId::OdeErr => by_nt(&[11, 21, 41, 81, 101, 201], 1, &ODE_ERR),
            TableId::Pde1dErr => by_nt(&[11, 21, 41, 81, 101], 11, &PDE1D_ERR),
            TableId::Pde1dNx => by_nx(&[6, 11, 21, 41, 81, 101], 41, &PDE1D_NX),
            TableId::Pde2dErr => by_nt(&[11, 21, 41, 81, 101], 11, &PDE2D_ERR),
            TableId::Pde2dNx => by_nx(&[6, 11, 21, 41, 81], 21, &PDE2D_NX),
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableId::OdeErr => "ode-err",
            TableId::Pde1dErr => "pde1d-err",
            TableId::Pde1dNx => "pde1d-nx",
            TableId::Pde2dErr => "pde2d-err",
            TableId::Pde2dNx => "pde2d-nx",
        })
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableId::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown table `{s}`")))
    }
}

// Published L² relative errors; columns are (α = 0.25, 0.5, 0.75) × (L1, L2-1σ).
const ODE_ERR: [[f64; 6]; 6] = [
    [1.55e-2, 1.20e-3, 5.31e-2, 2.50e-3, 1.33e-1, 6.28e-3],
    [5.35e-3, 1.21e-3, 2.07e-2, 2.19e-3, 5.88e-2, 1.53e-3],
    [1.86e-3, 3.71e-3, 7.84e-3, 3.02e-3, 2.55e-2, 7.84e-4],
    [9.58e-4, 2.64e-3, 3.10e-3, 1.58e-3, 1.09e-2, 4.75e-4],
    [6.68e-4, 3.51e-3, 2.26e-3, 2.51e-3, 8.36e-3, 3.39e-4],
    [1.71e-4, 3.86e-3, 1.26e-3, 2.37e-3, 4.59e-3, 3.52e-4],
];
const PDE1D_ERR: [[f64; 6]; 5] = [
    [3.46e-2, 2.80e-2, 1.38e-2, 8.03e-3, 6.39e-3, 2.14e-3],
    [1.81e-2, 1.58e-2, 6.43e-3, 3.59e-3, 3.52e-3, 1.17e-3],
    [7.74e-3, 5.85e-3, 3.66e-3, 1.64e-3, 2.03e-3, 6.70e-4],
    [2.21e-3, 9.73e-4, 1.85e-3, 6.74e-4, 1.13e-3, 3.81e-4],
    [1.43e-3, 5.24e-4, 1.48e-3, 5.28e-4, 9.61e-4, 2.90e-4],
];
const PDE1D_NX: [[f64; 2]; 6] = [
    [3.24e-3, 1.75e-3],
    [3.66e-3, 1.64e-3],
    [3.45e-3, 1.59e-3],
    [3.37e-3, 1.61e-3],
    [3.52e-3, 1.68e-3],
    [3.59e-3, 1.63e-3],
];
const PDE2D_ERR: [[f64; 6]; 5] = [
    [2.50e-4, 6.23e-5, 8.13e-4, 6.15e-5, 2.34e-3, 5.00e-5],
    [8.27e-5, 4.01e-5, 3.16e-4, 4.67e-5, 1.01e-3, 4.17e-5],
    [4.07e-5, 1.66e-4, 1.21e-4, 3.91e-5, 4.32e-4, 4.77e-5],
    [2.34e-5, 3.32e-4, 5.26e-5, 5.25e-5, 1.76e-4, 5.08e-5],
    [3.04e-5, 5.61e-5, 4.56e-5, 5.62e-5, 1.35e-4, 5.68e-5],
];
const PDE2D_NX: [[f64; 2]; 5] =
    [[3.42e-4, 7.03e-5], [3.16e-4, 4.67e-5], [3.07e-4, 4.16e-5], [3.10e-4, 4.25e-5], [3.09e-4, 6.76e-5]];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub nt: usize,
    pub nx: usize,
    pub alpha: f64,
    pub scheme: Scheme,
    pub published: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub cell: TableCell,
    /// One error per seed, in the order the seeds were given.
    pub errors: Vec<f64>,
    pub iterations: Vec<usize>,
}

impl TableRow {
    pub fn median(&self) -> f64 {
        median(&self.errors)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trains every cell of `table` for every seed. Cells run in parallel; rows
/// come back in the table's own order. An empty seed list means seed 42.
pub fn run_table(table: TableId, seeds: &[u64], max_iters: Option<usize>) -> Result<Vec<TableRow>> {
    let seeds = if seeds.is_empty() { vec![42] } else { seeds.to_vec() };
    let cells = table.cells();
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cell = cells[c];
            let config = RunConfig {
                example: table.example(),
                alpha: cell.alpha,
                scheme: cell.scheme,
                nt: cell.nt,
                nx: cell.nx,
                seed,
                max_iters,
            };
            let (_, _, report) = run_solve(&config)?;
            let err = report.report.l2_relative_error.expect("benchmarks have exact solutions");
            Ok((err, report.report.iterations))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(cells
        .into_iter()
        .enumerate()
        .map(|(c, cell)| {
            let mine = &results[c * seeds.len()..(c + 1) * seeds.len()];
            TableRow {
                cell,
                errors: mine.iter().map(|r| r.0).collect(),
                iterations: mine.iter().map(|r| r.1).collect(),
            }
        })
        .collect())
}

/// CSV `nt,nx,alpha,scheme,published,error_seed<s>...[,median]`.
pub fn write_table_csv<W: Write>(mut w: W, rows: &[TableRow], seeds: &[u64]) -> Result<()> {
    let seeds = if seeds.is_empty() { vec![42] } else { seeds.to_vec() };
    let mut header = vec!["nt".to_string(), "nx".into(), "alpha".into(), "scheme".into(), "published".into()];
    header.extend(seeds.iter().map(|s| format!("error_seed{s}")));
    if seeds.len() > 1 {
        header.push("median".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let c = r.cell;
        let mut row = vec![
            c.nt.to_string(),
            c.nx.to_string(),
            c.alpha.to_string(),
            c.scheme.to_string(),
            c.published.to_string(),
        ];
        row.extend(r.errors.iter().map(f64::to_string));
        if seeds.len() > 1 {
            row.push(r.median().to_string());
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Parses `1,2,3` (spaces allowed); an empty string gives an empty list.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| Error::InvalidArgument(format!("cannot parse list entry `{x}`"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_listing() {
        let w = weights(0.5, Scheme::L1, 4).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &w).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("0 1.000000000000"));
        assert_eq!(text.lines().nth(1), Some("1 0.414213562373"));
        let single = weights(0.5, Scheme::L2Sigma, 1).unwrap();
        assert_eq!(single, vec![0.75_f64.powf(0.5)]);
        assert!(matches!(weights(1.5, Scheme::L1, 4), Err(Error::Domain(_) | Error::InvalidArgument(_))));
    }

    #[test]
    fn convergence_orders() {
        let s = convergence_study(Scheme::L1, 0.5, TestFunction::Cubic, &[64, 128, 256, 512]).unwrap();
        let p = s.order.unwrap();
        assert!((1.25..=1.75).contains(&p), "{p}");
        let s = convergence_study(Scheme::L2Sigma, 0.25, TestFunction::Quartic, &[64, 128, 256, 512]).unwrap();
        let p = s.order.unwrap();
        assert!((2.45..=3.05).contains(&p), "{p}");
        let s = convergence_study(Scheme::L1, 0.5, TestFunction::Const, &[8, 16, 32]).unwrap();
        assert!(s.errors.iter().all(|&e| e <= EXACT_THRESHOLD));
        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("N,error,order"));
        assert!(text.lines().skip(1).all(|l| l.ends_with(",exact")));
        assert!(convergence_study(Scheme::L1, 0.5, TestFunction::Cubic, &[8, 16]).is_err());
    }

    #[test]
    fn table_shapes() {
        assert_eq!(TableId::OdeErr.cells().len(), 6 * 6);
        assert_eq!(TableId::Pde1dNx.cells().len(), 12);
        let c = TableId::OdeErr.cells();
        let cell = c.iter().find(|c| c.nt == 201 && c.alpha == 0.25 && c.scheme == Scheme::L1).unwrap();
        assert_eq!(cell.published, 1.71e-4);
        let c = TableId::Pde2dErr.cells();
        let cell = c.iter().find(|c| c.nt == 21 && c.alpha == 0.5 && c.scheme == Scheme::L2Sigma).unwrap();
        assert_eq!(cell.published, 4.67e-5);
        for t in TableId::ALL {
            assert_eq!(t.to_string().parse::<TableId>().unwrap(), t);
        }
        assert!("pde3d-err".parse::<TableId>().is_err());
    }

    #[test]
    fn lists_and_medians() {
        assert_eq!(parse_list::<u64>("1, 2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_list::<u64>("").unwrap().is_empty());
        assert!(parse_list::<u64>("1,x").is_err());
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
    }
}
