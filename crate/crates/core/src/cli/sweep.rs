use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::montecarlo::{seed_range, simulate, McSummary, SimulationSpec};
use crate::realdata::{load_dataset, preprocess, run_realdata, Preprocessing, RealDataSpec, RealDataSummary};
use crate::replica::{solve_saddle_point_from, OrderParams, SaddleProblem, SaddleSolution};

use super::config::RunConfig;

/// Which ratio a curve varies; the other one must be a single value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CurveAxis {
    /// Vary `P/D` at fixed `N/D`.
    Params,
    /// Vary `N/D` at fixed `P/D`.
    Samples,
}

/// Monte Carlo columns of a result row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McColumns {
    pub eps_g_mc_mean: f64,
    /// Absent for a single seed.
    pub eps_g_mc_se: Option<f64>,
    pub eps_t_mc_mean: f64,
    pub eps_t_mc_se: Option<f64>,
    pub seeds_used: usize,
}

impl From<&McSummary> for McColumns {
    fn from(s: &McSummary) -> Self {
        let multi = s.seeds_used() >= 2;
        Self {
            eps_g_mc_mean: s.eps_g_mean,
            eps_g_mc_se: multi.then_some(s.eps_g_se),
            eps_t_mc_mean: s.eps_t_mean,
            eps_t_mc_se: multi.then_some(s.eps_t_se),
            seeds_used: s.seeds_used(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub n_over_d: f64,
    pub p_over_d: f64,
    pub eps_g_theory: f64,
    pub eps_t_theory: f64,
    pub rho: f64,
    pub m: f64,
    pub q: f64,
    pub v: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(flatten)]
    pub mc: Option<McColumns>,
}

impl ResultRow {
    fn from_theory(n_over_d: f64, p_over_d: f64, sol: Option<&SaddleSolution>) -> Self {
        match sol {
            Some(s) => Self {
                n_over_d,
                p_over_d,
                eps_g_theory: s.eps_g,
                eps_t_theory: s.eps_t,
                rho: s.stats.rho,
                m: s.stats.m,
                q: s.stats.q,
                v: s.stats.v,
                converged: s.converged,
                iterations: s.iterations,
                mc: None,
            },
            None => Self {
                n_over_d,
                p_over_d,
                eps_g_theory: f64::NAN,
                eps_t_theory: f64::NAN,
                rho: f64::NAN,
                m: f64::NAN,
                q: f64::NAN,
                v: f64::NAN,
                converged: false,
                iterations: 0,
                mc: None,
            },
        }
    }
}

pub fn problem(config: &RunConfig, n_over_d: f64, p_over_d: f64) -> SaddleProblem {
    SaddleProblem {
        model: config.model.clone(),
        channel: config.channel,
        activation: config.activation,
        alpha: n_over_d / p_over_d,
        gamma: 1.0 / p_over_d,
        lambda: config.lambda,
    }
}

/// Solves one point, warm-started when possible; a warm start that fails to
/// converge is retried cold. Solver errors become unconverged rows.
fn solve_point(config: &RunConfig, n_over_d: f64, p_over_d: f64, warm: Option<&OrderParams>) -> Option<SaddleSolution> {
    let pb = problem(config, n_over_d, p_over_d);
    let attempt = |init| solve_saddle_point_from(&pb, &config.solver, init);
    let first = attempt(warm);
    let sol = match (&first, warm) {
        (Ok(s), Some(_)) if !s.converged => attempt(None),
        (Err(_), Some(_)) => attempt(None),
        _ => first,
    };
    match sol {
        Ok(s) => {
            if !s.converged {
                warn!("no convergence at N/D = {n_over_d}, P/D = {p_over_d} (residual {:.3e})", s.residual);
            }
            Some(s)
        }
        Err(e) => {
            warn!("solver failed at N/D = {n_over_d}, P/D = {p_over_d}: {e}");
            None
        }
    }
}

/// Theory along a chain of points, each warm-started from the last converged
/// one before it.
fn theory_chain(config: &RunConfig, points: &[(f64, f64)]) -> Vec<ResultRow> {
    let mut warm: Option<OrderParams> = None;
    points
        .iter()
        .map(|&(n, p)| {
            let sol = solve_point(config, n, p, warm.as_ref());
            if let Some(s) = sol.as_ref().filter(|s| s.converged) {
                warm = Some(s.order.clone());
            }
            ResultRow::from_theory(n, p, sol.as_ref())
        })
        .collect()
}

fn attach_monte_carlo(config: &RunConfig, rows: &mut [ResultRow]) -> Result<()> {
    let Some(sim) = &config.simulation else { return Ok(()) };
    let seeds = seed_range(sim.base_seed, sim.seeds);
    let summaries: Vec<McSummary> = rows
        .par_iter()
        .map(|row| {
            let spec = SimulationSpec {
                model: config.model.clone(),
                channel: config.channel,
                activation: config.activation,
                lambda: config.lambda,
                d: sim.d,
                n_over_d: row.n_over_d,
                p_over_d: row.p_over_d,
                n_test: sim.n_test,
                fit_tol: sim.fit_tol,
            };
            simulate(&spec, &seeds)
        })
        .collect::<Result<_>>()?;
    for (row, s) in rows.iter_mut().zip(&summaries) {
        row.mc = Some(s.into());
    }
    Ok(())
}

/// One row per point of the varying axis, in increasing order.
pub fn run_curve(config: &RunConfig, axis: CurveAxis) -> Result<Vec<ResultRow>> {
    let points: Vec<(f64, f64)> = match axis {
        CurveAxis::Params => {
            let [n] = config.n_over_d[..] else {
                return Err(Error::Config("a parameter-wise curve needs exactly one n_over_d".into()));
            };
            config.p_over_d.iter().map(|&p| (n, p)).collect()
        }
        CurveAxis::Samples => {
            let [p] = config.p_over_d[..] else {
                return Err(Error::Config("a sample-wise curve needs exactly one p_over_d".into()));
            };
            config.n_over_d.iter().map(|&n| (n, p)).collect()
        }
    };
    let mut rows = theory_chain(config, &points);
    attach_monte_carlo(config, &mut rows)?;
    Ok(rows)
}

/// Full `(N/D, P/D)` grid, `N/D` outer. Each `N/D` row is one warm-start
/// chain along increasing `P/D`; rows run in parallel.
pub fn run_phase_space(config: &RunConfig) -> Result<Vec<ResultRow>> {
    if config.n_over_d.len() < 2 || config.p_over_d.len() < 2 {
        return Err(Error::Config("a phase diagram needs at least two values on each axis".into()));
    }
    let mut rows: Vec<ResultRow> = config
        .n_over_d
        .par_iter()
        .map(|&n| theory_chain(config, &config.p_over_d.iter().map(|&p| (n, p)).collect::<Vec<_>>()))
        .flatten_iter()
        .collect();
    attach_monte_carlo(config, &mut rows)?;
    Ok(rows)
}

/// Largest |z| tolerated by the agreement gate.
pub const AGREEMENT_GATE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementPoint {
    pub n_over_d: f64,
    pub p_over_d: f64,
    pub z_eps_g: f64,
    pub z_eps_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub points: Vec<AgreementPoint>,
    pub max_abs_z: f64,
}

/// `(mc − theory)/se`; a missing or zero error bar only passes on exact
/// equality, and a non-finite theory never passes.
fn z_score(theory: f64, mean: f64, se: Option<f64>) -> f64 {
    if !theory.is_finite() {
        return f64::INFINITY;
    }
    let diff = mean - theory;
    match se {
        Some(se) if se > 0.0 => diff / se,
        _ if diff == 0.0 => 0.0,
        _ => f64::INFINITY.copysign(diff),
    }
}

impl AgreementReport {
    pub fn from_rows(rows: &[ResultRow]) -> Result<Self> {
        let points = rows
            .iter()
            .map(|r| {
                let mc = r.mc.as_ref().ok_or_else(|| Error::Config("agreement needs Monte Carlo columns".into()))?;
                Ok(AgreementPoint {
                    n_over_d: r.n_over_d,
                    p_over_d: r.p_over_d,
                    z_eps_g: z_score(r.eps_g_theory, mc.eps_g_mc_mean, mc.eps_g_mc_se),
                    z_eps_t: z_score(r.eps_t_theory, mc.eps_t_mc_mean, mc.eps_t_mc_se),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let max_abs_z = points.iter().flat_map(|p| [p.z_eps_g.abs(), p.z_eps_t.abs()]).fold(0.0, f64::max);
        Ok(Self { points, max_abs_z })
    }

    pub fn passes(&self) -> bool {
        self.max_abs_z <= AGREEMENT_GATE
    }
}

/// Theory and simulation over the Cartesian grid, plus the z-score summary.
pub fn run_agreement(config: &RunConfig) -> Result<(Vec<ResultRow>, AgreementReport)> {
    if config.simulation.is_none() {
        return Err(Error::Config("agreement needs a simulation block".into()));
    }
    let mut rows: Vec<ResultRow> = config
        .n_over_d
        .par_iter()
        .map(|&n| theory_chain(config, &config.p_over_d.iter().map(|&p| (n, p)).collect::<Vec<_>>()))
        .flatten_iter()
        .collect();
    attach_monte_carlo(config, &mut rows)?;
    let report = AgreementReport::from_rows(&rows)?;
    Ok((rows, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealDataRow {
    pub n_over_d: f64,
    pub p_over_d: f64,
    pub alpha: f64,
    pub corruption: f64,
    pub eps_g_median: f64,
    pub eps_g_mc_mean: f64,
    pub eps_g_mc_se: Option<f64>,
    pub eps_t_median: f64,
    pub eps_t_mc_mean: f64,
    pub eps_t_mc_se: Option<f64>,
    pub seeds_used: usize,
}

impl RealDataRow {
    fn new(n_over_d: f64, p_over_d: f64, alpha: f64, corruption: f64, s: &RealDataSummary) -> Self {
        let multi = s.outcomes.len() >= 2;
        Self {
            n_over_d,
            p_over_d,
            alpha,
            corruption,
            eps_g_median: s.eps_g_median,
            eps_g_mc_mean: s.eps_g_mean,
            eps_g_mc_se: multi.then_some(s.eps_g_se),
            eps_t_median: s.eps_t_median,
            eps_t_mc_mean: s.eps_t_mean,
            eps_t_mc_se: multi.then_some(s.eps_t_se),
            seeds_used: s.outcomes.len(),
        }
    }
}

/// Real-data students over the Cartesian grid; the loss follows the
/// configured channel.
pub fn run_realdata_sweep(config: &RunConfig) -> Result<Vec<RealDataRow>> {
    let real = config.realdata.as_ref().ok_or_else(|| Error::Config("realdata needs a realdata block".into()))?;
    let splits = load_dataset(real.dataset, &real.data_dir())?;
    let data = preprocess(&splits, &Preprocessing { downscale: real.downscale, keep: real.keep, alpha: real.alpha })?;
    let seeds = seed_range(real.base_seed, real.seeds);
    let mut rows = Vec::new();
    for &n in &config.n_over_d {
        for &p in &config.p_over_d {
            let spec = RealDataSpec {
                activation: config.activation,
                loss: config.channel.loss(),
                lambda: config.lambda,
                n_over_d: n,
                p_over_d: p,
                corruption: real.corruption,
                n_test: real.n_test,
                fit_tol: real.fit_tol,
            };
            let summary = run_realdata(&data, &spec, &seeds)?;
            rows.push(RealDataRow::new(n, p, real.alpha, real.corruption, &summary));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replica::{scalar_stats, test_error};

    fn config(extra: &str, n: &str, p: &str) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{"model": {{"scenario": "iso"}}, "activation": "relu",
                "channel": {{"kind": "classification_square", "delta": 0.1}}, "lambda": 1e-2,
                "grid": {{"n_over_d": {n}, "p_over_d": {p}}}{extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn curve_needs_a_single_fixed_value() {
        let c = config("", "[1, 2]", "[0.5, 1, 2]");
        assert!(matches!(run_curve(&c, CurveAxis::Params), Err(Error::Config(_))));
        let rows = run_curve(&config("", "1", "0.5"), CurveAxis::Params).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].converged && rows[0].mc.is_none());
    }

    #[test]
    fn warm_chain_matches_cold_solves() {
        let c = config(r#", "solver": {"tol": 1e-12}"#, "1", "[0.3, 0.7, 1.5, 3]");
        let rows = run_curve(&c, CurveAxis::Params).unwrap();
        for r in &rows {
            let cold = solve_point(&c, r.n_over_d, r.p_over_d, None).unwrap();
            assert!((cold.eps_g - r.eps_g_theory).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_rows_are_ordered_n_outer() {
        let c = config("", "[1, 2]", "[0.5, 1, 4]");
        let rows = run_phase_space(&c).unwrap();
        let order: Vec<(f64, f64)> = rows.iter().map(|r| (r.n_over_d, r.p_over_d)).collect();
        assert_eq!(order, vec![(1.0, 0.5), (1.0, 1.0), (1.0, 4.0), (2.0, 0.5), (2.0, 1.0), (2.0, 4.0)]);
        assert!(run_phase_space(&config("", "1", "[1, 2]")).is_err());
    }

    #[test]
    fn agreement_flags_a_corrupted_theory() {
        let sim = r#", "simulation": {"d": 60, "seeds": 6, "n_test": 4000}"#;
        let c = config(sim, "2", "1.5");
        let (mut rows, report) = run_agreement(&c).unwrap();
        assert!(report.passes(), "{report:?}");
        // Negate M and recompute the theory's test error.
        let sol = solve_point(&c, 2.0, 1.5, None).unwrap();
        let mut stats = scalar_stats(&sol.order, &c.model, &sol.kappas);
        stats.m = -stats.m;
        rows[0].eps_g_theory = test_error(&stats, &c.channel).unwrap();
        assert!(!AgreementReport::from_rows(&rows).unwrap().passes());
    }

    #[test]
    fn z_score_edge_cases() {
        assert_eq!(z_score(0.5, 0.5, None), 0.0);
        assert_eq!(z_score(0.5, 0.6, Some(0.0)), f64::INFINITY);
        assert_eq!(z_score(f64::NAN, 0.6, Some(0.1)), f64::INFINITY);
        assert!((z_score(0.5, 0.6, Some(0.05)) - 2.0).abs() < 1e-12);
    }
}
