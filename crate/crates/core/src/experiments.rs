//! Desk-scale experiment drivers. Each takes a spec, runs its grid cells in
//! parallel with per-cell seeds, and returns a report that writes
//! deterministic CSV.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::multiscaling_approx;
use crate::bar::IdentityMean;
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::mlmc::{replicate_ci, results_rows, InitKind, MlmcConfig, ReplicatedEstimate, RESULTS_HEADER};
use crate::model::{MultiScaleFamily, SrbmModel};
use crate::report::{metadata_line, write_table};
use crate::sim::{derive_seed, Accumulator, Estimate, PathSource, Scheme, SimOptions, Simulator, StreamedPath};

/// `Γ = I`, `R = [[1, -β], [0, 1]]`: the second station feeds the first.
pub fn tandem_family(beta: f64) -> Result<MultiScaleFamily> {
    MultiScaleFamily::new(
        SquareMatrix::identity(2),
        SquareMatrix::from_rows(&[[1.0, -beta], [0.0, 1.0]])?,
    )
}

/// `Γ = I`, `R = [[1, -β], [-α, 1]]`: two stations feeding each other.
pub fn feedback_family(alpha: f64, beta: f64) -> Result<MultiScaleFamily> {
    MultiScaleFamily::new(
        SquareMatrix::identity(2),
        SquareMatrix::from_rows(&[[1.0, -beta], [-alpha, 1.0]])?,
    )
}

/// Three-station network with `Γ = I`.
pub fn three_station_family() -> Result<MultiScaleFamily> {
    MultiScaleFamily::new(
        SquareMatrix::identity(3),
        SquareMatrix::from_rows(&[[1.0, -0.6, -0.4], [-0.5, 1.0, -0.4], [-0.2, -0.3, 1.0]])?,
    )
}

fn check_unit_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::BadGrid(format!("{name} is empty")));
    }
    if let Some(r) = grid.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::BadGrid(format!("{name} value {r} is outside (0, 1)")));
    }
    Ok(())
}

fn check_budget(dt: f64, factor: f64, burn: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite() && factor > 0.0 && factor.is_finite()) {
        return Err(Error::BadConfig(format!("budgets must be positive, got dt {dt}, horizon factor {factor}")));
    }
    if !(0.0..1.0).contains(&burn) {
        return Err(Error::BadConfig(format!("burn-in fraction {burn} must lie in [0, 1)")));
    }
    Ok(())
}

fn scaled(e: Estimate, w: f64) -> Estimate {
    Estimate {
        value: w * e.value,
        std_error: w * e.std_error,
    }
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// True when each value is at most the previous one plus two combined
/// standard errors.
pub fn decreasing_up_to_ci(col: &[Estimate]) -> bool {
    col.windows(2).all(|w| {
        let slack = 1.96 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].value <= w[0].value + slack
    })
}

/// Log-spaced grid of `n` points from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|i| (hi.ln() + (lo.ln() - hi.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

// ---------------------------------------------------------------------------
// Convergence of the tandem family

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSpec {
    pub betas: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub dt: f64,
    /// Horizon is `horizon_factor / r⁴`.
    pub horizon_factor: f64,
    pub burn_in_fraction: f64,
    pub seed: u64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 0.25, 0.5, 0.75],
            r_grid: vec![0.5, 0.4, 0.3, 0.2, 0.1],
            dt: 0.01,
            horizon_factor: 3000.0,
            burn_in_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub beta: f64,
    pub r: f64,
    pub horizon: f64,
    /// `E[r Z_1]` through the BAR mean identity.
    pub scaled_mean_1: Estimate,
    /// `|E[r Z_1] - m_1| / E[r Z_1]` from the identity estimate.
    pub relative_error: Estimate,
    /// The same two quantities from the plain time average.
    pub scaled_mean_1_direct: Estimate,
    pub relative_error_direct: Estimate,
    /// `E[r² Z_2]`, time average.
    pub scaled_mean_2: Estimate,
    pub correlation: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub beta: f64,
    /// Least-squares slope of log relative error on log r; `None` when the
    /// error vanishes identically.
    pub slope: Option<f64>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub spec: ConvergenceSpec,
    pub rows: Vec<ConvergenceRow>,
    pub slopes: Vec<SlopeFit>,
}

/// Simulates one tandem model and returns its row.
pub fn convergence_cell(beta: f64, r: f64, spec: &ConvergenceSpec, seed: u64) -> Result<ConvergenceRow> {
    let family = tandem_family(beta)?;
    let model = family.make_model(r)?;
    let approx = multiscaling_approx(&family, r)?;
    let m1 = approx.m[0];
    let horizon = spec.horizon_factor / r.powi(4);
    let sim = Simulator::new(&model, SimOptions::new(horizon, spec.dt))?;
    let src = StreamedPath {
        sim: &sim,
        init: approx.scaled_means.clone(),
        seed,
    };
    let mut acc = Accumulator::new(src.window(Some(spec.burn_in_fraction * horizon))?, 2);
    let z1 = acc.interior(|z| z[0]);
    let z2 = acc.interior(|z| z[1]);
    let z11 = acc.interior(|z| z[0] * z[0]);
    let z22 = acc.interior(|z| z[1] * z[1]);
    let z12 = acc.interior(|z| z[0] * z[1]);
    let id = IdentityMean::register(&mut acc, &model, 0)?;
    let series = acc.run(&src)?;
    let rel = |v: f64| (v - m1).abs() / v;
    let corr = |m: &[f64]| {
        let v1 = m[z11] - m[z1] * m[z1];
        let v2 = m[z22] - m[z2] * m[z2];
        (m[z12] - m[z1] * m[z2]) / (v1 * v2).sqrt()
    };
    Ok(ConvergenceRow {
        beta,
        r,
        horizon,
        scaled_mean_1: series.statistic(|m| r * id.value(m)),
        relative_error: series.statistic(|m| rel(r * id.value(m))),
        scaled_mean_1_direct: scaled(series.estimate(z1), r),
        relative_error_direct: series.statistic(|m| rel(r * m[z1])),
        scaled_mean_2: scaled(series.estimate(z2), r * r),
        correlation: series.statistic(corr),
    })
}

pub fn fig_convergence(spec: &ConvergenceSpec) -> Result<ConvergenceReport> {
    check_unit_grid("r grid", &spec.r_grid)?;
    if let Some(b) = spec.betas.iter().find(|b| !(**b >= 0.0 && **b < 1.0)) {
        return Err(Error::BadGrid(format!("beta {b} is outside [0, 1)")));
    }
    check_budget(spec.dt, spec.horizon_factor, spec.burn_in_fraction)?;
    let mut r_grid = spec.r_grid.clone();
    r_grid.sort_by(|a, b| b.total_cmp(a));
    let cells: Vec<(f64, f64)> = spec
        .betas
        .iter()
        .flat_map(|&b| r_grid.iter().map(move |&r| (b, r)))
        .collect();
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(b, r))| convergence_cell(b, r, spec, derive_seed(spec.seed, &[i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let slopes = spec
        .betas
        .iter()
        .map(|&beta| {
            let sel: Vec<&ConvergenceRow> = rows.iter().filter(|row| row.beta == beta).collect();
            let errs: Vec<Estimate> = sel.iter().map(|row| row.relative_error).collect();
            let slope = (sel.len() >= 2 && errs.iter().all(|e| e.value > 1e-12)).then(|| {
                let xs: Vec<f64> = sel.iter().map(|row| row.r.ln()).collect();
                let ys: Vec<f64> = errs.iter().map(|e| e.value.ln()).collect();
                ols_slope(&xs, &ys)
            });
            SlopeFit {
                beta,
                slope,
                monotone: decreasing_up_to_ci(&errs),
            }
        })
        .collect();
    Ok(ConvergenceReport {
        spec: spec.clone(),
        rows,
        slopes,
    })
}

impl ConvergenceReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let meta = metadata_line("experiment fig-convergence", self.spec.seed, &self.spec)?;
        let header = [
            "beta",
            "r",
            "horizon",
            "scaled_mean_1",
            "scaled_mean_1_se",
            "rel_error",
            "rel_error_se",
            "scaled_mean_1_direct",
            "scaled_mean_1_direct_se",
            "rel_error_direct",
            "rel_error_direct_se",
            "scaled_mean_2",
            "scaled_mean_2_se",
            "correlation",
            "correlation_se",
        ];
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![r.beta.to_string(), r.r.to_string(), r.horizon.to_string()];
                for e in [
                    r.scaled_mean_1,
                    r.relative_error,
                    r.scaled_mean_1_direct,
                    r.relative_error_direct,
                    r.scaled_mean_2,
                    r.correlation,
                ] {
                    v.push(e.value.to_string());
                    v.push(e.std_error.to_string());
                }
                v
            })
            .collect();
        write_table(out, &meta, &header, &rows)
    }

    pub fn write_slopes_csv<W: Write>(&self, out: W) -> Result<()> {
        let meta = metadata_line("experiment fig-convergence slopes", self.spec.seed, &self.spec)?;
        let rows: Vec<Vec<String>> = self
            .slopes
            .iter()
            .map(|s| {
                vec![
                    s.beta.to_string(),
                    s.slope.map_or_else(|| "NA".to_string(), |v| v.to_string()),
                    s.monotone.to_string(),
                ]
            })
            .collect();
        write_table(out, &meta, &["beta", "slope", "monotone"], &rows)
    }
}

// ---------------------------------------------------------------------------
// Multi-scaling against skew-symmetric approximation on the feedback family

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewCompareSpec {
    pub alpha: f64,
    pub beta: f64,
    pub r_grid: Vec<f64>,
    pub dt: f64,
    /// Horizon is `horizon_factor / r⁴`.
    pub horizon_factor: f64,
    pub burn_in_fraction: f64,
    pub scheme: Scheme,
    pub seed: u64,
}

impl SkewCompareSpec {
    /// Eight evenly spaced points from `α + 0.2(1-α)` to `α + 0.9(1-α)`.
    pub fn default_grid(alpha: f64) -> Vec<f64> {
        (0..8).map(|i| alpha + (0.2 + 0.1 * i as f64) * (1.0 - alpha)).collect()
    }

    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            r_grid: Self::default_grid(alpha),
            dt: 0.01,
            horizon_factor: 25_000.0,
            burn_in_fraction: 0.2,
            scheme: Scheme::BridgeMinimum,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewCompareRow {
    pub r: f64,
    pub horizon: f64,
    /// Simulated `E[r² Z_2]`.
    pub simulated: Estimate,
    pub multiscaling_prediction: f64,
    pub skew_prediction: f64,
    pub multiscaling_error: Estimate,
    pub skew_error: Estimate,
    /// `skew_error - multiscaling_error`.
    pub difference: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewCompareReport {
    pub spec: SkewCompareSpec,
    pub rows: Vec<SkewCompareRow>,
}

pub fn fig_skew_compare(spec: &SkewCompareSpec) -> Result<SkewCompareReport> {
    if !(spec.alpha > 0.0 && spec.alpha < 1.0 && spec.beta > 0.0 && spec.beta <= 1.0) {
        return Err(Error::BadGrid(format!(
            "need alpha in (0, 1) and beta in (0, 1], got {} and {}",
            spec.alpha, spec.beta
        )));
    }
    check_unit_grid("r grid", &spec.r_grid)?;
    if let Some(r) = spec.r_grid.iter().find(|r| **r <= spec.alpha) {
        return Err(Error::BadGrid(format!(
            "r = {r} must exceed alpha = {} so that both drifts are negative",
            spec.alpha
        )));
    }
    check_budget(spec.dt, spec.horizon_factor, spec.burn_in_fraction)?;
    let family = feedback_family(spec.alpha, spec.beta)?;
    let mut grid = spec.r_grid.clone();
    grid.sort_by(|a, b| a.total_cmp(b));
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(i, &r)| skew_cell(&family, r, spec, derive_seed(spec.seed, &[i as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(SkewCompareReport {
        spec: spec.clone(),
        rows,
    })
}

fn skew_cell(family: &MultiScaleFamily, r: f64, spec: &SkewCompareSpec, seed: u64) -> Result<SkewCompareRow> {
    let model = family.make_model(r)?;
    let approx = multiscaling_approx(family, r)?;
    let r2 = r * r;
    let ms = approx.m[1];
    let skew = model.skew_approx_means()?[1] * r2;
    let horizon = spec.horizon_factor / r.powi(4);
    let sim = Simulator::new(&model, SimOptions::new(horizon, spec.dt).with_scheme(spec.scheme))?;
    let src = StreamedPath {
        sim: &sim,
        init: approx.scaled_means.clone(),
        seed,
    };
    let mut acc = Accumulator::new(src.window(Some(spec.burn_in_fraction * horizon))?, 2);
    let c = acc.interior(move |z| r2 * z[1]);
    let series = acc.run(&src)?;
    let rel = |v: f64, p: f64| (v - p).abs() / v;
    Ok(SkewCompareRow {
        r,
        horizon,
        simulated: series.estimate(c),
        multiscaling_prediction: ms,
        skew_prediction: skew,
        multiscaling_error: series.statistic(|m| rel(m[c], ms)),
        skew_error: series.statistic(|m| rel(m[c], skew)),
        difference: series.statistic(|m| rel(m[c], skew) - rel(m[c], ms)),
    })
}

impl SkewCompareReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let meta = metadata_line("experiment fig-skew-compare", self.spec.seed, &self.spec)?;
        let header = [
            "r",
            "horizon",
            "simulated",
            "simulated_se",
            "multiscaling_prediction",
            "skew_prediction",
            "multiscaling_rel_error",
            "multiscaling_rel_error_se",
            "skew_rel_error",
            "skew_rel_error_se",
            "difference",
            "difference_se",
        ];
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                vec![
                    row.r.to_string(),
                    row.horizon.to_string(),
                    row.simulated.value.to_string(),
                    row.simulated.std_error.to_string(),
                    row.multiscaling_prediction.to_string(),
                    row.skew_prediction.to_string(),
                    row.multiscaling_error.value.to_string(),
                    row.multiscaling_error.std_error.to_string(),
                    row.skew_error.value.to_string(),
                    row.skew_error.std_error.to_string(),
                    row.difference.value.to_string(),
                    row.difference.std_error.to_string(),
                ]
            })
            .collect();
        write_table(out, &meta, &header, &rows)
    }
}

// ---------------------------------------------------------------------------
// MLMC initial-distribution sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmcSweepSpec {
    pub inits: Vec<InitKind>,
    pub levels: Vec<usize>,
    pub base_horizons: Vec<f64>,
    pub gamma_base: f64,
    pub n_paths: usize,
    pub n_replications: usize,
    pub step_constant: f64,
    pub seed: u64,
}

impl Default for MlmcSweepSpec {
    fn default() -> Self {
        Self {
            inits: InitKind::ALL.to_vec(),
            levels: vec![1, 2, 3, 4],
            base_horizons: vec![2000.0, 5000.0, 50_000.0],
            gamma_base: 0.2,
            n_paths: 200,
            n_replications: 10,
            step_constant: 100.0,
            seed: 0,
        }
    }
}

impl MlmcSweepSpec {
    pub fn config(&self, init: InitKind, levels: usize, base_horizon: f64, seed: u64) -> MlmcConfig {
        let mut c = MlmcConfig::new(levels, base_horizon, self.gamma_base, init);
        c.n_paths = self.n_paths;
        c.n_replications = self.n_replications;
        c.step_constant = self.step_constant;
        c.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlmcSweepReport {
    pub spec: MlmcSweepSpec,
    /// Ordered by base horizon, then levels, then init kind as given.
    pub results: Vec<ReplicatedEstimate>,
    /// Mean over init kinds of the highest-cost configuration, per dimension.
    pub reference: Vec<f64>,
    pub reference_halfwidth: Vec<f64>,
}

impl MlmcSweepReport {
    pub fn find(&self, init: InitKind, levels: usize, base_horizon: f64) -> Option<&ReplicatedEstimate> {
        self.results.iter().find(|r| {
            r.config.init_kind == init && r.config.levels == levels && r.config.base_horizon == base_horizon
        })
    }

    /// `estimate - reference` per dimension.
    pub fn bias(&self, r: &ReplicatedEstimate) -> Vec<f64> {
        r.mean.iter().zip(&self.reference).map(|(m, c)| m - c).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let budget = if self.spec.n_paths < 2000 || self.spec.n_replications < 50 {
            format!(
                " budget=reduced(paths={},replications={})",
                self.spec.n_paths, self.spec.n_replications
            )
        } else {
            String::new()
        };
        let meta = metadata_line("experiment fig-mlmc", self.spec.seed, &self.spec)? + &budget;
        let mut header: Vec<&str> = RESULTS_HEADER.to_vec();
        header.extend(["reference", "bias"]);
        let mut rows = results_rows(&self.results);
        let d = self.reference.len();
        for (row, i) in rows.iter_mut().zip((0..self.results.len()).flat_map(|k| (0..d).map(move |i| (k, i)))) {
            let (k, dim) = i;
            row.push(self.reference[dim].to_string());
            row.push((self.results[k].mean[dim] - self.reference[dim]).to_string());
        }
        write_table(out, &meta, &header, &rows)
    }
}

/// Runs every (base horizon, levels, init) configuration. Configurations
/// sharing `(T, L)` share seeds, so init kinds see common random numbers.
pub fn fig_mlmc(model: &SrbmModel, spec: &MlmcSweepSpec) -> Result<MlmcSweepReport> {
    if spec.inits.is_empty() || spec.levels.is_empty() || spec.base_horizons.is_empty() {
        return Err(Error::BadGrid("inits, levels and base horizons must be nonempty".into()));
    }
    let mut results = Vec::new();
    for (ti, &t) in spec.base_horizons.iter().enumerate() {
        for (li, &l) in spec.levels.iter().enumerate() {
            let seed = derive_seed(spec.seed, &[ti as u64, li as u64]);
            for &init in &spec.inits {
                results.push(replicate_ci(model, &spec.config(init, l, t, seed))?);
            }
        }
    }
    let top = results.iter().map(|r| r.cost).max().expect("nonempty sweep");
    let best: Vec<&ReplicatedEstimate> = results.iter().filter(|r| r.cost == top).collect();
    let d = model.dim();
    let n = best.len() as f64;
    let reference = (0..d).map(|i| best.iter().map(|r| r.mean[i]).sum::<f64>() / n).collect();
    let reference_halfwidth = (0..d)
        .map(|i| best.iter().map(|r| r.ci_halfwidth[i].powi(2)).sum::<f64>().sqrt() / n)
        .collect();
    Ok(MlmcSweepReport {
        spec: spec.clone(),
        results,
        reference,
        reference_halfwidth,
    })
}
