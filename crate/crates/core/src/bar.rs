//! Empirical checks of the basic adjoint relationship (BAR).
//!
//! For exponential test functions `f_θ(z) = exp(θᵀz)` the stationary law `π`
//! and boundary measures `ν_i` satisfy
//! `½ θᵀΓθ φ(θ) + Σ_i δ_i θᵀR_i (φ_i(θ) - φ(θ)) = 0`, with `φ = E_π[f_θ]` and
//! `φ_i = E_{ν_i}[f_θ]`. For `θ` with positive entries the test function is
//! capped through [`kappa`], which adds an extra term `γ(θ)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::approx::{build_theta, multiscaling_approx, ApproxResult};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{MultiScaleFamily, SrbmModel};
use crate::sim::{derive_seed, Accumulator, BatchSeries, Estimate, PathSource, SimOptions, Simulator, StreamedPath};

/// Bias allowance per unit `√dt` and unit [`BarResidualReport::leading_scale`].
/// The one-dimensional projected scheme shows about 0.26; see the tests.
pub const BAR_BIAS_CONST: f64 = 0.5;

/// Default `η` values for residual sweeps.
pub const ETA_GRID: [f64; 3] = [-2.0, -1.0, -0.5];

/// Identity below 1, constant 2 above 2, and a C² quintic in between.
pub fn kappa(x: f64) -> f64 {
    if x <= 1.0 {
        x
    } else if x > 2.0 {
        2.0
    } else {
        ((((3.0 * x - 22.0) * x + 62.0) * x - 84.0) * x + 56.0) * x - 14.0
    }
}

pub fn kappa_dot(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x > 2.0 {
        0.0
    } else {
        (((15.0 * x - 88.0) * x + 186.0) * x - 168.0) * x + 56.0
    }
}

pub fn kappa_ddot(x: f64) -> f64 {
    if x <= 1.0 || x > 2.0 {
        0.0
    } else {
        ((60.0 * x - 264.0) * x + 372.0) * x - 168.0
    }
}

/// `exp(θᵀz)`, summed in index order.
pub fn exp_test_value(theta: &[f64], z: &[f64]) -> f64 {
    theta.iter().zip(z).fold(0.0, |s, (t, x)| s + t * x).exp()
}

/// `exp(Σ κ(θ_i z_i))`; equal to [`exp_test_value`] bit for bit when `θ <= 0`.
pub fn truncated_test_value(theta: &[f64], z: &[f64]) -> f64 {
    theta.iter().zip(z).fold(0.0, |s, (t, x)| s + kappa(t * x)).exp()
}

/// `ε_g,j(z) = θ_j (κ̇(θ_j z_j) - 1)`.
pub fn eps_gradient(theta: &[f64], z: &[f64]) -> Vec<f64> {
    theta.iter().zip(z).map(|(t, x)| t * (kappa_dot(t * x) - 1.0)).collect()
}

/// `⟨Γ, ε_H(z)⟩` with
/// `ε_H,ij = θ_iθ_j (κ̇(θ_i z_i) κ̇(θ_j z_j) - 1) + θ_i² κ̈(θ_i z_i) 1{i=j}`.
pub fn eps_hessian_inner(gamma: &crate::linalg::SquareMatrix, theta: &[f64], z: &[f64]) -> f64 {
    let d = theta.len();
    let kd: Vec<f64> = (0..d).map(|i| kappa_dot(theta[i] * z[i])).collect();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut e = theta[i] * theta[j] * (kd[i] * kd[j] - 1.0);
            if i == j {
                e += theta[i] * theta[i] * kappa_ddot(theta[i] * z[i]);
            }
            s += gamma[(i, j)] * e;
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarResidualReport {
    pub theta: Vec<f64>,
    pub residual: f64,
    pub std_error: f64,
    /// `½θᵀΓθ + Σ δ_i |θᵀR_i|`, the size of the terms that cancel.
    pub leading_scale: f64,
    pub interior_mgf: f64,
    pub boundary_mgfs: Vec<f64>,
    /// `γ̂(θ)`, zero unless some `θ_i > 0` and the truncated form is used.
    pub gamma_extra: f64,
    pub threshold: f64,
    pub pass: bool,
}

struct GammaChannels {
    hessian: usize,
    grad_interior: Vec<usize>,
    grad_boundary: Vec<usize>,
}

struct ThetaChannels {
    theta: Vec<f64>,
    phi: usize,
    phi_boundary: Vec<usize>,
    gamma: Option<GammaChannels>,
}

fn register<'a>(acc: &mut Accumulator<'a>, model: &'a SrbmModel, theta: &[f64], truncated: bool) -> Result<ThetaChannels> {
    let d = model.dim();
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: theta.len(),
        });
    }
    let any_positive = theta.iter().any(|&t| t > 0.0);
    if !truncated && any_positive {
        let (index, &value) = theta.iter().enumerate().find(|(_, &t)| t > 0.0).expect("positive entry");
        return Err(Error::PositiveTheta { index, value });
    }
    let delta = model.slackness();
    let test: fn(&[f64], &[f64]) -> f64 = if truncated { truncated_test_value } else { exp_test_value };
    let th = theta.to_vec();
    let phi = {
        let th = th.clone();
        acc.interior(move |z| test(&th, z))
    };
    let mut phi_boundary = Vec::with_capacity(d);
    for (i, &di) in delta.iter().enumerate() {
        let th = th.clone();
        phi_boundary.push(acc.boundary(i, di, move |z| test(&th, z))?);
    }
    // For θ <= 0 every ε term vanishes identically, so no channels are needed.
    let gamma = if truncated && any_positive {
        let r = model.reflection();
        let hessian = {
            let th = th.clone();
            let g = model.gamma();
            acc.interior(move |z| eps_hessian_inner(g, &th, z) * truncated_test_value(&th, z))
        };
        let mut grad_interior = Vec::with_capacity(d);
        let mut grad_boundary = Vec::with_capacity(d);
        for (i, &di) in delta.iter().enumerate() {
            let col = r.column(i);
            let f = {
                let th = th.clone();
                move |z: &[f64]| dot(&eps_gradient(&th, z), &col) * truncated_test_value(&th, z)
            };
            let f2 = f.clone();
            grad_interior.push(acc.interior(f));
            grad_boundary.push(acc.boundary(i, di, f2)?);
        }
        Some(GammaChannels {
            hessian,
            grad_interior,
            grad_boundary,
        })
    } else {
        None
    };
    Ok(ThetaChannels {
        theta: th,
        phi,
        phi_boundary,
        gamma,
    })
}

fn gamma_value(model: &SrbmModel, g: &GammaChannels, m: &[f64]) -> f64 {
    let delta = model.slackness();
    let mut s = 0.5 * m[g.hessian];
    for i in 0..delta.len() {
        s += delta[i] * (m[g.grad_boundary[i]] - m[g.grad_interior[i]]);
    }
    s
}

fn evaluate(model: &SrbmModel, series: &BatchSeries, ch: &ThetaChannels) -> BarResidualReport {
    let theta = &ch.theta;
    let delta = model.slackness();
    let r = model.reflection();
    let quad = 0.5 * model.gamma().quadratic_form(theta);
    let thr: Vec<f64> = (0..delta.len()).map(|i| dot(theta, &r.column(i))).collect();
    let base = |m: &[f64]| {
        let phi = m[ch.phi];
        let mut s = quad * phi;
        for i in 0..delta.len() {
            s += delta[i] * thr[i] * (m[ch.phi_boundary[i]] - phi);
        }
        s
    };
    let (est, gamma_extra) = match &ch.gamma {
        None => (series.statistic(base), 0.0),
        Some(g) => (
            series.statistic(|m| base(m) + gamma_value(model, g, m)),
            gamma_value(model, g, &series.channel_means()),
        ),
    };
    let means = series.channel_means();
    let leading_scale = quad + (0..delta.len()).map(|i| delta[i] * thr[i].abs()).sum::<f64>();
    let threshold = 3.0 * est.std_error + BAR_BIAS_CONST * series.window.dt.sqrt() * leading_scale;
    BarResidualReport {
        theta: theta.clone(),
        residual: est.value,
        std_error: est.std_error,
        leading_scale,
        interior_mgf: means[ch.phi],
        boundary_mgfs: ch.phi_boundary.iter().map(|&c| means[c]).collect(),
        gamma_extra,
        threshold,
        pass: est.value.abs() <= threshold,
    }
}

/// Residuals for many `θ` from a single pass over the path.
pub fn bar_residuals(
    model: &SrbmModel,
    src: &(impl PathSource + ?Sized),
    thetas: &[Vec<f64>],
    burn_in: Option<f64>,
    truncated: bool,
) -> Result<Vec<BarResidualReport>> {
    let mut acc = Accumulator::new(src.window(burn_in)?, model.dim());
    let chans = thetas
        .iter()
        .map(|t| register(&mut acc, model, t, truncated))
        .collect::<Result<Vec<_>>>()?;
    let series = acc.run(src)?;
    Ok(chans.iter().map(|c| evaluate(model, &series, c)).collect())
}

/// Plain MGF-BAR residual; requires `θ <= 0`.
pub fn mgf_bar_residual(
    model: &SrbmModel,
    src: &(impl PathSource + ?Sized),
    theta: &[f64],
    burn_in: Option<f64>,
) -> Result<BarResidualReport> {
    Ok(bar_residuals(model, src, &[theta.to_vec()], burn_in, false)?.remove(0))
}

/// Truncated MGF-BAR residual including `γ̂(θ)`; any real `θ`.
pub fn truncated_bar_residual(
    model: &SrbmModel,
    src: &(impl PathSource + ?Sized),
    theta: &[f64],
    burn_in: Option<f64>,
) -> Result<BarResidualReport> {
    Ok(bar_residuals(model, src, &[theta.to_vec()], burn_in, true)?.remove(0))
}

/// `γ̂(θ)` with its batch-means error; exactly zero for `θ <= 0`.
pub fn estimate_gamma_extra(
    model: &SrbmModel,
    src: &(impl PathSource + ?Sized),
    theta: &[f64],
    burn_in: Option<f64>,
) -> Result<Estimate> {
    let mut acc = Accumulator::new(src.window(burn_in)?, model.dim());
    let ch = register(&mut acc, model, theta, true)?;
    let series = acc.run(src)?;
    Ok(match &ch.gamma {
        None => Estimate {
            value: 0.0,
            std_error: 0.0,
        },
        Some(g) => series.statistic(|m| gamma_value(model, g, m)),
    })
}

/// `θ_k` vectors for every component and every `η` in [`ETA_GRID`], with `η`
/// constant on the active coordinates `l >= k`.
pub fn theta_sweep(approx: &ApproxResult, tilde: bool) -> Result<Vec<Vec<f64>>> {
    let d = approx.dim();
    let mut out = Vec::new();
    for k in 0..d {
        for &e in &ETA_GRID {
            let eta: Vec<f64> = (0..d).map(|l| if l >= k { e } else { 0.0 }).collect();
            out.push(build_theta(approx, k, &eta, tilde)?.values);
        }
    }
    Ok(out)
}

/// Mean of `Z_k` from BAR with the test function `z_k²`:
/// `E[Z_k] = -(Γ_kk + 2 Σ_{i≠k} δ_i R_ki E_{ν_i}[Z_k]) / (2 μ_k)`.
///
/// Only boundary averages enter, which are far less noisy than the time
/// average of `Z_k` itself. Requires `μ_k < 0`.
pub struct IdentityMean {
    k: usize,
    scale: f64,
    gamma_kk: f64,
    /// `(2 δ_i R_ki, channel)` per face `i != k`.
    terms: Vec<(f64, usize)>,
}

impl IdentityMean {
    pub fn register(acc: &mut Accumulator<'_>, model: &SrbmModel, k: usize) -> Result<Self> {
        let d = model.dim();
        if k >= d {
            return Err(Error::BadComponent { k, d });
        }
        let mu_k = model.mu()[k];
        if !(mu_k < 0.0) {
            return Err(Error::BadConfig(format!(
                "mean identity needs a negative drift in component {k}, got {mu_k}"
            )));
        }
        let delta = model.slackness();
        let r = model.reflection();
        let terms = (0..d)
            .filter(|&i| i != k)
            .map(|i| Ok((2.0 * delta[i] * r[(k, i)], acc.boundary(i, delta[i], move |z| z[k])?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            k,
            scale: -1.0 / (2.0 * mu_k),
            gamma_kk: model.gamma()[(k, k)],
            terms,
        })
    }

    pub fn component(&self) -> usize {
        self.k
    }

    /// The identity evaluated on channel means.
    pub fn value(&self, m: &[f64]) -> f64 {
        let s: f64 = self.terms.iter().map(|&(c, ch)| c * m[ch]).sum();
        self.scale * (self.gamma_kk + s)
    }
}

pub fn bar_identity_mean(
    model: &SrbmModel,
    src: &(impl PathSource + ?Sized),
    k: usize,
    burn_in: Option<f64>,
) -> Result<Estimate> {
    let mut acc = Accumulator::new(src.window(burn_in)?, model.dim());
    let id = IdentityMean::register(&mut acc, model, k)?;
    Ok(acc.run(src)?.statistic(|m| id.value(m)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSimConfig {
    pub dt: f64,
    /// Horizon is `horizon_factor / r^(2d)`, tracking the slowest relaxation time.
    pub horizon_factor: f64,
    pub burn_in_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentBoundRow {
    pub r: f64,
    /// `Ê_π[(r^k Z_k)^n]` (1-based power of `r`).
    pub interior: Estimate,
    /// Per face `i`: `r^(i-1) Ê_{ν_i}[(r^k Z_k)^n]`, bounded under the moment condition.
    pub boundary_scaled: Vec<Estimate>,
    /// Per face `i`: `r Ê_{ν_i}[(r^k Z_k)^n]`, which tends to zero.
    pub boundary_vanishing: Vec<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentBoundReport {
    pub k: usize,
    pub n: u32,
    /// Rows sorted by decreasing `r`.
    pub rows: Vec<MomentBoundRow>,
    /// `max / min` of the interior column.
    pub interior_band: f64,
    /// Per face: the vanishing column is all zero, or falls from the largest
    /// to the smallest `r` with no step up beyond two combined errors.
    pub vanishing_trend_down: Vec<bool>,
}

/// Simulates the family on `r_grid` and tabulates the uniform moment bounds
/// for component `k` (0-based) and power `n`.
pub fn moment_bound_report(
    family: &MultiScaleFamily,
    r_grid: &[f64],
    k: usize,
    n: u32,
    cfg: &MomentSimConfig,
) -> Result<MomentBoundReport> {
    let d = family.dim();
    if k >= d {
        return Err(Error::BadComponent { k, d });
    }
    if n == 0 || n as usize > d {
        return Err(Error::BadConfig(format!("moment power {n} must lie in 1..={d}")));
    }
    if r_grid.is_empty() {
        return Err(Error::BadGrid("empty r grid".into()));
    }
    let mut grid = r_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    let mut rows = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &r)| moment_row(family, r, k, n, cfg, derive_seed(cfg.seed, &[idx as u64])))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.r.total_cmp(&a.r));
    let vals: Vec<f64> = rows.iter().map(|row| row.interior.value).collect();
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let vanishing_trend_down = (0..d)
        .map(|i| {
            let col: Vec<Estimate> = rows.iter().map(|row| row.boundary_vanishing[i]).collect();
            trend_down(&col)
        })
        .collect();
    Ok(MomentBoundReport {
        k,
        n,
        rows,
        interior_band: hi / lo,
        vanishing_trend_down,
    })
}

fn trend_down(col: &[Estimate]) -> bool {
    if col.iter().all(|e| e.value == 0.0) {
        return true;
    }
    let steps_ok = col.windows(2).all(|w| {
        let slack = 2.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].value <= w[0].value + slack
    });
    steps_ok && col.last().map(|e| e.value) < col.first().map(|e| e.value)
}

fn moment_row(family: &MultiScaleFamily, r: f64, k: usize, n: u32, cfg: &MomentSimConfig, seed: u64) -> Result<MomentBoundRow> {
    let d = family.dim();
    let model = family.make_model(r)?;
    let approx = multiscaling_approx(family, r)?;
    let horizon = cfg.horizon_factor / r.powi(2 * d as i32);
    let sim = Simulator::new(&model, SimOptions::new(horizon, cfg.dt))?;
    let src = StreamedPath {
        sim: &sim,
        // Start at the approximate means to shorten the transient.
        init: approx.scaled_means.clone(),
        seed,
    };
    let scale = r.powi(k as i32 + 1);
    let f = move |z: &[f64]| (scale * z[k]).powi(n as i32);
    let mut acc = Accumulator::new(src.window(Some(cfg.burn_in_fraction * horizon))?, d);
    let interior = acc.interior(f);
    let faces = model
        .slackness()
        .iter()
        .enumerate()
        .map(|(i, &di)| acc.boundary(i, di, f))
        .collect::<Result<Vec<_>>>()?;
    let series = acc.run(&src)?;
    let scaled = |c: usize, w: f64| {
        let e = series.estimate(c);
        Estimate {
            value: w * e.value,
            std_error: w * e.std_error,
        }
    };
    Ok(MomentBoundRow {
        r,
        interior: series.estimate(interior),
        boundary_scaled: faces.iter().enumerate().map(|(i, &c)| scaled(c, r.powi(i as i32))).collect(),
        boundary_vanishing: faces.iter().map(|&c| scaled(c, r)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SquareMatrix;
    use crate::sim::simulate_path;

    fn one_d() -> SrbmModel {
        SrbmModel::new(SquareMatrix::identity(1), vec![-1.0], SquareMatrix::identity(1)).unwrap()
    }

    #[test]
    fn kappa_values() {
        assert_eq!(kappa(0.5), 0.5);
        assert_eq!(kappa(3.0), 2.0);
        assert!((kappa(1.5) - 1.65625).abs() < 1e-15);
        assert_eq!(kappa(-4.0), -4.0);
    }

    #[test]
    fn kappa_is_c2_at_knots() {
        let quintic = |x: f64| ((((3.0 * x - 22.0) * x + 62.0) * x - 84.0) * x + 56.0) * x - 14.0;
        let quintic_d = |x: f64| (((15.0 * x - 88.0) * x + 186.0) * x - 168.0) * x + 56.0;
        let quintic_dd = |x: f64| ((60.0 * x - 264.0) * x + 372.0) * x - 168.0;
        assert!((quintic(1.0) - 1.0).abs() < 1e-12);
        assert!((quintic_d(1.0) - 1.0).abs() < 1e-12);
        assert!(quintic_dd(1.0).abs() < 1e-12);
        assert!((quintic(2.0) - 2.0).abs() < 1e-12);
        assert!(quintic_d(2.0).abs() < 1e-12);
        assert!(quintic_dd(2.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_test_function_cases() {
        assert_eq!(truncated_test_value(&[0.0, 0.0], &[3.0, 4.0]), 1.0);
        assert!((truncated_test_value(&[1.0], &[3.0]) - 2f64.exp()).abs() < 1e-15);
        let th = [-0.3, -1.2];
        let z = [0.7, 2.5];
        assert_eq!(truncated_test_value(&th, &z), exp_test_value(&th, &z));
    }

    #[test]
    fn zero_theta_gives_zero_residual() {
        let p = simulate_path(&one_d(), 50.0, 0.01, &[0.0], 3).unwrap();
        let r = mgf_bar_residual(&one_d(), &p, &[0.0], None).unwrap();
        assert_eq!(r.residual, 0.0);
        assert!(r.pass || r.threshold == 0.0);
    }

    #[test]
    fn plain_residual_rejects_positive_theta() {
        let p = simulate_path(&one_d(), 10.0, 0.01, &[0.0], 3).unwrap();
        assert_eq!(
            mgf_bar_residual(&one_d(), &p, &[0.5], None).unwrap_err(),
            Error::PositiveTheta { index: 0, value: 0.5 }
        );
        assert!(truncated_bar_residual(&one_d(), &p, &[0.5], None).is_ok());
    }

    #[test]
    fn one_d_residual_bias_is_within_calibration() {
        // At θ = -1 the exact law gives φ = 2/3, φ_1 = 1 and zero residual.
        // The projected scheme shifts it by about 0.26 √dt per unit scale.
        for (h, seed) in [(0.04, 1u64), (0.01, 2)] {
            let sim = Simulator::new(&one_d(), SimOptions::new(40_000.0, h)).unwrap();
            let src = StreamedPath {
                sim: &sim,
                init: vec![0.5],
                seed,
            };
            let rep = mgf_bar_residual(&one_d(), &src, &[-1.0], None).unwrap();
            let ratio = rep.residual.abs() / (h.sqrt() * rep.leading_scale);
            assert!(ratio < BAR_BIAS_CONST, "dt {h}: residual {} ratio {ratio}", rep.residual);
            assert!(rep.pass);
        }
    }

    #[test]
    fn identity_mean_in_one_dimension() {
        // No other faces, so the identity returns Γ / (2|μ|) exactly.
        let p = simulate_path(&one_d(), 10.0, 0.01, &[0.0], 3).unwrap();
        let e = bar_identity_mean(&one_d(), &p, 0, None).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.std_error, 0.0);
    }
}
