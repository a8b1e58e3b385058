//! Multilevel Monte Carlo for stationary means.
//!
//! Level `ℓ` simulates to horizon `(ℓ+1) T` with step `c γ^ℓ` and reports the
//! time average of the state over the last half of its horizon. The
//! estimator telescopes `E[P_0] + Σ_{ℓ>=1} E[P_ℓ - P_{ℓ-1}]`, where each
//! difference couples a fine level-`ℓ` path with a coarse level-`(ℓ-1)` path.
//! The two are end-aligned: the coarse path starts from the same initial
//! state at time `T` of the fine path and, from then on, moves by sums of
//! `1/γ` consecutive fine increments. Sharing the final stretch of noise is
//! what makes the difference small, since reflected paths driven by the same
//! noise forget their starting points.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::compute_m;
use crate::error::{Error, Result};
use crate::model::SrbmModel;
use crate::sim::{derive_seed, path_rng, step_count, InitialDistribution, SimOptions, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Origin,
    Skew,
    Multiscaling,
}

impl InitKind {
    pub const ALL: [InitKind; 3] = [InitKind::Origin, InitKind::Skew, InitKind::Multiscaling];

    pub fn name(self) -> &'static str {
        match self {
            InitKind::Origin => "origin",
            InitKind::Skew => "skew",
            InitKind::Multiscaling => "multiscaling",
        }
    }
}

/// Means of the product-exponential initial law for `kind`.
///
/// `Multiscaling` uses `m_k / δ_k`, which for a family member at scale `r`
/// is exactly the scaled mean `m_k / r^k`.
pub fn initial_means(model: &SrbmModel, kind: InitKind) -> Result<Vec<f64>> {
    match kind {
        InitKind::Origin => Ok(vec![0.0; model.dim()]),
        InitKind::Skew => model.skew_approx_means(),
        InitKind::Multiscaling => (0..model.dim())
            .map(|k| Ok(compute_m(model.gamma(), model.reflection(), k)? / model.slackness()[k]))
            .collect(),
    }
}

pub fn initial_distribution(model: &SrbmModel, kind: InitKind) -> Result<InitialDistribution> {
    match kind {
        InitKind::Origin => Ok(InitialDistribution::Origin(model.dim())),
        _ => InitialDistribution::product_exponential(initial_means(model, kind)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmcConfig {
    pub levels: usize,
    pub base_horizon: f64,
    pub gamma_base: f64,
    pub n_paths: usize,
    pub n_replications: usize,
    pub init_kind: InitKind,
    pub seed: u64,
    /// Level-0 step size; level `ℓ` uses `step_constant · γ^ℓ`.
    pub step_constant: f64,
    /// Fraction of each horizon, at its end, that is averaged.
    pub window_fraction: f64,
    /// Multiplies the Brownian part; `0` is the noiseless hook.
    pub noise_scale: f64,
}

impl MlmcConfig {
    pub fn new(levels: usize, base_horizon: f64, gamma_base: f64, init_kind: InitKind) -> Self {
        Self {
            levels,
            base_horizon,
            gamma_base,
            n_paths: 200,
            n_replications: 10,
            init_kind,
            seed: 0,
            step_constant: 100.0,
            window_fraction: 0.5,
            noise_scale: 1.0,
        }
    }

    pub fn step(&self, level: usize) -> f64 {
        self.step_constant * self.gamma_base.powi(level as i32)
    }

    pub fn horizon(&self, level: usize) -> f64 {
        (level + 1) as f64 * self.base_horizon
    }

    pub fn steps_at(&self, level: usize) -> usize {
        step_count(self.horizon(level), self.step(level))
    }

    /// Fine steps per coarse step.
    pub fn refinement(&self) -> usize {
        (1.0 / self.gamma_base).round() as usize
    }

    /// `Σ_ℓ n_paths · ceil((ℓ+1) T / (c γ^ℓ))`, counting fine steps.
    pub fn cost(&self) -> u64 {
        (0..self.levels)
            .map(|l| self.n_paths as u64 * self.steps_at(l) as u64)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadConfig(msg));
        if self.levels == 0 {
            return bad("at least one level is required".into());
        }
        if !(self.base_horizon.is_finite() && self.base_horizon > 0.0) {
            return bad(format!("base horizon must be positive, got {}", self.base_horizon));
        }
        if !(self.gamma_base > 0.0 && self.gamma_base < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma_base));
        }
        let inv = 1.0 / self.gamma_base;
        if self.levels > 1 && (inv - inv.round()).abs() > 1e-9 * inv {
            return bad(format!("1/gamma = {inv} must be an integer to nest the levels"));
        }
        if !(self.step_constant.is_finite() && self.step_constant > 0.0) {
            return bad(format!("step constant must be positive, got {}", self.step_constant));
        }
        if self.step(self.levels - 1) >= self.base_horizon {
            return bad(format!(
                "finest step {} must be below the base horizon {}",
                self.step(self.levels - 1),
                self.base_horizon
            ));
        }
        if self.n_paths < 2 {
            return bad("need at least two paths per estimator".into());
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return bad(format!("window fraction must lie in (0, 1], got {}", self.window_fraction));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return bad(format!("noise scale must be nonnegative, got {}", self.noise_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelContribution {
    pub level: usize,
    pub horizon: f64,
    pub step: f64,
    pub steps_per_path: usize,
    /// Mean of `P_0`, or of `P_ℓ - P_{ℓ-1}` for `ℓ >= 1`.
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlmcResult {
    pub estimate: Vec<f64>,
    /// 95% half-width from the within-level sample variances.
    pub ci_halfwidth: Vec<f64>,
    pub cost: u64,
    pub per_level_contributions: Vec<LevelContribution>,
}

/// One MLMC estimator (replication 0 of `cfg`).
pub fn mlmc_estimate(model: &SrbmModel, cfg: &MlmcConfig) -> Result<MlmcResult> {
    cfg.validate()?;
    estimate_replication(model, cfg, 0)
}

fn estimate_replication(model: &SrbmModel, cfg: &MlmcConfig, rep: usize) -> Result<MlmcResult> {
    let d = model.dim();
    let init = initial_distribution(model, cfg.init_kind)?;
    let mut per_level = Vec::with_capacity(cfg.levels);
    for level in 0..cfg.levels {
        let fine = Simulator::new(model, sim_options(cfg, level))?;
        let coarse = if level > 0 {
            Some(Simulator::new(model, sim_options(cfg, level - 1))?)
        } else {
            None
        };
        let samples = (0..cfg.n_paths)
            .into_par_iter()
            .map(|path| {
                let seed = derive_seed(cfg.seed, &[rep as u64, path as u64, level as u64]);
                coupled_sample(cfg, level, &fine, coarse.as_ref(), &init, seed)
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        for s in &samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut variance = vec![0.0; d];
        for s in &samples {
            for i in 0..d {
                variance[i] += (s[i] - mean[i]).powi(2);
            }
        }
        variance.iter_mut().for_each(|v| *v /= n - 1.0);
        per_level.push(LevelContribution {
            level,
            horizon: cfg.horizon(level),
            step: cfg.step(level),
            steps_per_path: cfg.steps_at(level),
            mean,
            variance,
        });
    }
    let estimate = (0..d).map(|i| per_level.iter().map(|l| l.mean[i]).sum()).collect();
    let ci_halfwidth = (0..d)
        .map(|i| {
            let v: f64 = per_level.iter().map(|l| l.variance[i] / cfg.n_paths as f64).sum();
            1.96 * v.sqrt()
        })
        .collect();
    Ok(MlmcResult {
        estimate,
        ci_halfwidth,
        cost: cfg.cost(),
        per_level_contributions: per_level,
    })
}

fn sim_options(cfg: &MlmcConfig, level: usize) -> SimOptions {
    let mut o = SimOptions::new(cfg.horizon(level), cfg.step(level));
    o.noise_scale = cfg.noise_scale;
    o
}

fn window_len(n_steps: usize, fraction: f64) -> usize {
    ((n_steps as f64 * fraction).round() as usize).clamp(1, n_steps)
}

/// `P_0` at level 0, else `P_ℓ - P_{ℓ-1}` on coupled paths.
fn coupled_sample(
    cfg: &MlmcConfig,
    level: usize,
    fine: &Simulator,
    coarse: Option<&Simulator>,
    init: &InitialDistribution,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = init.dim();
    let mut rng = path_rng(seed);
    let z0 = init.sample_with(&mut rng);
    let h = cfg.step(level);
    let n_f = cfg.steps_at(level);
    let w_f = window_len(n_f, cfg.window_fraction);
    let ratio = cfg.refinement();
    let (n_c, offset) = if level > 0 {
        let n_c = cfg.steps_at(level - 1);
        let offset = n_f.checked_sub(ratio * n_c).ok_or_else(|| {
            Error::BadConfig(format!("coarse level {} does not fit inside level {level}", level - 1))
        })?;
        (n_c, offset)
    } else {
        (0, 0)
    };
    let w_c = if level > 0 { window_len(n_c, cfg.window_fraction) } else { 0 };

    let mut zf = z0.clone();
    let mut zc = z0;
    let mut xi = vec![0.0; d];
    let mut dx = vec![0.0; d];
    let mut dxc = vec![0.0; d];
    let mut dy = vec![0.0; d];
    let mut q = vec![0.0; d];
    let mut sum_f = vec![0.0; d];
    let mut sum_c = vec![0.0; d];
    let mut sub = 0;
    let mut j = 0;
    for n in 0..n_f {
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        fine.free_increment(&xi, h, &mut dx);
        fine.reflect_step(&mut zf, &dx, &mut dy, &mut q)?;
        if n >= n_f - w_f {
            for (s, v) in sum_f.iter_mut().zip(&zf) {
                *s += v;
            }
        }
        if let Some(c) = coarse {
            if n >= offset {
                for (a, v) in dxc.iter_mut().zip(&dx) {
                    *a += v;
                }
                sub += 1;
                if sub == ratio {
                    c.reflect_step(&mut zc, &dxc, &mut dy, &mut q)?;
                    if j >= n_c - w_c {
                        for (s, v) in sum_c.iter_mut().zip(&zc) {
                            *s += v;
                        }
                    }
                    dxc.iter_mut().for_each(|a| *a = 0.0);
                    sub = 0;
                    j += 1;
                }
            }
        }
    }
    Ok((0..d)
        .map(|i| {
            let f = sum_f[i] / w_f as f64;
            if coarse.is_some() {
                f - sum_c[i] / w_c as f64
            } else {
                f
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicatedEstimate {
    pub config: MlmcConfig,
    pub mean: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// Cost of one estimator.
    pub cost: u64,
    pub replications: Vec<Vec<f64>>,
}

/// Mean of `n_replications` independent estimators with a
/// `1.96 s / √n` confidence interval.
pub fn replicate_ci(model: &SrbmModel, cfg: &MlmcConfig) -> Result<ReplicatedEstimate> {
    cfg.validate()?;
    if cfg.n_replications < 2 {
        return Err(Error::BadConfig(format!(
            "need at least two replications, got {}",
            cfg.n_replications
        )));
    }
    let reps = (0..cfg.n_replications)
        .into_par_iter()
        .map(|rep| estimate_replication(model, cfg, rep).map(|r| r.estimate))
        .collect::<Result<Vec<_>>>()?;
    let d = model.dim();
    let n = reps.len() as f64;
    let mean: Vec<f64> = (0..d).map(|i| reps.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let ci_halfwidth: Vec<f64> = (0..d)
        .map(|i| {
            let var = reps.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        })
        .collect();
    Ok(ReplicatedEstimate {
        config: *cfg,
        ci_low: mean.iter().zip(&ci_halfwidth).map(|(m, h)| m - h).collect(),
        ci_high: mean.iter().zip(&ci_halfwidth).map(|(m, h)| m + h).collect(),
        mean,
        ci_halfwidth,
        cost: cfg.cost(),
        replications: reps,
    })
}

pub const RESULTS_HEADER: [&str; 9] = ["init_kind", "L", "T", "gamma", "cost", "dim", "estimate", "ci_low", "ci_high"];

/// One row per (estimate, dimension); dimensions are 1-based.
pub fn results_rows(results: &[ReplicatedEstimate]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in results {
        for i in 0..r.mean.len() {
            rows.push(vec![
                r.config.init_kind.name().to_string(),
                r.config.levels.to_string(),
                r.config.base_horizon.to_string(),
                r.config.gamma_base.to_string(),
                r.cost.to_string(),
                (i + 1).to_string(),
                r.mean[i].to_string(),
                r.ci_low[i].to_string(),
                r.ci_high[i].to_string(),
            ]);
        }
    }
    rows
}
