//! Discretized SRBM paths.
//!
//! Each step draws the free increment `ΔX = μ h + √h L ξ` (`L Lᵀ = Γ`) and
//! pushes the state back into the orthant with one LCP solve against `R`.
//! Paths are either recorded into a [`PathSample`] or streamed into a
//! [`StepObserver`], which is how long runs avoid storing every state.

mod estimate;
pub mod rng;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcp::ReflectionMap;
use crate::linalg::{cholesky, SquareMatrix};
use crate::model::SrbmModel;

pub use estimate::{
    boundary_expectation, empirical_measures, interior_expectation, stationary_estimate, Accumulator,
    BatchSeries, EmpiricalMeasures, Estimate, PathSource, StationaryEstimate, StreamedPath, Window,
    N_BATCHES,
};
pub use rng::{derive_seed, path_rng, PathRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Reflect the end point of the Euler step: `(Z', ΔY) = LCP(R, Z + ΔX)`.
    /// Complementarity holds exactly at every step.
    #[default]
    ProjectedEuler,
    /// Reflect against the per-coordinate Brownian-bridge minimum of the free
    /// increment, then add the full increment. Exact in one dimension, but
    /// the post-step state is generally off the face when `ΔY > 0`.
    BridgeMinimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    /// Multiplies the Brownian part; `0` gives the noiseless path.
    pub noise_scale: f64,
}

impl SimOptions {
    pub fn new(horizon: f64, dt: f64) -> Self {
        Self {
            dt,
            horizon,
            scheme: Scheme::ProjectedEuler,
            noise_scale: 1.0,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_scale = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::BadSimulation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::BadSimulation(format!(
                "horizon {} must be at least dt {}",
                self.horizon, self.dt
            )));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::BadSimulation(format!(
                "noise scale must be nonnegative, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        step_count(self.horizon, self.dt)
    }
}

/// `ceil(horizon / dt)`, treating ratios within round-off of an integer as exact.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    let x = horizon / dt;
    let near = x.round();
    if (x - near).abs() <= 1e-9 * near.max(1.0) {
        near as usize
    } else {
        x.ceil() as usize
    }
}

/// Receives each post-step state and regulator increment, in step order.
pub trait StepObserver {
    fn observe(&mut self, step: usize, z: &[f64], dy: &[f64]);
}

impl<F: FnMut(usize, &[f64], &[f64])> StepObserver for F {
    fn observe(&mut self, step: usize, z: &[f64], dy: &[f64]) {
        self(step, z, dy)
    }
}

/// A recorded path: `n_steps + 1` states (including the initial one) and
/// `n_steps` regulator increments, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub dim: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub z: Vec<f64>,
    pub y_increments: Vec<f64>,
    pub seed: u64,
}

impl PathSample {
    pub fn state(&self, n: usize) -> &[f64] {
        &self.z[n * self.dim..(n + 1) * self.dim]
    }

    pub fn increment(&self, n: usize) -> &[f64] {
        &self.y_increments[n * self.dim..(n + 1) * self.dim]
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn replay<O: StepObserver + ?Sized>(&self, obs: &mut O) {
        for n in 0..self.n_steps {
            obs.observe(n, self.state(n + 1), self.increment(n));
        }
    }

    /// Columns `t, z_1..z_d, y_1..y_d` with cumulative `y`.
    pub fn write_csv<W: std::io::Write>(&self, out: W, metadata: &str) -> Result<()> {
        self.write_csv_every(out, metadata, 1)
    }

    /// As [`write_csv`](Self::write_csv), keeping every `every`-th state and the last.
    pub fn write_csv_every<W: std::io::Write>(&self, out: W, metadata: &str, every: usize) -> Result<()> {
        let every = every.max(1);
        let d = self.dim;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("z_{i}")));
        header.extend((1..=d).map(|i| format!("y_{i}")));
        let mut w = crate::report::csv_writer(out, metadata)?;
        w.write_record(&header).map_err(crate::report::csv_err)?;
        let mut y = vec![0.0; d];
        for n in 0..=self.n_steps {
            if n > 0 {
                for (acc, inc) in y.iter_mut().zip(self.increment(n - 1)) {
                    *acc += inc;
                }
            }
            if n % every != 0 && n != self.n_steps {
                continue;
            }
            let mut row = vec![(n as f64 * self.dt).to_string()];
            row.extend(self.state(n).iter().map(|v| v.to_string()));
            row.extend(y.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(crate::report::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Path generator for one model and option set.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: SrbmModel,
    map: ReflectionMap,
    chol: SquareMatrix,
    sigma: Vec<f64>,
    opts: SimOptions,
}

impl Simulator {
    pub fn new(model: &SrbmModel, opts: SimOptions) -> Result<Self> {
        opts.validate()?;
        let chol = cholesky(model.gamma())?.scale(opts.noise_scale);
        let sigma = model
            .gamma()
            .diag()
            .iter()
            .map(|g| g.sqrt() * opts.noise_scale)
            .collect();
        Ok(Self {
            model: model.clone(),
            map: ReflectionMap::new(model.reflection().clone())?,
            chol,
            sigma,
            opts,
        })
    }

    pub fn model(&self) -> &SrbmModel {
        &self.model
    }

    pub fn options(&self) -> &SimOptions {
        &self.opts
    }

    pub fn n_steps(&self) -> usize {
        self.opts.n_steps()
    }

    /// Free increment `μ h + √h L ξ` for standard normal `xi`.
    pub fn free_increment(&self, xi: &[f64], h: f64, dx: &mut [f64]) {
        let d = self.model.dim();
        let sq = h.sqrt();
        for i in 0..d {
            let row = self.chol.row(i);
            let noise: f64 = (0..=i).map(|j| row[j] * xi[j]).sum();
            dx[i] = self.model.mu()[i] * h + sq * noise;
        }
    }

    /// One projected-Euler step from `z` with a given free increment.
    pub fn reflect_step(&self, z: &mut [f64], dx: &[f64], dy: &mut [f64], q: &mut [f64]) -> Result<()> {
        for i in 0..z.len() {
            q[i] = z[i] + dx[i];
        }
        self.map.reflect(q, z, dy)
    }

    /// Streams a path from `init` into `obs`; returns the final state.
    pub fn run<O: StepObserver + ?Sized>(&self, init: &[f64], seed: u64, obs: &mut O) -> Result<Vec<f64>> {
        let d = self.model.dim();
        check_init(init, d)?;
        let h = self.opts.dt;
        let mut rng = path_rng(seed);
        let mut z = init.to_vec();
        let mut xi = vec![0.0; d];
        let mut dx = vec![0.0; d];
        let mut dy = vec![0.0; d];
        let mut q = vec![0.0; d];
        let mut low = vec![0.0; d];
        let mut zz = vec![0.0; d];
        for n in 0..self.n_steps() {
            for v in xi.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            self.free_increment(&xi, h, &mut dx);
            match self.opts.scheme {
                Scheme::ProjectedEuler => self.reflect_step(&mut z, &dx, &mut dy, &mut q)?,
                Scheme::BridgeMinimum => {
                    for i in 0..d {
                        let e: f64 = rng.sample(Exp1);
                        let b = dx[i];
                        let s2h = self.sigma[i] * self.sigma[i] * h;
                        // Minimum over the step of a Brownian bridge from 0 to b.
                        let m = 0.5 * (b - (b * b + 2.0 * s2h * e).sqrt());
                        low[i] = z[i] + m;
                    }
                    self.map.reflect(&low, &mut zz, &mut dy)?;
                    let r = self.model.reflection();
                    for i in 0..d {
                        let push: f64 = (0..d).map(|j| r[(i, j)] * dy[j]).sum();
                        z[i] = (z[i] + dx[i] + push).max(0.0);
                    }
                }
            }
            obs.observe(n, &z, &dy);
        }
        Ok(z)
    }

    pub fn simulate(&self, init: &[f64], seed: u64) -> Result<PathSample> {
        let d = self.model.dim();
        let n_steps = self.n_steps();
        let mut z = Vec::with_capacity((n_steps + 1) * d);
        let mut ys = Vec::with_capacity(n_steps * d);
        z.extend_from_slice(init);
        self.run(init, seed, &mut |_: usize, s: &[f64], dy: &[f64]| {
            z.extend_from_slice(s);
            ys.extend_from_slice(dy);
        })?;
        Ok(PathSample {
            dim: d,
            dt: self.opts.dt,
            n_steps,
            z,
            y_increments: ys,
            seed,
        })
    }
}

/// Records a projected-Euler path of `model`.
pub fn simulate_path(model: &SrbmModel, horizon: f64, dt: f64, init: &[f64], seed: u64) -> Result<PathSample> {
    Simulator::new(model, SimOptions::new(horizon, dt))?.simulate(init, seed)
}

fn check_init(init: &[f64], d: usize) -> Result<()> {
    if init.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: init.len(),
        });
    }
    if let Some((index, &value)) = init.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::BadInit { index, value });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "means")]
pub enum InitialDistribution {
    Origin(usize),
    ProductExponential(Vec<f64>),
}

impl InitialDistribution {
    pub fn product_exponential(means: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = means.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::BadMeans { index, value });
        }
        Ok(Self::ProductExponential(means))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Origin(d) => *d,
            Self::ProductExponential(m) => m.len(),
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Origin(d) => vec![0.0; *d],
            Self::ProductExponential(means) => means
                .iter()
                .map(|m| {
                    let e: f64 = rng.sample(Exp1);
                    m * e
                })
                .collect(),
        }
    }
}

/// Draws one initial state with its own seeded stream.
pub fn sample_initial(dist: &InitialDistribution, seed: u64) -> Result<Vec<f64>> {
    if let InitialDistribution::ProductExponential(means) = dist {
        InitialDistribution::product_exponential(means.clone())?;
    }
    Ok(dist.sample_with(&mut path_rng(seed)))
}
