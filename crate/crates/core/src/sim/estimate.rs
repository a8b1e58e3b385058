//! Time averages over the post-burn-in window, with batch-means errors.
//!
//! Step `n` contributes its post-step state `z_{n+1}` and increment `ΔY_n`.
//! Pairing `ΔY_n` with `z_{n+1}` puts boundary samples exactly on their face
//! under the projected scheme.

use serde::Serialize;

use super::{PathSample, Simulator, StepObserver};
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;

pub const N_BATCHES: usize = 30;

/// Which steps count, and how they split into batches. Trailing steps that
/// do not fill a batch are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub dt: f64,
    pub n_steps: usize,
    pub n_burn: usize,
    pub batch_len: usize,
    pub n_batches: usize,
}

impl Window {
    /// `burn_in` is a time; `None` means 20% of the horizon.
    pub fn new(n_steps: usize, dt: f64, burn_in: Option<f64>) -> Result<Self> {
        let horizon = n_steps as f64 * dt;
        let burn_in = burn_in.unwrap_or(0.2 * horizon);
        if !(burn_in.is_finite() && burn_in >= 0.0) {
            return Err(Error::BadSimulation(format!("burn-in must be nonnegative, got {burn_in}")));
        }
        if burn_in >= horizon {
            return Err(Error::EmptyWindow(format!(
                "burn-in {burn_in} is not below the horizon {horizon}"
            )));
        }
        let n_burn = super::step_count(burn_in, dt).min(n_steps);
        let batch_len = (n_steps - n_burn) / N_BATCHES;
        if batch_len == 0 {
            return Err(Error::EmptyWindow(format!(
                "{} steps after burn-in, need at least {N_BATCHES}",
                n_steps - n_burn
            )));
        }
        Ok(Self {
            dt,
            n_steps,
            n_burn,
            batch_len,
            n_batches: N_BATCHES,
        })
    }

    pub fn batch(&self, step: usize) -> Option<usize> {
        if step < self.n_burn {
            return None;
        }
        let b = (step - self.n_burn) / self.batch_len;
        (b < self.n_batches).then_some(b)
    }

    pub fn used_steps(&self) -> usize {
        self.batch_len * self.n_batches
    }

    pub fn length(&self) -> f64 {
        self.used_steps() as f64 * self.dt
    }
}

/// Anything that can replay a path into an observer: a recorded sample or a
/// simulator that regenerates the path on demand.
pub trait PathSource {
    fn dim(&self) -> usize;
    fn dt(&self) -> f64;
    fn n_steps(&self) -> usize;
    fn feed(&self, obs: &mut dyn StepObserver) -> Result<()>;

    fn window(&self, burn_in: Option<f64>) -> Result<Window> {
        Window::new(self.n_steps(), self.dt(), burn_in)
    }
}

impl PathSource for PathSample {
    fn dim(&self) -> usize {
        self.dim
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn n_steps(&self) -> usize {
        self.n_steps
    }
    fn feed(&self, obs: &mut dyn StepObserver) -> Result<()> {
        self.replay(obs);
        Ok(())
    }
}

/// A path that is simulated afresh every time it is fed.
#[derive(Debug, Clone)]
pub struct StreamedPath<'a> {
    pub sim: &'a Simulator,
    pub init: Vec<f64>,
    pub seed: u64,
}

impl PathSource for StreamedPath<'_> {
    fn dim(&self) -> usize {
        self.sim.model().dim()
    }
    fn dt(&self) -> f64 {
        self.sim.options().dt
    }
    fn n_steps(&self) -> usize {
        self.sim.n_steps()
    }
    fn feed(&self, obs: &mut dyn StepObserver) -> Result<()> {
        self.sim.run(&self.init, self.seed, obs).map(|_| ())
    }
}

type Channel<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

enum Kind {
    Interior,
    Boundary { face: usize, delta: f64 },
}

/// Accumulates per-batch sums of interior channels `f(z)` and boundary
/// channels `f(z) ΔY_i`.
pub struct Accumulator<'a> {
    window: Window,
    dim: usize,
    channels: Vec<(Kind, Channel<'a>)>,
    sums: Vec<f64>,
}

impl<'a> Accumulator<'a> {
    pub fn new(window: Window, dim: usize) -> Self {
        Self {
            window,
            dim,
            channels: Vec::new(),
            sums: Vec::new(),
        }
    }

    /// Adds a channel estimating `E_π[f]`; returns its index.
    pub fn interior(&mut self, f: impl Fn(&[f64]) -> f64 + 'a) -> usize {
        self.channels.push((Kind::Interior, Box::new(f)));
        self.channels.len() - 1
    }

    /// Adds a channel estimating `E_{ν_face}[f]`, normalized by `delta`.
    pub fn boundary(&mut self, face: usize, delta: f64, f: impl Fn(&[f64]) -> f64 + 'a) -> Result<usize> {
        if face >= self.dim {
            return Err(Error::BadComponent { k: face, d: self.dim });
        }
        if !(delta > 0.0) {
            return Err(Error::ZeroSlackness { face, value: delta });
        }
        self.channels.push((Kind::Boundary { face, delta }, Box::new(f)));
        Ok(self.channels.len() - 1)
    }

    pub fn run(mut self, src: &(impl PathSource + ?Sized)) -> Result<BatchSeries> {
        self.sums = vec![0.0; self.window.n_batches * self.channels.len()];
        src.feed(&mut self)?;
        Ok(self.finish())
    }

    fn finish(self) -> BatchSeries {
        let nc = self.channels.len();
        let w = self.window;
        let mut means = self.sums;
        for b in 0..w.n_batches {
            for (c, (kind, _)) in self.channels.iter().enumerate() {
                let norm = match kind {
                    Kind::Interior => w.batch_len as f64,
                    Kind::Boundary { delta, .. } => w.batch_len as f64 * w.dt * delta,
                };
                means[b * nc + c] /= norm;
            }
        }
        BatchSeries {
            n_batches: w.n_batches,
            n_channels: nc,
            means,
            window: w,
        }
    }
}

impl StepObserver for Accumulator<'_> {
    fn observe(&mut self, step: usize, z: &[f64], dy: &[f64]) {
        let Some(b) = self.window.batch(step) else { return };
        let nc = self.channels.len();
        let row = &mut self.sums[b * nc..(b + 1) * nc];
        for (slot, (kind, f)) in row.iter_mut().zip(&self.channels) {
            match kind {
                Kind::Interior => *slot += f(z),
                Kind::Boundary { face, .. } => {
                    if dy[*face] != 0.0 {
                        *slot += f(z) * dy[*face];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Per-batch channel means.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSeries {
    pub n_batches: usize,
    pub n_channels: usize,
    /// Row-major `n_batches x n_channels`.
    pub means: Vec<f64>,
    pub window: Window,
}

impl BatchSeries {
    pub fn batch(&self, b: usize) -> &[f64] {
        &self.means[b * self.n_channels..(b + 1) * self.n_channels]
    }

    /// Whole-window channel means (batches have equal length).
    pub fn channel_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_channels];
        for b in 0..self.n_batches {
            for (o, v) in out.iter_mut().zip(self.batch(b)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= self.n_batches as f64);
        out
    }

    pub fn estimate(&self, channel: usize) -> Estimate {
        self.statistic(|m| m[channel])
    }

    /// `g` of the whole-window means, with the batch-means standard error of
    /// `g` evaluated batch by batch.
    pub fn statistic(&self, g: impl Fn(&[f64]) -> f64) -> Estimate {
        let value = g(&self.channel_means());
        let per: Vec<f64> = (0..self.n_batches).map(|b| g(self.batch(b))).collect();
        let n = per.len() as f64;
        let mean = per.iter().sum::<f64>() / n;
        let var = per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate {
            value,
            std_error: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryEstimate {
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub second_moments: Vec<f64>,
    pub second_moment_std_errors: Vec<f64>,
    /// Zero in any row or column whose coordinate has no variance.
    pub correlations: SquareMatrix,
    /// Coordinates with zero empirical variance.
    pub degenerate: Vec<bool>,
    pub window: Window,
}

pub fn stationary_estimate(src: &(impl PathSource + ?Sized), burn_in: Option<f64>) -> Result<StationaryEstimate> {
    let d = src.dim();
    let window = src.window(burn_in)?;
    let mut acc = Accumulator::new(window, d);
    for i in 0..d {
        acc.interior(move |z| z[i]);
    }
    for i in 0..d {
        acc.interior(move |z| z[i] * z[i]);
    }
    let mut cross = SquareMatrix::zeros(d);
    for i in 0..d {
        for j in (i + 1)..d {
            let c = acc.interior(move |z| z[i] * z[j]);
            cross[(i, j)] = c as f64;
        }
    }
    let series = acc.run(src)?;
    let m = series.channel_means();
    let mean = |i: usize| series.estimate(i);
    let second = |i: usize| series.estimate(d + i);
    let var: Vec<f64> = (0..d).map(|i| m[d + i] - m[i] * m[i]).collect();
    let degenerate: Vec<bool> = (0..d)
        .map(|i| var[i] <= 1e-14 * m[d + i].max(f64::MIN_POSITIVE))
        .collect();
    let mut corr = SquareMatrix::zeros(d);
    for i in 0..d {
        if degenerate[i] {
            continue;
        }
        corr[(i, i)] = 1.0;
        for j in (i + 1)..d {
            if degenerate[j] {
                continue;
            }
            let c = cross[(i, j)] as usize;
            let v = (m[c] - m[i] * m[j]) / (var[i] * var[j]).sqrt();
            corr[(i, j)] = v;
            corr[(j, i)] = v;
        }
    }
    Ok(StationaryEstimate {
        means: (0..d).map(|i| mean(i).value).collect(),
        std_errors: (0..d).map(|i| mean(i).std_error).collect(),
        second_moments: (0..d).map(|i| second(i).value).collect(),
        second_moment_std_errors: (0..d).map(|i| second(i).std_error).collect(),
        correlations: corr,
        degenerate,
        window,
    })
}

/// Window average of `f(z)`.
pub fn interior_expectation(
    src: &(impl PathSource + ?Sized),
    burn_in: Option<f64>,
    f: impl Fn(&[f64]) -> f64,
) -> Result<Estimate> {
    let mut acc = Accumulator::new(src.window(burn_in)?, src.dim());
    let c = acc.interior(f);
    Ok(acc.run(src)?.estimate(c))
}

/// `Σ f(z) ΔY_face / (window length · δ_face)`, an estimate of `E_{ν_face}[f]`.
pub fn boundary_expectation(
    src: &(impl PathSource + ?Sized),
    burn_in: Option<f64>,
    face: usize,
    f: impl Fn(&[f64]) -> f64,
    delta: f64,
) -> Result<Estimate> {
    let mut acc = Accumulator::new(src.window(burn_in)?, src.dim());
    let c = acc.boundary(face, delta, f)?;
    Ok(acc.run(src)?.estimate(c))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasures {
    pub horizon: f64,
    pub burn_in: f64,
    /// Time covered by the window.
    pub interior_weight: f64,
    /// Regulator growth inside the window, per face.
    pub boundary_weight: Vec<f64>,
}

pub fn empirical_measures(src: &(impl PathSource + ?Sized), burn_in: Option<f64>) -> Result<EmpiricalMeasures> {
    let w = src.window(burn_in)?;
    let mut weight = vec![0.0; src.dim()];
    src.feed(&mut |step: usize, _: &[f64], dy: &[f64]| {
        if w.batch(step).is_some() {
            for (acc, v) in weight.iter_mut().zip(dy) {
                *acc += v;
            }
        }
    })?;
    Ok(EmpiricalMeasures {
        horizon: w.n_steps as f64 * w.dt,
        burn_in: w.n_burn as f64 * w.dt,
        interior_weight: w.length(),
        boundary_weight: weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SrbmModel;
    use crate::sim::{simulate_path, SimOptions, Simulator};

    fn one_d() -> SrbmModel {
        SrbmModel::new(SquareMatrix::identity(1), vec![-1.0], SquareMatrix::identity(1)).unwrap()
    }

    #[test]
    fn window_layout() {
        let w = Window::new(1000, 0.1, None).unwrap();
        assert_eq!((w.n_burn, w.batch_len), (200, 26));
        assert_eq!(w.batch(199), None);
        assert_eq!(w.batch(200), Some(0));
        assert_eq!(w.batch(200 + 26 * 30 - 1), Some(29));
        assert_eq!(w.batch(200 + 26 * 30), None);
        assert!(matches!(Window::new(1000, 0.1, Some(100.0)), Err(Error::EmptyWindow(_))));
        assert!(matches!(Window::new(40, 0.1, Some(1.5)), Err(Error::EmptyWindow(_))));
    }

    #[test]
    fn constant_path_statistics() {
        let m = SrbmModel::new(
            SquareMatrix::identity(2),
            vec![-1e-300, -1e-300],
            SquareMatrix::identity(2),
        )
        .unwrap();
        let sim = Simulator::new(&m, SimOptions::new(10.0, 0.1).noiseless()).unwrap();
        let p = sim.simulate(&[1.5, 2.0], 0).unwrap();
        let est = stationary_estimate(&p, None).unwrap();
        assert_eq!(est.means, vec![1.5, 2.0]);
        assert_eq!(est.std_errors, vec![0.0, 0.0]);
        assert_eq!(est.degenerate, vec![true, true]);
        assert_eq!(est.correlations, SquareMatrix::zeros(2));
    }

    #[test]
    fn trivial_expectations() {
        let p = simulate_path(&one_d(), 200.0, 0.01, &[0.0], 1).unwrap();
        assert_eq!(interior_expectation(&p, None, |_| 1.0).unwrap().value, 1.0);
        assert_eq!(interior_expectation(&p, None, |z| (0.0 * z[0]).exp()).unwrap().value, 1.0);
        // Own coordinate is exactly zero on the face under projection.
        assert_eq!(boundary_expectation(&p, None, 0, |z| z[0], 1.0).unwrap().value, 0.0);
        assert!(matches!(
            boundary_expectation(&p, None, 0, |_| 1.0, 0.0),
            Err(Error::ZeroSlackness { face: 0, .. })
        ));
        assert!(matches!(
            boundary_expectation(&p, None, 1, |_| 1.0, 1.0),
            Err(Error::BadComponent { .. })
        ));
    }

    #[test]
    fn median_indicator_is_half() {
        let p = simulate_path(&one_d(), 500.0, 0.01, &[0.0], 4).unwrap();
        let w = p.window(None).unwrap();
        let mut xs: Vec<f64> = (w.n_burn..w.n_burn + w.used_steps()).map(|n| p.state(n + 1)[0]).collect();
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        let e = interior_expectation(&p, None, |z| f64::from(u8::from(z[0] < median))).unwrap();
        assert!((e.value - 0.5).abs() < 1e-4);
    }

    #[test]
    fn streamed_and_recorded_agree() {
        let sim = Simulator::new(&one_d(), SimOptions::new(100.0, 0.01)).unwrap();
        let p = sim.simulate(&[0.3], 8).unwrap();
        let s = StreamedPath {
            sim: &sim,
            init: vec![0.3],
            seed: 8,
        };
        assert_eq!(stationary_estimate(&p, None).unwrap(), stationary_estimate(&s, None).unwrap());
    }

    #[test]
    fn regulator_rate_matches_slackness() {
        let sim = Simulator::new(&one_d(), SimOptions::new(20_000.0, 0.01)).unwrap();
        let s = StreamedPath {
            sim: &sim,
            init: vec![0.5],
            seed: 12,
        };
        let e = boundary_expectation(&s, None, 0, |_| 1.0, 1.0).unwrap();
        assert!((e.value - 1.0).abs() < 3.0 * e.std_error, "{e:?}");
        let em = empirical_measures(&s, None).unwrap();
        assert!((em.boundary_weight[0] / em.interior_weight - e.value).abs() < 1e-9);
    }

    #[test]
    fn projected_euler_bias_matches_theory() {
        // Reflected random walk: stationary mean 1/2 - 0.5826 √h + O(h).
        let h = 0.01;
        let sim = Simulator::new(&one_d(), SimOptions::new(40_000.0, h)).unwrap();
        let s = StreamedPath {
            sim: &sim,
            init: vec![0.5],
            seed: 21,
        };
        let est = stationary_estimate(&s, None).unwrap();
        let expect = 0.5 - 0.5826 * h.sqrt();
        assert!(
            (est.means[0] - expect).abs() < 3.0 * est.std_errors[0] + 0.01,
            "{} vs {expect} (se {})",
            est.means[0],
            est.std_errors[0]
        );
    }
}
