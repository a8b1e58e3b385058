//! SRBM data `(Γ, μ, R)` and the multi-scaling family built from `(Γ, R)`.

use serde::{Deserialize, Serialize};

use crate::classes::{classify, is_p_matrix, MAX_CLASSIFY_DIM};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, solve, SquareMatrix};

/// `δ = -R⁻¹ μ`, required to be componentwise positive.
pub fn traffic_slackness(r: &SquareMatrix, mu: &[f64]) -> Result<Vec<f64>> {
    let neg_mu: Vec<f64> = mu.iter().map(|x| -x).collect();
    let delta = solve(r, &neg_mu)?;
    if let Some((index, &value)) = delta.iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(Error::NotPositiveSlackness { index, value });
    }
    Ok(delta)
}

/// A semimartingale reflecting Brownian motion on the orthant.
///
/// Construction checks that `Γ` is symmetric positive definite, `R` is
/// nonsingular and the traffic slackness `δ = -R⁻¹μ` is positive. Positive
/// recurrence is assumed, not verified.
#[derive(Debug, Clone, PartialEq)]
pub struct SrbmModel {
    gamma: SquareMatrix,
    mu: Vec<f64>,
    r: SquareMatrix,
    delta: Vec<f64>,
}

impl SrbmModel {
    pub fn new(gamma: SquareMatrix, mu: Vec<f64>, r: SquareMatrix) -> Result<Self> {
        let d = r.dim();
        check_dim(d, gamma.dim())?;
        check_dim(d, mu.len())?;
        if let Some(pos) = mu.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: pos, col: 0 });
        }
        cholesky(&gamma)?;
        let delta = traffic_slackness(&r, &mu)?;
        Ok(Self { gamma, mu, r, delta })
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn gamma(&self) -> &SquareMatrix {
        &self.gamma
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn reflection(&self) -> &SquareMatrix {
        &self.r
    }

    /// Traffic slackness `δ`, cached at construction.
    pub fn slackness(&self) -> &[f64] {
        &self.delta
    }

    /// Checks the skew-symmetric condition
    /// `2ΛΓΛ = ΛRVΛ⁻¹ + Λ⁻¹VRᵀΛ` entrywise within `tol`, with
    /// `Λ = diag(Γ_kk^{-1/2})` and `V = diag(1/R_kk)`.
    pub fn skew_symmetric_check(&self, tol: f64) -> Result<bool> {
        Ok(self.skew_symmetric_gap()? <= tol)
    }

    /// Max-norm of `2ΛΓΛ - (ΛRVΛ⁻¹ + Λ⁻¹VRᵀΛ)`.
    pub fn skew_symmetric_gap(&self) -> Result<f64> {
        let (lambda, v) = self.scalings()?;
        let d = self.dim();
        let mut gap: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let lhs = 2.0 * lambda[i] * self.gamma[(i, j)] * lambda[j];
                let rvl = lambda[i] * self.r[(i, j)] * v[j] / lambda[j];
                let vrt = v[i] * self.r[(j, i)] * lambda[j] / lambda[i];
                gap = gap.max((lhs - rvl - vrt).abs());
            }
        }
        Ok(gap)
    }

    /// Means `Γ_kk / (2 R_kk δ_k)` of the product-form exponential law that is
    /// exact under the skew-symmetric condition.
    pub fn skew_approx_means(&self) -> Result<Vec<f64>> {
        self.scalings()?;
        Ok((0..self.dim())
            .map(|k| self.gamma[(k, k)] / (2.0 * self.r[(k, k)] * self.delta[k]))
            .collect())
    }

    /// Rescales to unit diagonal covariance and reflection:
    /// `Γ# = ΛΓΛ`, `R# = ΛRVΛ⁻¹`, `μ# = Λμ`.
    pub fn standardize(&self) -> Result<SrbmModel> {
        let (lambda, v) = self.scalings()?;
        let d = self.dim();
        let mut gamma = SquareMatrix::zeros(d);
        let mut r = SquareMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                gamma[(i, j)] = lambda[i] * self.gamma[(i, j)] * lambda[j];
                r[(i, j)] = lambda[i] * self.r[(i, j)] * v[j] / lambda[j];
            }
            // Exact unit diagonals rather than x * (1/x) round-off.
            gamma[(i, i)] = 1.0;
            r[(i, i)] = 1.0;
        }
        let mu = self.mu.iter().zip(&lambda).map(|(m, l)| m * l).collect();
        SrbmModel::new(gamma, mu, r)
    }

    fn scalings(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        let mut lambda = Vec::with_capacity(d);
        let mut v = Vec::with_capacity(d);
        for k in 0..d {
            let g = self.gamma[(k, k)];
            if g <= 0.0 {
                return Err(Error::NonpositiveDiagonal {
                    which: "gamma",
                    index: k,
                    value: g,
                });
            }
            let rk = self.r[(k, k)];
            if rk <= 0.0 {
                return Err(Error::NonpositiveDiagonal {
                    which: "R",
                    index: k,
                    value: rk,
                });
            }
            lambda.push(1.0 / g.sqrt());
            v.push(1.0 / rk);
        }
        Ok((lambda, v))
    }
}

/// Which known result guarantees the product-form limit for a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitGuarantee {
    /// `R` is an M-matrix: stability and moment bounds both hold.
    MMatrix,
    /// Two-dimensional P-matrix.
    TwoDimensional,
    /// Lower-triangular P-matrix.
    LowerTriangular,
    /// General P-matrix: the limit holds if stability and the uniform moment
    /// bounds hold, which cannot be checked here.
    ConditionalOnMomentBounds,
}

/// The multi-scaling family `δ^(r) = (r, r², …, r^d)` over shared `(Γ, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleFamily {
    gamma: SquareMatrix,
    r: SquareMatrix,
}

impl MultiScaleFamily {
    pub fn new(gamma: SquareMatrix, r: SquareMatrix) -> Result<Self> {
        let d = r.dim();
        check_dim(d, gamma.dim())?;
        if d > MAX_CLASSIFY_DIM {
            return Err(Error::DimensionTooLarge {
                n: d,
                max: MAX_CLASSIFY_DIM,
            });
        }
        cholesky(&gamma)?;
        if !is_p_matrix(&r) {
            let report = classify(&r)?;
            return Err(Error::BadConfig(format!(
                "reflection matrix is not a P-matrix: {:?}",
                report.witnesses.first()
            )));
        }
        Ok(Self { gamma, r })
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn gamma(&self) -> &SquareMatrix {
        &self.gamma
    }

    pub fn reflection(&self) -> &SquareMatrix {
        &self.r
    }

    /// Slackness `(r, r², …, r^d)`.
    pub fn slackness_at(&self, r: f64) -> Result<Vec<f64>> {
        check_scale(r)?;
        Ok(scale_powers(r, self.dim()))
    }

    /// The model with `μ = -R (r, …, r^d)`.
    pub fn make_model(&self, r: f64) -> Result<SrbmModel> {
        let delta = self.slackness_at(r)?;
        let mu: Vec<f64> = self.r.mul_vec(&delta).into_iter().map(|x| -x).collect();
        let mut model = SrbmModel::new(self.gamma.clone(), mu, self.r.clone())?;
        // Keep the defining powers rather than their round trip through R⁻¹.
        model.delta = delta;
        Ok(model)
    }

    pub fn guarantee(&self) -> Result<LimitGuarantee> {
        let report = classify(&self.r)?;
        Ok(if report.is_m {
            LimitGuarantee::MMatrix
        } else if self.dim() == 2 {
            LimitGuarantee::TwoDimensional
        } else if report.is_lower_triangular {
            LimitGuarantee::LowerTriangular
        } else {
            LimitGuarantee::ConditionalOnMomentBounds
        })
    }
}

pub(crate) fn scale_powers(r: f64, d: usize) -> Vec<f64> {
    (1..=d).map(|k| r.powi(k as i32)).collect()
}

pub(crate) fn check_scale(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::BadScale(r))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// On-disk model description.
///
/// Either a concrete model `{"d", "gamma", "R", "mu"}` or a multi-scaling
/// family `{"d", "gamma", "R", "multiscale": true}` whose `r` is supplied
/// when the file is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub d: usize,
    pub gamma: SquareMatrix,
    #[serde(rename = "R")]
    pub r: SquareMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub multiscale: bool,
}

/// A parsed model file before any `r` is applied.
#[derive(Debug, Clone)]
pub enum ModelSource {
    Concrete(SrbmModel),
    Family(MultiScaleFamily),
}

impl ModelFile {
    pub fn parse(json: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(json)?;
        if file.gamma.dim() != file.d || file.r.dim() != file.d {
            return Err(Error::Parse(format!(
                "declared d = {} but gamma is {}x{} and R is {}x{}",
                file.d,
                file.gamma.dim(),
                file.gamma.dim(),
                file.r.dim(),
                file.r.dim()
            )));
        }
        match (&file.mu, file.multiscale) {
            (Some(_), true) => Err(Error::Parse(
                "a multiscale family must not also give mu".into(),
            )),
            (None, false) => Err(Error::Parse(
                "model needs either mu or \"multiscale\": true".into(),
            )),
            _ => Ok(file),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn source(&self) -> Result<ModelSource> {
        match &self.mu {
            Some(mu) => Ok(ModelSource::Concrete(SrbmModel::new(
                self.gamma.clone(),
                mu.clone(),
                self.r.clone(),
            )?)),
            None => Ok(ModelSource::Family(MultiScaleFamily::new(
                self.gamma.clone(),
                self.r.clone(),
            )?)),
        }
    }

    pub fn from_model(model: &SrbmModel) -> Self {
        Self {
            d: model.dim(),
            gamma: model.gamma.clone(),
            r: model.r.clone(),
            mu: Some(model.mu.clone()),
            multiscale: false,
        }
    }

    pub fn from_family(family: &MultiScaleFamily) -> Self {
        Self {
            d: family.dim(),
            gamma: family.gamma.clone(),
            r: family.r.clone(),
            mu: None,
            multiscale: true,
        }
    }
}

impl ModelSource {
    /// The concrete model; families require `r`.
    pub fn resolve(&self, r: Option<f64>) -> Result<SrbmModel> {
        match (self, r) {
            (ModelSource::Concrete(m), _) => Ok(m.clone()),
            (ModelSource::Family(f), Some(r)) => f.make_model(r),
            (ModelSource::Family(_), None) => Err(Error::BadConfig(
                "a multiscale family needs --r".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(rows).unwrap()
    }

    fn upper_family(beta: f64) -> MultiScaleFamily {
        MultiScaleFamily::new(SquareMatrix::identity(2), m(&[&[1.0, -beta], &[0.0, 1.0]])).unwrap()
    }

    fn network_family() -> MultiScaleFamily {
        MultiScaleFamily::new(
            SquareMatrix::identity(3),
            m(&[
                &[1.0, -0.6, -0.4],
                &[-0.5, 1.0, -0.4],
                &[-0.2, -0.3, 1.0],
            ]),
        )
        .unwrap()
    }

    #[test]
    fn slackness_of_upper_triangular_example() {
        let (beta, r) = (0.5, 0.2);
        let mu = vec![-r + beta * r * r, -r * r];
        let model = SrbmModel::new(
            SquareMatrix::identity(2),
            mu,
            m(&[&[1.0, -beta], &[0.0, 1.0]]),
        )
        .unwrap();
        let d = model.slackness();
        assert!((d[0] - 0.2).abs() < 1e-12 && (d[1] - 0.04).abs() < 1e-12);
    }

    #[test]
    fn slackness_identity_and_violation() {
        let d = traffic_slackness(&SquareMatrix::identity(3), &[-1.0; 3]).unwrap();
        assert_eq!(d, vec![1.0; 3]);
        let err = traffic_slackness(&SquareMatrix::identity(2), &[1.0, -1.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveSlackness { index: 0, .. }));
        let err = SrbmModel::new(SquareMatrix::identity(2), vec![1.0, -1.0], SquareMatrix::identity(2))
            .unwrap_err();
        assert!(matches!(err, Error::NotPositiveSlackness { .. }));
    }

    #[test]
    fn make_model_examples() {
        let model = network_family().make_model(0.2).unwrap();
        let d = model.slackness();
        assert_eq!(d, scale_powers(0.2, 3).as_slice());
        for (a, b) in d.iter().zip([0.2, 0.04, 0.008]) {
            assert!((a - b).abs() < 1e-15);
        }
        let recomputed = traffic_slackness(model.reflection(), model.mu()).unwrap();
        for (a, b) in recomputed.iter().zip(d) {
            assert!((a - b).abs() < 1e-12);
        }

        let model = upper_family(0.5).make_model(0.1).unwrap();
        assert!((model.mu()[0] + 0.095).abs() < 1e-15);
        assert!((model.mu()[1] + 0.01).abs() < 1e-15);

        for r in [0.0, 1.0, -0.3, 1.5] {
            assert_eq!(upper_family(0.5).make_model(r).unwrap_err(), Error::BadScale(r));
        }
    }

    #[test]
    fn family_rejects_non_p() {
        let err = MultiScaleFamily::new(SquareMatrix::identity(2), m(&[&[1.0, -2.0], &[-2.0, 1.0]]))
            .unwrap_err();
        assert!(matches!(err, Error::BadConfig(_)));
    }

    #[test]
    fn skew_symmetry_examples() {
        let id = SrbmModel::new(SquareMatrix::identity(2), vec![-1.0, -1.0], SquareMatrix::identity(2))
            .unwrap();
        assert!(id.skew_symmetric_check(1e-12).unwrap());

        let r = m(&[&[1.0, -0.5], &[-0.5, 1.0]]);
        let fam = MultiScaleFamily::new(SquareMatrix::identity(2), r).unwrap();
        let model = fam.make_model(0.7).unwrap();
        assert!(!model.skew_symmetric_check(1e-12).unwrap());
        assert!((model.skew_symmetric_gap().unwrap() - 1.0).abs() < 1e-12);

        let one = SrbmModel::new(m(&[&[3.0]]), vec![-0.4], m(&[&[2.0]])).unwrap();
        assert!(one.skew_symmetric_check(1e-12).unwrap());
    }

    #[test]
    fn skew_means_examples() {
        let model = network_family().make_model(0.2).unwrap();
        let means = model.skew_approx_means().unwrap();
        for (a, b) in means.iter().zip([2.5, 12.5, 62.5]) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let id = SrbmModel::new(SquareMatrix::identity(3), vec![-1.0; 3], SquareMatrix::identity(3))
            .unwrap();
        assert_eq!(id.skew_approx_means().unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn skew_means_alpha_beta_family() {
        let (alpha, beta) = (0.5, 0.5);
        let fam = MultiScaleFamily::new(
            SquareMatrix::identity(2),
            m(&[&[1.0, -beta], &[-alpha, 1.0]]),
        )
        .unwrap();
        for r in [0.6, 0.75, 0.9] {
            let means = fam.make_model(r).unwrap().skew_approx_means().unwrap();
            assert!((means[0] - 0.5 / r).abs() < 1e-12);
            assert!((means[1] - 0.5 / (r * r)).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_examples() {
        let model = SrbmModel::new(m(&[&[4.0]]), vec![-2.0], m(&[&[2.0]])).unwrap();
        let s = model.standardize().unwrap();
        assert_eq!(s.gamma(), &m(&[&[1.0]]));
        assert_eq!(s.reflection(), &m(&[&[1.0]]));
        assert!((s.mu()[0] + 1.0).abs() < 1e-15);

        let id = SrbmModel::new(SquareMatrix::identity(2), vec![-1.0, -0.5], SquareMatrix::identity(2))
            .unwrap();
        assert_eq!(id.standardize().unwrap(), id);

        let model = SrbmModel::new(
            m(&[&[2.0, 0.3], &[0.3, 0.5]]),
            vec![-1.0, -0.2],
            m(&[&[1.5, -0.2], &[-0.4, 3.0]]),
        )
        .unwrap();
        let s = model.standardize().unwrap();
        assert_eq!(s.gamma().diag(), vec![1.0, 1.0]);
        assert_eq!(s.reflection().diag(), vec![1.0, 1.0]);
    }

    #[test]
    fn standardize_requires_positive_diagonal() {
        let r = m(&[&[-1.0]]);
        let model = SrbmModel::new(m(&[&[1.0]]), vec![1.0], r).unwrap();
        assert!(matches!(
            model.standardize(),
            Err(Error::NonpositiveDiagonal { which: "R", .. })
        ));
    }

    #[test]
    fn guarantees() {
        assert_eq!(network_family().guarantee().unwrap(), LimitGuarantee::MMatrix);
        let fam = MultiScaleFamily::new(SquareMatrix::identity(2), m(&[&[1.0, 2.0], &[-0.5, 1.0]]))
            .unwrap();
        assert_eq!(fam.guarantee().unwrap(), LimitGuarantee::TwoDimensional);
        let lower = m(&[&[1.0, 0.0, 0.0], &[0.5, 1.0, 0.0], &[-0.3, 0.8, 1.0]]);
        let fam = MultiScaleFamily::new(SquareMatrix::identity(3), lower).unwrap();
        assert_eq!(fam.guarantee().unwrap(), LimitGuarantee::LowerTriangular);
    }

    #[test]
    fn model_file_round_trips() {
        let json = r#"{"d": 2, "gamma": [[1,0],[0,1]], "R": [[1,-0.5],[0,1]], "multiscale": true}"#;
        let file = ModelFile::parse(json).unwrap();
        let src = file.source().unwrap();
        assert!(matches!(src, ModelSource::Family(_)));
        assert!(src.resolve(None).is_err());
        let model = src.resolve(Some(0.3)).unwrap();
        let concrete = ModelFile::from_model(&model);
        let text = serde_json::to_string(&concrete).unwrap();
        let back = ModelFile::parse(&text).unwrap().source().unwrap().resolve(None).unwrap();
        assert_eq!(back.mu(), model.mu());
    }

    #[test]
    fn model_file_rejects_bad_input() {
        for bad in [
            r#"{"d": 2, "gamma": [[1,0],[0,1]], "R": [[1,0],[0,1]]}"#,
            r#"{"d": 3, "gamma": [[1,0],[0,1]], "R": [[1,0],[0,1]], "mu": [-1,-1]}"#,
            r#"{"d": 2, "gamma": [[1,0],[0,1]], "R": [[1,0],[0,1]], "mu": [-1,-1], "multiscale": true}"#,
            r#"{"d": 2, "gamma": [[1,0],[0,1]], "R": [[1,0],[0,1]], "mu": [-1,-1], "extra": 1}"#,
            "not json",
        ] {
            assert!(matches!(ModelFile::parse(bad), Err(Error::Parse(_))), "{bad}");
        }
    }
}
