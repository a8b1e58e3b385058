//! One-shot model report: matrix classes, slackness, the `u_k` and `m_k`
//! of the multi-scaling approximation, `r_0` and the skew-symmetric check.
//!
//! The report depends only on `(Γ, R, δ)`, so a family resolved at `r` and
//! the concrete model it expands to give the same report.

use std::fmt;

use serde::Serialize;

use crate::approx::{compute_m, compute_r0, compute_u};
use crate::classes::{classify, MatrixClassReport};
use crate::error::Result;
use crate::linalg::cholesky;
use crate::model::{LimitGuarantee, ModelFile, ModelSource, SrbmModel};

/// Tolerance for declaring the skew-symmetric condition satisfied.
pub const SKEW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub dim: usize,
    pub classes: MatrixClassReport,
    pub guarantee: Option<LimitGuarantee>,
    pub u: Option<Vec<Vec<f64>>>,
    /// Limiting means `m_k` of the scaled components.
    pub m: Option<Vec<f64>>,
    pub r0: Option<f64>,
    pub slackness: Option<Vec<f64>>,
    /// `m_k / δ_k`; for a family at scale `r` these are `m_k / r^k`.
    pub multiscaling_means: Option<Vec<f64>>,
    pub skew_symmetric: Option<bool>,
    pub skew_gap: Option<f64>,
    pub skew_means: Option<Vec<f64>>,
    /// Checks that failed, by name.
    pub issues: Vec<String>,
}

/// Fails only on a covariance that is not symmetric positive definite; every
/// other failed check is recorded in `issues`.
pub fn analyze(file: &ModelFile, r: Option<f64>) -> Result<AnalysisReport> {
    let refl = &file.r;
    let d = file.d;
    cholesky(&file.gamma)?;
    let classes = classify(refl)?;
    let mut issues = Vec::new();

    let mut u = Vec::with_capacity(d);
    let mut m = Vec::with_capacity(d);
    for k in 0..d {
        match compute_u(refl, k).and_then(|uk| Ok((compute_m(&file.gamma, refl, k)?, uk))) {
            Ok((mk, uk)) => {
                u.push(uk);
                m.push(mk);
            }
            Err(e) => {
                issues.push(format!("u_{}: {e}", k + 1));
                break;
            }
        }
    }
    let (u, m) = if m.len() == d { (Some(u), Some(m)) } else { (None, None) };

    let (r0, guarantee) = if classes.is_p {
        let r0 = compute_r0(refl).map_err(|e| issues.push(format!("r0: {e}"))).ok();
        let g = match file.source() {
            Ok(ModelSource::Family(f)) => f.guarantee().ok(),
            _ => crate::model::MultiScaleFamily::new(file.gamma.clone(), refl.clone())
                .and_then(|f| f.guarantee())
                .ok(),
        };
        (r0, g)
    } else {
        issues.push("reflection matrix is not a P-matrix".into());
        (None, None)
    };

    let model = match (file.source(), r) {
        (Ok(src @ ModelSource::Concrete(_)), _) | (Ok(src @ ModelSource::Family(_)), Some(_)) => {
            src.resolve(r).map_err(|e| issues.push(format!("model: {e}"))).ok()
        }
        (Ok(ModelSource::Family(_)), None) => None,
        (Err(e), _) => {
            issues.push(format!("model: {e}"));
            None
        }
    };

    let mut report = AnalysisReport {
        dim: d,
        classes,
        guarantee,
        u,
        m,
        r0,
        slackness: None,
        multiscaling_means: None,
        skew_symmetric: None,
        skew_gap: None,
        skew_means: None,
        issues,
    };
    if let Some(model) = model {
        fill_model_fields(&mut report, &model);
    }
    Ok(report)
}

fn fill_model_fields(report: &mut AnalysisReport, model: &SrbmModel) {
    let delta = model.slackness().to_vec();
    if let Some(m) = &report.m {
        report.multiscaling_means = Some(m.iter().zip(&delta).map(|(mk, dk)| mk / dk).collect());
    }
    match model.skew_symmetric_gap() {
        Ok(gap) => {
            report.skew_gap = Some(gap);
            report.skew_symmetric = Some(gap <= SKEW_TOL);
            report.skew_means = model.skew_approx_means().ok();
        }
        Err(e) => report.issues.push(format!("skew-symmetric check: {e}")),
    }
    report.slackness = Some(delta);
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.classes;
        writeln!(f, "dimension          {}", self.dim)?;
        writeln!(
            f,
            "matrix classes     P: {}  M: {}  completely-S: {}  lower-triangular: {}",
            c.is_p, c.is_m, c.is_completely_s, c.is_lower_triangular
        )?;
        for w in &c.witnesses {
            writeln!(f, "  witness          {}", serde_json::to_string(w).unwrap_or_default())?;
        }
        if let Some(g) = self.guarantee {
            writeln!(f, "limit guarantee    {}", serde_json::to_string(&g).unwrap_or_default().trim_matches('"'))?;
        }
        if let Some(u) = &self.u {
            for (k, uk) in u.iter().enumerate() {
                writeln!(f, "u_{:<16} {}", k + 1, fmt_vec(uk))?;
            }
        }
        if let Some(m) = &self.m {
            writeln!(f, "m                  {}", fmt_vec(m))?;
        }
        if let Some(r0) = self.r0 {
            writeln!(f, "r0                 {r0:.6}")?;
        }
        if let Some(d) = &self.slackness {
            writeln!(f, "slackness          {}", fmt_vec(d))?;
        }
        if let Some(v) = &self.multiscaling_means {
            writeln!(f, "multiscaling means {}", fmt_vec(v))?;
        }
        if let (Some(ok), Some(gap)) = (self.skew_symmetric, self.skew_gap) {
            writeln!(f, "skew-symmetric     {ok} (gap {gap:.3e})")?;
        }
        if let Some(v) = &self.skew_means {
            writeln!(f, "skew means         {}", fmt_vec(v))?;
        }
        for i in &self.issues {
            writeln!(f, "issue              {i}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SquareMatrix;

    fn network_file() -> ModelFile {
        ModelFile::parse(
            r#"{"d": 3, "gamma": [[1,0,0],[0,1,0],[0,0,1]],
                "R": [[1,-0.6,-0.4],[-0.5,1,-0.4],[-0.2,-0.3,1]], "multiscale": true}"#,
        )
        .unwrap()
    }

    #[test]
    fn network_means_at_scale() {
        let rep = analyze(&network_file(), Some(0.2)).unwrap();
        let ms = rep.multiscaling_means.unwrap();
        for (a, b) in ms.iter().zip([2.5, 22.32, 179.69]) {
            assert!((a - b).abs() < 0.01 * b);
        }
        assert!(rep.classes.is_m);
        assert_eq!(rep.guarantee, Some(LimitGuarantee::MMatrix));
        assert_eq!(rep.skew_symmetric, Some(false));
    }

    #[test]
    fn identity_model() {
        let file = ModelFile::from_model(
            &SrbmModel::new(SquareMatrix::identity(2), vec![-1.0, -1.0], SquareMatrix::identity(2)).unwrap(),
        );
        let rep = analyze(&file, None).unwrap();
        let c = &rep.classes;
        assert!(c.is_p && c.is_m && c.is_completely_s && c.is_lower_triangular);
        assert_eq!(rep.multiscaling_means, Some(vec![0.5, 0.5]));
        assert_eq!(rep.skew_means, Some(vec![0.5, 0.5]));
        assert_eq!(rep.skew_symmetric, Some(true));
    }

    #[test]
    fn non_p_matrix_reports_witness() {
        let file = ModelFile::parse(r#"{"d": 2, "gamma": [[1,0],[0,1]], "R": [[1,-2],[-2,1]], "mu": [-1,-1]}"#).unwrap();
        let rep = analyze(&file, None).unwrap();
        assert!(!rep.classes.is_p);
        assert!(rep.issues.iter().any(|i| i.contains("not a P-matrix")));
        assert!(rep.issues.iter().any(|i| i.starts_with("model:")));
    }

    #[test]
    fn family_and_expanded_model_agree() {
        let fam = match network_file().source().unwrap() {
            ModelSource::Family(f) => f,
            _ => unreachable!(),
        };
        let a = analyze(&network_file(), Some(0.3)).unwrap();
        let b = analyze(&ModelFile::from_model(&fam.make_model(0.3).unwrap()), None).unwrap();
        assert_eq!(a.classes, b.classes);
        assert_eq!(a.u, b.u);
        assert_eq!(a.m, b.m);
        let close = |x: &Option<Vec<f64>>, y: &Option<Vec<f64>>| {
            x.as_ref().unwrap().iter().zip(y.as_ref().unwrap()).all(|(p, q)| (p - q).abs() <= 1e-9 * q.abs().max(1.0))
        };
        assert!(close(&a.slackness, &b.slackness));
        assert!(close(&a.multiscaling_means, &b.multiscaling_means));
        assert!(close(&a.skew_means, &b.skew_means));
    }
}
