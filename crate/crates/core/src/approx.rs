//! Closed-form multi-scaling approximation.
//!
//! For a P-matrix `R`, component `k` of the scaled stationary vector
//! `(r Z_1, r² Z_2, …, r^d Z_d)` converges to an independent exponential
//! with mean `m_k = u_kᵀ Γ u_k / (2 u_kᵀ R[:, k])`, where `u_k` has unit
//! k-th entry, zeros after it, and is orthogonal to the first `k - 1`
//! columns of `R`.
//!
//! Component indices are 0-based throughout: `u[0]` is the first vector.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, solve, SquareMatrix};
use crate::model::{check_scale, MultiScaleFamily};

/// `u_k`: entries `0..k` solve `Σ_j w_j R[j, l] = -R[k, l]` for `l < k`,
/// entry `k` is 1, the rest are 0.
pub fn compute_u(r: &SquareMatrix, k: usize) -> Result<Vec<f64>> {
    let d = r.dim();
    if k >= d {
        return Err(Error::BadComponent { k, d });
    }
    let mut u = vec![0.0; d];
    u[k] = 1.0;
    if k > 0 {
        let lead: Vec<usize> = (0..k).collect();
        let block_t = r.principal_submatrix(&lead).transpose();
        let rhs: Vec<f64> = (0..k).map(|l| -r[(k, l)]).collect();
        let w = solve(&block_t, &rhs).map_err(|_| Error::SingularPrincipalBlock { order: k })?;
        u[..k].copy_from_slice(&w);
    }
    Ok(u)
}

/// `u_kᵀ R[:, k]`, the Schur complement of the leading block of order `k + 1`.
pub fn schur_term(r: &SquareMatrix, k: usize) -> Result<f64> {
    let u = compute_u(r, k)?;
    Ok(dot(&u, &r.column(k)))
}

/// Limiting mean `m_k = u_kᵀ Γ u_k / (2 u_kᵀ R[:, k])`.
pub fn compute_m(gamma: &SquareMatrix, r: &SquareMatrix, k: usize) -> Result<f64> {
    let u = compute_u(r, k)?;
    mean_from_u(gamma, r, &u, k)
}

fn mean_from_u(gamma: &SquareMatrix, r: &SquareMatrix, u: &[f64], k: usize) -> Result<f64> {
    let denom = dot(u, &r.column(k));
    if denom <= 0.0 {
        return Err(Error::NonpositiveSchur { k, value: denom });
    }
    Ok(gamma.quadratic_form(u) / (2.0 * denom))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxResult {
    pub r: f64,
    /// `u[k]` for each component.
    pub u: Vec<Vec<f64>>,
    /// `w[k][j] = w_{jk}` for `j < k` (the strictly lower coefficient table).
    pub w: Vec<Vec<f64>>,
    /// Limiting means of `r^k Z_k`.
    pub m: Vec<f64>,
    /// Unscaled means `m_k / r^k` (1-based power).
    pub scaled_means: Vec<f64>,
}

impl ApproxResult {
    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Limiting joint MGF `Π_j 1 / (1 - m_j η_j)` of the scaled vector,
    /// for `η <= 0`.
    pub fn limit_mgf(&self, eta: &[f64]) -> f64 {
        self.m
            .iter()
            .zip(eta)
            .map(|(m, e)| 1.0 / (1.0 - m * e))
            .product()
    }
}

/// Full approximation of the family at scale `r`.
pub fn multiscaling_approx(family: &MultiScaleFamily, r: f64) -> Result<ApproxResult> {
    check_scale(r)?;
    let d = family.dim();
    let refl = family.reflection();
    let mut u = Vec::with_capacity(d);
    let mut m = Vec::with_capacity(d);
    for k in 0..d {
        let uk = compute_u(refl, k)?;
        m.push(mean_from_u(family.gamma(), refl, &uk, k)?);
        u.push(uk);
    }
    let w = u.iter().enumerate().map(|(k, uk)| uk[..k].to_vec()).collect();
    let scaled_means = m
        .iter()
        .enumerate()
        .map(|(k, mk)| mk / r.powi(k as i32 + 1))
        .collect();
    Ok(ApproxResult {
        r,
        u,
        w,
        m,
        scaled_means,
    })
}

/// Upper end `r_0` of the scale range on which
/// `Σ_{i>=k} r^{i-k} u_kᵀR[:, i] >= u_kᵀR[:, k] / d` holds for every `k`.
///
/// The minimum runs over pairs `k < i` with `u_kᵀR[:, i] != 0`; the result is
/// capped at 1 and is 1 when no such pair exists.
pub fn compute_r0(r: &SquareMatrix) -> Result<f64> {
    let d = r.dim();
    let scale = r.max_abs();
    let mut r0: f64 = 1.0;
    for k in 0..d {
        let u = compute_u(r, k)?;
        let own = dot(&u, &r.column(k));
        if own <= 0.0 {
            return Err(Error::NonpositiveSchur { k, value: own });
        }
        for i in (k + 1)..d {
            let cross = dot(&u, &r.column(i));
            if cross.abs() <= 1e-14 * scale {
                continue;
            }
            let bound = (own / (d as f64 * cross.abs())).powf(1.0 / (i - k) as f64);
            r0 = r0.min(bound);
        }
    }
    Ok(r0)
}

/// Test vector built from the `u_l`: `θ_k = Σ_{l>=k} r^l η_l u_l`, or its
/// tilde variant whose leading term uses exponent `k + 1/2` (1-based powers).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaVector {
    pub values: Vec<f64>,
    pub tilde: bool,
    pub k: usize,
    pub eta: Vec<f64>,
}

impl ThetaVector {
    /// Largest `|θᵀR[:, i]|` over `i < k`; zero up to round-off by construction.
    pub fn orthogonality_residual(&self, r: &SquareMatrix) -> f64 {
        (0..self.k)
            .map(|i| dot(&self.values, &r.column(i)).abs())
            .fold(0.0, f64::max)
    }
}

pub fn build_theta(approx: &ApproxResult, k: usize, eta: &[f64], tilde: bool) -> Result<ThetaVector> {
    let d = approx.dim();
    if k >= d {
        return Err(Error::BadComponent { k, d });
    }
    if eta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: eta.len(),
        });
    }
    if let Some((index, &value)) = eta.iter().enumerate().find(|(_, &e)| e > 0.0) {
        return Err(Error::BadEta { index, value });
    }
    let r = approx.r;
    let mut values = vec![0.0; d];
    for l in k..d {
        let power = if tilde && l == k {
            r.powf(l as f64 + 1.5)
        } else {
            r.powi(l as i32 + 1)
        };
        let coeff = power * eta[l];
        for (v, ul) in values.iter_mut().zip(&approx.u[l]) {
            *v += coeff * ul;
        }
    }
    Ok(ThetaVector {
        values,
        tilde,
        k,
        eta: eta.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(rows).unwrap()
    }

    fn network_r() -> SquareMatrix {
        m(&[
            &[1.0, -0.6, -0.4],
            &[-0.5, 1.0, -0.4],
            &[-0.2, -0.3, 1.0],
        ])
    }

    #[test]
    fn first_u_is_unit_vector() {
        assert_eq!(compute_u(&network_r(), 0).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn second_u_in_two_dimensions() {
        let r = m(&[&[2.0, 0.7], &[-0.9, 1.3]]);
        let u = compute_u(&r, 1).unwrap();
        assert!((u[0] - 0.9 / 2.0).abs() < 1e-15);
        assert_eq!(u[1], 1.0);
    }

    #[test]
    fn third_u_solves_the_two_by_two_system() {
        // Hand elimination of w1 - 0.5 w2 = 0.2, -0.6 w1 + w2 = 0.3:
        // w2 = (0.3 + 0.6 * 0.2) / (1 - 0.3) = 0.6, w1 = 0.2 + 0.5 * 0.6 = 0.5.
        let r = network_r();
        let u = compute_u(&r, 2).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-14 && (u[1] - 0.6).abs() < 1e-14);
        assert_eq!(u[2], 1.0);
        for l in 0..2 {
            assert!(dot(&u, &r.column(l)).abs() < 1e-10);
        }
    }

    #[test]
    fn out_of_range_component() {
        assert!(matches!(
            compute_u(&network_r(), 3),
            Err(Error::BadComponent { k: 3, d: 3 })
        ));
    }

    #[test]
    fn singular_leading_block() {
        let r = m(&[&[0.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            compute_u(&r, 1),
            Err(Error::SingularPrincipalBlock { order: 1 })
        ));
    }

    #[test]
    fn upper_triangular_means_are_one_half() {
        for beta in [0.0, 0.25, 0.5, 0.75] {
            let r = m(&[&[1.0, -beta], &[0.0, 1.0]]);
            let g = SquareMatrix::identity(2);
            assert_eq!(compute_m(&g, &r, 0).unwrap(), 0.5);
            assert_eq!(compute_m(&g, &r, 1).unwrap(), 0.5);
        }
    }

    #[test]
    fn alpha_beta_second_mean() {
        let (alpha, beta) = (0.5, 0.5);
        let r = m(&[&[1.0, -beta], &[-alpha, 1.0]]);
        let m2 = compute_m(&SquareMatrix::identity(2), &r, 1).unwrap();
        assert!((m2 - 1.25 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn network_scaled_means() {
        let fam = MultiScaleFamily::new(SquareMatrix::identity(3), network_r()).unwrap();
        let approx = multiscaling_approx(&fam, 0.2).unwrap();
        for (got, want) in approx.scaled_means.iter().zip([2.5, 22.32, 179.69]) {
            assert!((got / want - 1.0).abs() < 0.01, "{got} vs {want}");
        }
        assert_eq!(approx.w[0], Vec::<f64>::new());
        assert_eq!(approx.w[2].len(), 2);
    }

    #[test]
    fn scaled_means_undo_powers() {
        let fam = MultiScaleFamily::new(
            SquareMatrix::identity(2),
            m(&[&[1.0, -0.5], &[0.0, 1.0]]),
        )
        .unwrap();
        for r in [0.1, 0.3, 0.9] {
            let a = multiscaling_approx(&fam, r).unwrap();
            assert!((a.scaled_means[0] - 0.5 / r).abs() < 1e-12);
            assert!((a.scaled_means[1] - 0.5 / (r * r)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_mean() {
        let (sigma2, rho, r) = (2.0, 4.0, 0.25);
        let fam = MultiScaleFamily::new(m(&[&[sigma2]]), m(&[&[rho]])).unwrap();
        let a = multiscaling_approx(&fam, r).unwrap();
        assert_eq!(a.m[0], sigma2 / (2.0 * rho));
        assert_eq!(a.scaled_means[0], sigma2 / (2.0 * rho * r));
    }

    #[test]
    fn r0_examples() {
        let r = m(&[&[2.0, -0.6], &[0.3, 1.0]]);
        assert!((compute_r0(&r).unwrap() - (2.0f64 / 1.2).min(1.0)).abs() < 1e-15);
        let r = m(&[&[1.0, -3.0], &[0.3, 1.0]]);
        assert!((compute_r0(&r).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(compute_r0(&SquareMatrix::identity(3)).unwrap(), 1.0);
        let r = m(&[&[1.0, -0.6], &[0.0, 1.0]]);
        assert!((compute_r0(&r).unwrap() - 1.0 / 1.2).abs() < 1e-15);
    }

    #[test]
    fn theta_examples() {
        let fam = MultiScaleFamily::new(
            SquareMatrix::identity(2),
            m(&[&[1.0, -0.5], &[0.0, 1.0]]),
        )
        .unwrap();
        let approx = multiscaling_approx(&fam, 0.1).unwrap();

        let zero = build_theta(&approx, 0, &[0.0, 0.0], false).unwrap();
        assert_eq!(zero.values, vec![0.0, 0.0]);

        let th = build_theta(&approx, 0, &[-1.0, -1.0], false).unwrap();
        assert!((th.values[0] + 0.1).abs() < 1e-15);
        assert!((th.values[1] + 0.01).abs() < 1e-15);

        let last = build_theta(&approx, 1, &[-3.0, -2.0], false).unwrap();
        assert!((last.values[1] + 2.0 * 0.01).abs() < 1e-15);
        assert_eq!(last.values[0], 0.0);

        let tilde = build_theta(&approx, 1, &[0.0, -1.0], true).unwrap();
        assert!((tilde.values[1] + 0.1f64.powf(2.5)).abs() < 1e-15);

        assert!(matches!(
            build_theta(&approx, 0, &[0.5, -1.0], false),
            Err(Error::BadEta { index: 0, .. })
        ));
    }

    #[test]
    fn theta_orthogonality_on_network() {
        let fam = MultiScaleFamily::new(SquareMatrix::identity(3), network_r()).unwrap();
        let approx = multiscaling_approx(&fam, 0.3).unwrap();
        for k in 0..3 {
            for tilde in [false, true] {
                let th = build_theta(&approx, k, &[-1.0, -2.0, -0.5], tilde).unwrap();
                assert!(th.orthogonality_residual(fam.reflection()) < 1e-10);
            }
        }
    }

    #[test]
    fn limit_mgf_is_product_of_exponential_mgfs() {
        let fam = MultiScaleFamily::new(SquareMatrix::identity(2), SquareMatrix::identity(2)).unwrap();
        let a = multiscaling_approx(&fam, 0.5).unwrap();
        assert_eq!(a.limit_mgf(&[0.0, 0.0]), 1.0);
        assert!((a.limit_mgf(&[-2.0, -1.0]) - 1.0 / (2.0 * 1.5)).abs() < 1e-15);
    }
}
