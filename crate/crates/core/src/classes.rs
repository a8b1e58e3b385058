//! Matrix-class predicates: P-, M- and completely-S matrices.
//!
//! The P test enumerates all `2^n - 1` principal minors, so [`classify`]
//! refuses matrices above [`MAX_CLASSIFY_DIM`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, mask_indices, SquareMatrix};

pub const MAX_CLASSIFY_DIM: usize = 20;

/// A principal minor counts as positive only above this threshold.
pub const MINOR_TOL: f64 = 1e-12;

/// Up to this order the S-matrix LP is solved by vertex enumeration.
const VERTEX_ENUM_MAX: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassWitness {
    /// A principal minor that is not positive; indices are 0-based.
    NonPositiveMinor { indices: Vec<usize>, value: f64 },
    /// An off-diagonal entry that rules out the M-matrix (Z-matrix) sign pattern.
    PositiveOffDiagonal { row: usize, col: usize, value: f64 },
    /// A principal submatrix admitting no `u >= 0` with `R u > 0`.
    NotS { indices: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixClassReport {
    pub is_p: bool,
    pub is_m: bool,
    pub is_completely_s: bool,
    pub is_lower_triangular: bool,
    /// One entry per negative verdict, explaining it.
    pub witnesses: Vec<ClassWitness>,
}

pub fn classify(a: &SquareMatrix) -> Result<MatrixClassReport> {
    let n = a.dim();
    if n > MAX_CLASSIFY_DIM {
        return Err(Error::DimensionTooLarge {
            n,
            max: MAX_CLASSIFY_DIM,
        });
    }
    let mut witnesses = Vec::new();

    let minor_witness = first_nonpositive_minor(a);
    let is_p = minor_witness.is_none();
    witnesses.extend(minor_witness);

    let off_diag = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .find(|&(i, j)| i != j && a[(i, j)] > 0.0);
    if let Some((row, col)) = off_diag {
        witnesses.push(ClassWitness::PositiveOffDiagonal {
            row,
            col,
            value: a[(row, col)],
        });
    }
    // A Z-matrix is an M-matrix exactly when it is a P-matrix.
    let is_m = off_diag.is_none() && is_p;

    // Above the enumeration cutoff, fall back on the inclusion P => completely-S
    // instead of solving up to a million LPs.
    let s_witness = if is_p && n > 10 {
        None
    } else {
        first_non_s_submatrix(a)
    };
    let is_completely_s = s_witness.is_none();
    witnesses.extend(s_witness);

    Ok(MatrixClassReport {
        is_p,
        is_m,
        is_completely_s,
        is_lower_triangular: a.is_lower_triangular(),
        witnesses,
    })
}

pub fn is_p_matrix(a: &SquareMatrix) -> bool {
    first_nonpositive_minor(a).is_none()
}

fn first_nonpositive_minor(a: &SquareMatrix) -> Option<ClassWitness> {
    let n = a.dim();
    (1..(1usize << n)).find_map(|mask| {
        let indices = mask_indices(mask, n);
        let value = a.principal_submatrix(&indices).det();
        (value <= MINOR_TOL).then_some(ClassWitness::NonPositiveMinor { indices, value })
    })
}

/// Every principal submatrix is an S-matrix.
pub fn is_completely_s(a: &SquareMatrix) -> bool {
    first_non_s_submatrix(a).is_none()
}

fn first_non_s_submatrix(a: &SquareMatrix) -> Option<ClassWitness> {
    let n = a.dim();
    (1..(1usize << n)).find_map(|mask| {
        let indices = mask_indices(mask, n);
        (!is_s_matrix(&a.principal_submatrix(&indices))).then_some(ClassWitness::NotS { indices })
    })
}

/// `∃ u >= 0` with `R u > 0`.
pub fn is_s_matrix(r: &SquareMatrix) -> bool {
    if r.dim() <= VERTEX_ENUM_MAX {
        s_value_by_vertices(r) > MINOR_TOL
    } else {
        s_feasible_by_simplex(r)
    }
}

/// `max_{u in simplex} min_i (R u)_i`, by enumerating the vertices of
/// `{(u, t) : R u >= t 1, 1ᵀu = 1, u >= 0}`.
pub fn s_value_by_vertices(r: &SquareMatrix) -> f64 {
    let n = r.dim();
    let m = n + 1;
    // Inequality rows g·(u, t) >= 0: the first n are (R u)_i - t, the next n are u_j.
    let ineq: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut g = r.row(i).to_vec();
            g.push(-1.0);
            g
        })
        .chain((0..n).map(|j| {
            let mut g = vec![0.0; m];
            g[j] = 1.0;
            g
        }))
        .collect();
    let mut eq = vec![1.0; n];
    eq.push(0.0);

    let mut best = f64::NEG_INFINITY;
    for mask in 0..(1usize << (2 * n)) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let mut rows = vec![eq.clone()];
        let mut rhs = vec![1.0];
        for k in mask_indices(mask, 2 * n) {
            rows.push(ineq[k].clone());
            rhs.push(0.0);
        }
        let Ok(sys) = SquareMatrix::from_rows(&rows) else { continue };
        let Ok(lu) = sys.lu() else { continue };
        let x = lu.solve(&rhs);
        let feasible = ineq.iter().all(|g| dot(g, &x) >= -1e-10);
        if feasible && x[n] > best {
            best = x[n];
        }
    }
    best
}

/// Phase-one simplex for `R u - s + a = 1`, `u, s, a >= 0`, minimizing `Σ a`.
/// Feasible (optimum zero) exactly when `R` is an S-matrix.
pub fn s_feasible_by_simplex(r: &SquareMatrix) -> bool {
    let n = r.dim();
    let cols = 3 * n;
    // Tableau rows: constraint rows then the objective row (reduced costs).
    let width = cols + 1;
    let mut t = vec![0.0; (n + 1) * width];
    for i in 0..n {
        for j in 0..n {
            t[i * width + j] = r[(i, j)];
        }
        t[i * width + n + i] = -1.0;
        t[i * width + 2 * n + i] = 1.0;
        t[i * width + cols] = 1.0;
    }
    let mut basis: Vec<usize> = (2 * n..3 * n).collect();
    // Objective: minimize Σ a. Reduced cost row = -Σ constraint rows on non-artificial columns.
    for j in 0..width {
        if (2 * n..3 * n).contains(&j) {
            continue;
        }
        let s: f64 = (0..n).map(|i| t[i * width + j]).sum();
        t[n * width + j] = -s;
    }
    const EPS: f64 = 1e-12;
    for _ in 0..10_000 {
        // Bland's rule: lowest-index column with negative reduced cost.
        let Some(enter) = (0..cols).find(|&j| t[n * width + j] < -EPS) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n {
            let a = t[i * width + enter];
            if a > EPS {
                let ratio = t[i * width + cols] / a;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - EPS || ((ratio - lr).abs() <= EPS && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((pr, _)) = leave else {
            // Unbounded direction in phase one cannot occur (objective >= 0).
            break;
        };
        let piv = t[pr * width + enter];
        for j in 0..width {
            t[pr * width + j] /= piv;
        }
        for i in 0..=n {
            if i == pr {
                continue;
            }
            let f = t[i * width + enter];
            if f != 0.0 {
                for j in 0..width {
                    t[i * width + j] -= f * t[pr * width + j];
                }
            }
        }
        basis[pr] = enter;
    }
    // Objective value is minus the rhs entry of the objective row.
    -t[n * width + cols] <= 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_is_in_every_class() {
        let rep = classify(&SquareMatrix::identity(3)).unwrap();
        assert!(rep.is_p && rep.is_m && rep.is_completely_s && rep.is_lower_triangular);
        assert!(rep.witnesses.is_empty());
    }

    #[test]
    fn three_dimensional_network_matrix_is_m() {
        let r = m(&[
            &[1.0, -0.6, -0.4],
            &[-0.5, 1.0, -0.4],
            &[-0.2, -0.3, 1.0],
        ]);
        let rep = classify(&r).unwrap();
        assert!(rep.is_m && rep.is_p && rep.is_completely_s);
        assert!(!rep.is_lower_triangular);
    }

    #[test]
    fn positive_off_diagonal_p_matrix_is_not_m() {
        let r = m(&[&[1.0, 2.0], &[-0.5, 1.0]]);
        let rep = classify(&r).unwrap();
        assert!(rep.is_p && !rep.is_m && rep.is_completely_s);
        assert!(rep.witnesses.contains(&ClassWitness::PositiveOffDiagonal {
            row: 0,
            col: 1,
            value: 2.0
        }));
    }

    #[test]
    fn non_p_matrix_reports_minor_witness() {
        let r = m(&[&[1.0, -2.0], &[-2.0, 1.0]]);
        let rep = classify(&r).unwrap();
        assert!(!rep.is_p && !rep.is_m);
        match &rep.witnesses[0] {
            ClassWitness::NonPositiveMinor { indices, value } => {
                assert_eq!(indices, &vec![0, 1]);
                assert!((value + 3.0).abs() < 1e-12);
            }
            other => panic!("unexpected witness {other:?}"),
        }
        // [[1,-2],[-2,1]] has no u >= 0 with both rows positive.
        assert!(!rep.is_completely_s);
    }

    #[test]
    fn completely_s_but_not_p() {
        // Minors: 1, 1, det = 1 - 2 = -1, yet u = (1, 1) gives R u = (3, 2) > 0.
        let r = m(&[&[1.0, 2.0], &[1.0, 1.0]]);
        let rep = classify(&r).unwrap();
        assert!(!rep.is_p && rep.is_completely_s);
    }

    #[test]
    fn negative_diagonal_is_not_s() {
        let r = m(&[&[-1.0]]);
        assert!(!is_s_matrix(&r));
        assert!(s_value_by_vertices(&r) < 0.0);
        assert!(!s_feasible_by_simplex(&r));
    }

    #[test]
    fn too_large_is_rejected() {
        let r = SquareMatrix::identity(21);
        assert!(matches!(classify(&r), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn simplex_and_vertex_enumeration_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.gen_range(1..=5);
            let data: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = SquareMatrix::new(n, data).unwrap();
            let v = s_value_by_vertices(&r);
            if v.abs() < 1e-6 {
                continue;
            }
            assert_eq!(v > 0.0, s_feasible_by_simplex(&r), "{r:?}, value {v}");
        }
    }
}
