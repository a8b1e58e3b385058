//! Linear complementarity: find `y >= 0` with `z = q + M y >= 0` and `zᵀy = 0`.
//!
//! With `M = R` this is one reflection step of the SRBM. For P-matrices the
//! solution exists and is unique; it is found by enumerating active sets
//! (the faces where `z_i = 0`) up to [`ENUMERATION_MAX_DIM`] and by Lemke's
//! complementary pivoting above that.

use crate::error::{Error, Result};
use crate::linalg::{mask_indices, SquareMatrix};

pub const ENUMERATION_MAX_DIM: usize = 10;

/// Hard cap on the LCP dimension.
pub const MAX_LCP_DIM: usize = 20;

const FEAS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LcpProblem {
    pub m: SquareMatrix,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    /// Bitmask of indices with `y_i` basic (`z_i = 0`), when found by enumeration.
    pub active: Option<usize>,
}

impl LcpSolution {
    /// `max(|z - q - M y|_∞, |zᵀy|)` plus the worst sign violation.
    pub fn residual(&self, p: &LcpProblem) -> f64 {
        let my = p.m.mul_vec(&self.y);
        let eq = (0..p.q.len())
            .map(|i| (self.z[i] - p.q[i] - my[i]).abs())
            .fold(0.0, f64::max);
        let comp: f64 = self.z.iter().zip(&self.y).map(|(a, b)| a * b).sum::<f64>().abs();
        let neg = self
            .z
            .iter()
            .chain(&self.y)
            .map(|v| (-v).max(0.0))
            .fold(0.0, f64::max);
        eq.max(comp).max(neg)
    }
}

/// Solves the LCP, checking uniqueness when enumerating.
pub fn lcp_solve(p: &LcpProblem) -> Result<LcpSolution> {
    let n = p.m.dim();
    if p.q.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.q.len(),
        });
    }
    if n > MAX_LCP_DIM {
        return Err(Error::DimensionTooLarge {
            n,
            max: MAX_LCP_DIM,
        });
    }
    if n > ENUMERATION_MAX_DIM {
        return lemke(&p.m, &p.q);
    }
    let scale = tolerance_scale(&p.q);
    let mut found: Vec<LcpSolution> = Vec::new();
    for mask in 0..(1usize << n) {
        let Some(sol) = try_active_set(&p.m, &p.q, mask, scale) else {
            continue;
        };
        let dup = found.iter().any(|f| {
            f.z.iter().zip(&sol.z).all(|(a, b)| (a - b).abs() <= 1e-9 * scale)
                && f.y.iter().zip(&sol.y).all(|(a, b)| (a - b).abs() <= 1e-9 * scale)
        });
        if !dup {
            found.push(sol);
        }
    }
    match found.len() {
        0 => Err(Error::NoSolution),
        1 => Ok(found.pop().expect("one solution")),
        count => Err(Error::NonUnique { count }),
    }
}

fn tolerance_scale(q: &[f64]) -> f64 {
    q.iter().map(|x| x.abs()).fold(1.0, f64::max)
}

/// Solution with `z_S = 0` on the active set `S = mask`, if feasible.
fn try_active_set(m: &SquareMatrix, q: &[f64], mask: usize, scale: f64) -> Option<LcpSolution> {
    let n = q.len();
    let active = mask_indices(mask, n);
    let mut y = vec![0.0; n];
    if !active.is_empty() {
        let sub = m.principal_submatrix(&active);
        let lu = sub.lu().ok()?;
        let rhs: Vec<f64> = active.iter().map(|&i| -q[i]).collect();
        for (&i, v) in active.iter().zip(lu.solve(&rhs)) {
            y[i] = v;
        }
    }
    finish(m, q, mask, y, scale)
}

fn finish(m: &SquareMatrix, q: &[f64], mask: usize, mut y: Vec<f64>, scale: f64) -> Option<LcpSolution> {
    let n = q.len();
    let tol = FEAS_TOL * scale;
    let mut z = vec![0.0; n];
    for i in 0..n {
        if mask & (1 << i) != 0 {
            if y[i] < -tol {
                return None;
            }
            y[i] = y[i].max(0.0);
        } else {
            let zi = q[i] + (0..n).map(|j| m[(i, j)] * y[j]).sum::<f64>();
            if zi < -tol {
                return None;
            }
            z[i] = zi.max(0.0);
        }
    }
    Some(LcpSolution {
        z,
        y,
        active: Some(mask),
    })
}

/// Reflection step for a fixed P-matrix `R`, with every principal inverse
/// cached so that each call costs a few small mat-vecs.
///
/// Candidate active sets are tried starting from `{i : q_i < 0}`; the first
/// feasible one is returned, which is the unique solution for P-matrices.
#[derive(Debug, Clone)]
pub struct ReflectionMap {
    m: SquareMatrix,
    /// `inverses[mask]` is `(R_SS)⁻¹` row-major for `S = mask`, empty if singular.
    inverses: Vec<Vec<f64>>,
    order: Vec<usize>,
}

impl ReflectionMap {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        let n = m.dim();
        if n > MAX_LCP_DIM {
            return Err(Error::DimensionTooLarge {
                n,
                max: MAX_LCP_DIM,
            });
        }
        let (inverses, order) = if n <= ENUMERATION_MAX_DIM {
            let inverses = (0..(1usize << n))
                .map(|mask| {
                    let idx = mask_indices(mask, n);
                    if idx.is_empty() {
                        return Vec::new();
                    }
                    m.principal_submatrix(&idx)
                        .lu()
                        .map(|lu| lu.inverse().as_slice().to_vec())
                        .unwrap_or_default()
                })
                .collect();
            let mut order: Vec<usize> = (0..(1usize << n)).collect();
            order.sort_by_key(|mask| mask.count_ones());
            (inverses, order)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self { m, inverses, order })
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.m
    }

    /// Writes the reflected state into `z` and the regulator increment into `y`.
    pub fn reflect(&self, q: &[f64], z: &mut [f64], y: &mut [f64]) -> Result<()> {
        let n = q.len();
        if q.iter().all(|&v| v >= 0.0) {
            z.copy_from_slice(q);
            y.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        if n > ENUMERATION_MAX_DIM {
            let sol = lemke(&self.m, q)?;
            z.copy_from_slice(&sol.z);
            y.copy_from_slice(&sol.y);
            return Ok(());
        }
        let scale = tolerance_scale(q);
        let guess = (0..n).filter(|&i| q[i] < 0.0).fold(0usize, |m, i| m | (1 << i));
        if self.try_mask(guess, q, z, y, scale) {
            return Ok(());
        }
        for &mask in &self.order {
            if mask != guess && self.try_mask(mask, q, z, y, scale) {
                return Ok(());
            }
        }
        Err(Error::NoSolution)
    }

    pub fn solve(&self, q: &[f64]) -> Result<LcpSolution> {
        let n = q.len();
        let mut z = vec![0.0; n];
        let mut y = vec![0.0; n];
        self.reflect(q, &mut z, &mut y)?;
        let active = (n <= ENUMERATION_MAX_DIM)
            .then(|| (0..n).filter(|&i| y[i] > 0.0 || (z[i] == 0.0 && q[i] < 0.0)).fold(0, |m, i| m | (1 << i)));
        Ok(LcpSolution { z, y, active })
    }

    fn try_mask(&self, mask: usize, q: &[f64], z: &mut [f64], y: &mut [f64], scale: f64) -> bool {
        let n = q.len();
        let tol = FEAS_TOL * scale;
        y.iter_mut().for_each(|v| *v = 0.0);
        if mask != 0 {
            let inv = &self.inverses[mask];
            if inv.is_empty() {
                return false;
            }
            let k = mask.count_ones() as usize;
            // Active indices in ascending order, matching the cached inverse layout.
            let mut idx = [0usize; ENUMERATION_MAX_DIM];
            let mut c = 0;
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    idx[c] = i;
                    c += 1;
                }
            }
            for a in 0..k {
                let mut s = 0.0;
                for b in 0..k {
                    s -= inv[a * k + b] * q[idx[b]];
                }
                if s < -tol {
                    return false;
                }
                y[idx[a]] = s.max(0.0);
            }
        }
        for i in 0..n {
            if mask & (1 << i) != 0 {
                z[i] = 0.0;
            } else {
                let row = self.m.row(i);
                let mut zi = q[i];
                for j in 0..n {
                    zi += row[j] * y[j];
                }
                if zi < -tol {
                    return false;
                }
                z[i] = zi.max(0.0);
            }
        }
        true
    }
}

/// Lemke's complementary pivoting with covering vector `e`.
///
/// Works on the tableau `w - M y - e y0 = q`; returns `NoSolution` on ray
/// termination, which for a P-matrix cannot happen.
pub fn lemke(m: &SquareMatrix, q: &[f64]) -> Result<LcpSolution> {
    let n = q.len();
    if q.iter().all(|&v| v >= 0.0) {
        return Ok(LcpSolution {
            z: q.to_vec(),
            y: vec![0.0; n],
            active: None,
        });
    }
    // Columns: w_0..w_{n-1}, y_0..y_{n-1}, y0 (artificial), rhs.
    let cols = 2 * n + 1;
    let width = cols + 1;
    let mut t = vec![0.0; n * width];
    for i in 0..n {
        t[i * width + i] = 1.0;
        for j in 0..n {
            t[i * width + n + j] = -m[(i, j)];
        }
        t[i * width + 2 * n] = -1.0;
        t[i * width + cols] = q[i];
    }
    let mut basis: Vec<usize> = (0..n).collect();
    let pivot = |t: &mut Vec<f64>, row: usize, col: usize| {
        let p = t[row * width + col];
        for j in 0..width {
            t[row * width + j] /= p;
        }
        for i in 0..n {
            if i == row {
                continue;
            }
            let f = t[i * width + col];
            if f != 0.0 {
                for j in 0..width {
                    t[i * width + j] -= f * t[row * width + j];
                }
            }
        }
    };

    // Initial pivot: y0 enters, the most negative q leaves.
    let (mut row, _) = q
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    let mut entering = 2 * n;
    let max_iter = 50 * (n + 1) * (n + 1);
    for _ in 0..max_iter {
        let leaving = basis[row];
        pivot(&mut t, row, entering);
        basis[row] = entering;
        if leaving == 2 * n {
            break;
        }
        // Complement of the leaving variable enters.
        entering = if leaving < n { leaving + n } else { leaving - n };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            let a = t[i * width + entering];
            if a > 1e-12 {
                let ratio = t[i * width + cols] / a;
                let better = match best {
                    None => true,
                    // Prefer the artificial variable on ties so the run terminates.
                    Some((bi, br)) => ratio < br - 1e-12 || ((ratio - br).abs() <= 1e-12 && basis[i] == 2 * n && basis[bi] != 2 * n),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        match best {
            Some((r, _)) => row = r,
            None => return Err(Error::NoSolution),
        }
    }
    if basis.contains(&(2 * n)) {
        return Err(Error::NoSolution);
    }
    let mut z = vec![0.0; n];
    let mut y = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        let v = t[i * width + cols].max(0.0);
        if b < n {
            z[b] = v;
        } else {
            y[b - n] = v;
        }
    }
    Ok(LcpSolution { z, y, active: None })
}
