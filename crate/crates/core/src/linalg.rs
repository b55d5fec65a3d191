//! Dense complex matrices and Gaussian elimination with partial pivoting.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of `‖M‖∞` are treated as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// A refinement pass runs when the residual exceeds this fraction of `‖rhs‖∞`.
pub const REFINE_RESIDUAL_RATIO: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Build from rows; fails on ragged input, empty input or non-finite entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("matrix rows must be non-empty and equal length".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(Complex64::conj).collect(),
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn norm_inf(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// LU factors `PM = LU` with unit lower triangle stored below the diagonal.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: ComplexMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn new(m: &ComplexMatrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::InvalidArgument(format!(
                "solve needs a square matrix, got {}x{}",
                m.rows, m.cols
            )));
        }
        let n = m.rows;
        let threshold = SINGULAR_PIVOT_RATIO * m.norm_inf();
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for step in 0..n {
            let (p, pivot) = (step..n)
                .map(|r| (r, lu[(r, step)].norm()))
                .fold((step, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN pivots must fail too
            if !(pivot >= threshold) || pivot == 0.0 {
                return Err(Error::NearSingular { step, pivot });
            }
            if p != step {
                for c in 0..n {
                    lu.data.swap(step * n + c, p * n + c);
                }
                perm.swap(step, p);
            }
            let inv = lu[(step, step)].inv();
            for r in step + 1..n {
                let factor = lu[(r, step)] * inv;
                lu[(r, step)] = factor;
                if factor == ZERO {
                    continue;
                }
                for c in step + 1..n {
                    let sub = factor * lu[(step, c)];
                    lu[(r, c)] -= sub;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let n = self.lu.rows;
        assert_eq!(rhs.len(), n);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 1..n {
            let s: Complex64 = (0..r).map(|c| self.lu[(r, c)] * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let s: Complex64 = (r + 1..n).map(|c| self.lu[(r, c)] * x[c]).sum();
            x[r] = (x[r] - s) / self.lu[(r, r)];
        }
        x
    }
}

/// Solution of `Mx = rhs` with its infinity-norm residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<Complex64>,
    pub residual: f64,
    pub refined: bool,
}

fn residual(m: &ComplexMatrix, x: &[Complex64], rhs: &[Complex64]) -> Vec<Complex64> {
    m.mul_vec(x).iter().zip(rhs).map(|(a, b)| a - b).collect()
}

/// Solve `Mx = rhs`; one refinement pass runs if the first residual is too large.
pub fn solve(m: &ComplexMatrix, rhs: &[Complex64]) -> Result<Solution> {
    if rhs.len() != m.rows {
        return Err(Error::InvalidArgument(format!(
            "rhs has length {}, matrix has {} rows",
            rhs.len(),
            m.rows
        )));
    }
    let lu = LuFactors::new(m)?;
    let mut x = lu.solve(rhs);
    let mut r = residual(m, &x, rhs);
    let mut res = norm_inf(&r);
    let mut refined = false;
    if res > REFINE_RESIDUAL_RATIO * norm_inf(rhs) {
        let delta = lu.solve(&r);
        let candidate: Vec<Complex64> = x.iter().zip(&delta).map(|(a, d)| a - d).collect();
        r = residual(m, &candidate, rhs);
        let cres = norm_inf(&r);
        if cres < res {
            x = candidate;
            res = cres;
        }
        refined = true;
    }
    Ok(Solution {
        x,
        residual: res,
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, diag_boost: f64) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, n);
        for r in 0..n {
            for col in 0..n {
                m[(r, col)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            m[(r, r)] += diag_boost;
        }
        m
    }

    #[test]
    fn identity_returns_rhs() {
        let rhs = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0)];
        let s = solve(&ComplexMatrix::identity(3), &rhs).unwrap();
        assert_eq!(s.x, rhs);
        assert_eq!(s.residual, 0.0);
    }

    #[test]
    fn diagonal_system() {
        let m = ComplexMatrix::from_rows(&[vec![c(2.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(4.0, 0.0)]]).unwrap();
        let s = solve(&m, &[c(2.0, 0.0), c(0.0, 4.0)]).unwrap();
        assert!((s.x[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((s.x[1] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let m = ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]).unwrap();
        let s = solve(&m, &[c(3.0, 0.0), c(5.0, 0.0)]).unwrap();
        assert_eq!(s.x, vec![c(5.0, 0.0), c(3.0, 0.0)]);
    }

    #[test]
    fn singular_matrix_names_step() {
        let m = ComplexMatrix::from_rows(&[
            vec![c(1.0, 0.0), c(2.0, 0.0)],
            vec![c(2.0, 0.0), c(4.0, 0.0)],
        ])
        .unwrap();
        match solve(&m, &[c(1.0, 0.0), c(1.0, 0.0)]) {
            Err(Error::NearSingular { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ComplexMatrix::from_rows(&[]).is_err());
        assert!(ComplexMatrix::from_rows(&[vec![c(1.0, 0.0)], vec![]]).is_err());
        assert!(ComplexMatrix::from_rows(&[vec![c(f64::NAN, 0.0)]]).is_err());
        let m = ComplexMatrix::zeros(2, 3);
        assert!(solve(&m, &[c(1.0, 0.0); 2]).is_err());
        assert!(solve(&ComplexMatrix::identity(2), &[c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn random_12x12_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let m = random_matrix(&mut rng, 12, 4.0);
            let rhs: Vec<Complex64> = (0..12).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let s = solve(&m, &rhs).unwrap();
            let r = norm_inf(&residual(&m, &s.x, &rhs));
            assert!(r <= 1e-10 * norm_inf(&rhs), "residual {r}");
            assert_eq!(r, s.residual);
        }
    }

    #[test]
    fn recovers_known_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 5, 16, 40, 64] {
            let m = random_matrix(&mut rng, n, 3.0);
            let x0: Vec<Complex64> = (0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let s = solve(&m, &m.mul_vec(&x0)).unwrap();
            let err = s.x.iter().zip(&x0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err <= 1e-9 * norm_inf(&x0), "n={n} err={err}");
        }
    }

    #[test]
    fn ill_conditioned_recovery() {
        // diag(1, 1e-6) scaled by a unitary-ish rotation: condition number 1e6
        let s = 1.0 / 2f64.sqrt();
        let q = [[c(s, 0.0), c(s, 0.0)], [c(-s, 0.0), c(s, 0.0)]];
        let d = [1.0, 1e-6];
        let mut m = ComplexMatrix::zeros(2, 2);
        for r in 0..2 {
            for col in 0..2 {
                m[(r, col)] = (0..2).map(|t| q[r][t] * d[t] * q[col][t]).sum();
            }
        }
        let x0 = vec![c(0.3, -0.2), c(1.0, 0.7)];
        let sol = solve(&m, &m.mul_vec(&x0)).unwrap();
        let err = sol.x.iter().zip(&x0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err <= 1e-9 * norm_inf(&x0), "err={err}");
    }

    #[test]
    fn conjugation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 6, 2.0);
            let rhs: Vec<Complex64> = (0..6).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let a = solve(&m.conj(), &rhs.iter().map(|v| v.conj()).collect::<Vec<_>>()).unwrap();
            let b = solve(&m, &rhs).unwrap();
            for (u, v) in a.x.iter().zip(&b.x) {
                assert!((u - v.conj()).norm() <= 1e-12 * (1.0 + u.norm()));
            }
        }
    }
}
