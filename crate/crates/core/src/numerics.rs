//! Small fixed-size linear algebra and a deterministic RK4 integrator.
//!
//! Everything here is sized for a two-state plant: 2×2 real matrices,
//! closed-form eigenvalues, and complex matrices of at most a few rows used
//! to test Rosenbrock rank deficiency.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative pivot tolerance used for rank decisions unless a caller overrides it.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Plant state `(v_y, r)`.
pub type State = [f64; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("state became non-finite at step {step}")]
    NonFinite { step: usize },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
}

/// Real 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self([[a11, a12], [a21, a22]])
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn mul_vec(&self, x: &State) -> State {
        [
            self.0[0][0] * x[0] + self.0[0][1] * x[1],
            self.0[1][0] * x[0] + self.0[1][1] * x[1],
        ]
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &other.0;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn add(&self, other: &Mat2) -> Mat2 {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] += other.0[i][j];
            }
        }
        out
    }

    pub fn scale(&self, k: f64) -> Mat2 {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= k;
            }
        }
        out
    }

    /// Inverse, or `None` when the determinant is exactly zero.
    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 {
            return None;
        }
        let a = &self.0;
        Some(Mat2::new(a[1][1] / d, -a[0][1] / d, -a[1][0] / d, a[0][0] / d))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Both roots of `λ² − tr·λ + det`, sorted by real part then imaginary part.
pub fn eig2x2(m: &Mat2) -> [Complex64; 2] {
    let [[a, b], [c, d]] = m.0;
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    // (tr/2)² − det rewritten to avoid cancellation for nearly equal diagonals.
    let disc = half_diff * half_diff + b * c;
    let mut roots = if disc >= 0.0 {
        let s = disc.sqrt();
        let big = if half_tr >= 0.0 { half_tr + s } else { half_tr - s };
        let det = m.det();
        let small = if big != 0.0 { det / big } else { half_tr - (big - half_tr) };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [Complex64::new(half_tr, s), Complex64::new(half_tr, -s)]
    };
    roots.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    roots
}

/// Small dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "CMat needs at least one row and column");
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = Complex64::new(v, 0.0);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn scale(&self, k: Complex64) -> CMat {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v *= k;
        }
        out
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Display for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{}", self[(i, j)])).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Row echelon form with partial pivoting. Returns the reduced matrix and the
/// pivot column of each accepted pivot row.
fn echelon(m: &CMat, tol: f64) -> (CMat, Vec<usize>) {
    let mut u = m.clone();
    let threshold = tol * m.max_abs();
    let mut pivots = Vec::new();
    if m.max_abs() == 0.0 {
        return (u, pivots);
    }
    let mut row = 0;
    for col in 0..u.cols {
        if row == u.rows {
            break;
        }
        let (best, best_mag) = (row..u.rows)
            .map(|i| (i, u[(i, col)].norm()))
            .fold((row, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_mag <= threshold {
            continue;
        }
        u.swap_rows(row, best);
        let p = u[(row, col)];
        for i in row + 1..u.rows {
            let f = u[(i, col)] / p;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in col..u.cols {
                let delta = f * u[(row, j)];
                u[(i, j)] -= delta;
            }
            u[(i, col)] = Complex64::new(0.0, 0.0);
        }
        pivots.push(col);
        row += 1;
    }
    (u, pivots)
}

/// Numerical rank: a pivot counts iff its magnitude exceeds `tol` times the
/// largest entry of the original matrix.
pub fn rank_with_tol(m: &CMat, tol: f64) -> usize {
    assert!(tol > 0.0, "rank tolerance must be positive");
    echelon(m, tol).1.len()
}

/// One unit-norm right null vector, or `None` at full column rank.
///
/// The largest component is rotated to be real and positive so that the
/// result is deterministic up to the choice of free column.
pub fn null_direction(m: &CMat, tol: f64) -> Option<Vec<Complex64>> {
    assert!(tol > 0.0, "rank tolerance must be positive");
    let (u, pivots) = echelon(m, tol);
    let free = (0..m.cols).find(|c| !pivots.contains(c))?;
    let zero = Complex64::new(0.0, 0.0);
    let mut v = vec![zero; m.cols];
    v[free] = Complex64::new(1.0, 0.0);
    for (row, &pc) in pivots.iter().enumerate().rev() {
        let mut acc = zero;
        for j in pc + 1..m.cols {
            acc += u[(row, j)] * v[j];
        }
        v[pc] = -acc / u[(row, pc)];
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let lead = v
        .iter()
        .copied()
        .fold(zero, |best, z| if z.norm() > best.norm() { z } else { best });
    let phase = lead.conj() / lead.norm();
    Some(v.into_iter().map(|z| z * phase / norm).collect())
}

/// Uniform time grid: `n_steps` steps of size `dt` starting at `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self, NumericsError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(NumericsError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(NumericsError::InvalidGrid("n_steps must be at least 1".into()));
        }
        if !t0.is_finite() {
            return Err(NumericsError::InvalidGrid("t0 must be finite".into()));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid covering `[t0, t0 + duration]` with the step count rounded to the nearest integer.
    pub fn from_duration(t0: f64, dt: f64, duration: f64) -> Result<Self, NumericsError> {
        let n = (duration / dt).round();
        if !(n >= 1.0 && n.is_finite()) {
            return Err(NumericsError::InvalidGrid(format!(
                "duration {duration} s is shorter than one step of {dt} s"
            )));
        }
        Self::new(t0, dt, n as usize)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Index of the grid point nearest to `t`, if `t` lies within `tol·dt` of one.
    pub fn index_of(&self, t: f64, tol: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if k < 0.0 || ((t - self.t0) / self.dt - k).abs() > tol {
            return None;
        }
        Some(k as usize)
    }
}

fn axpy<const N: usize>(x: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += h * k[i];
    }
    out
}

/// One classical RK4 step; `inputs` is sampled at each stage time.
pub fn rk4_step<const N: usize, U, F, G>(deriv: &F, inputs: &G, t: f64, x: &[f64; N], dt: f64) -> [f64; N]
where
    F: Fn(&[f64; N], &U) -> [f64; N],
    G: Fn(f64) -> U,
{
    let half = 0.5 * dt;
    let u0 = inputs(t);
    let um = inputs(t + half);
    let u1 = inputs(t + dt);
    let k1 = deriv(x, &u0);
    let k2 = deriv(&axpy(x, half, &k1), &um);
    let k3 = deriv(&axpy(x, half, &k2), &um);
    let k4 = deriv(&axpy(x, dt, &k3), &u1);
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Fixed-step RK4 over the whole grid. Returns `n_steps + 1` states, the
/// first being `x0`.
pub fn integrate_rk4<const N: usize, U, F, G>(
    deriv: F,
    x0: [f64; N],
    inputs: G,
    grid: &TimeGrid,
) -> Result<Vec<[f64; N]>, NumericsError>
where
    F: Fn(&[f64; N], &U) -> [f64; N],
    G: Fn(f64) -> U,
{
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    let mut x = x0;
    out.push(x);
    for k in 0..grid.n_steps {
        x = rk4_step(&deriv, &inputs, grid.time(k), &x, grid.dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { step: k + 1 });
        }
        out.push(x);
    }
    Ok(out)
}
