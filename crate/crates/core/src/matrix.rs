//! Small dense matrix algebra.
//!
//! Determinants and adjugates of matrices up to 6×6 are computed by cofactor
//! expansion, so the sign of a nearly singular determinant is never decided
//! by a pivoting choice. Larger matrices fall back to LU with partial pivoting.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use thiserror::Error;

/// Largest dimension handled by exact cofactor expansion.
pub const COFACTOR_LIMIT: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("{op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: non-finite entry at ({row}, {col})")]
    NonFinite {
        op: &'static str,
        row: usize,
        col: usize,
    },
}

fn dim_err(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> MatError {
    MatError::Dimension {
        op,
        expected: expected.into(),
        got: got.into(),
    }
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    ///
    /// # Panics
    /// If `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec size mismatch");
        Self { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "Mat::from_rows ragged input");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    /// Inverse of [`vec`]: fills columns first.
    pub fn from_col_major(rows: usize, cols: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), rows * cols, "Mat::from_col_major size mismatch");
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = v[j * rows + i];
            }
        }
        m
    }

    pub fn col_vector(v: &[f64]) -> Self {
        Self::from_vec(v.len(), 1, v.to_vec())
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Self::from_vec(1, v.len(), v.to_vec())
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    /// Block-diagonal matrix from square or rectangular blocks.
    pub fn block_diag(blocks: &[&Mat]) -> Self {
        let r: usize = blocks.iter().map(|b| b.rows).sum();
        let c: usize = blocks.iter().map(|b| b.cols).sum();
        let mut m = Self::zeros(r, c);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    m[(r0 + i, c0 + j)] = b[(i, j)];
                }
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "Mat::mul_vec size mismatch");
        (0..self.rows)
            .map(|i| dot(self.row(i), v))
            .collect()
    }

    /// `vᵀ·self` as a plain vector.
    pub fn vec_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "Mat::vec_mul size mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    pub fn is_diagonal(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)] == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn pow(&self, k: u32) -> Mat {
        assert!(self.is_square(), "Mat::pow needs a square matrix");
        let mut out = Mat::identity(self.rows);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Reports the first non-finite entry, if any.
    pub fn check_finite(&self, op: &'static str) -> Result<(), MatError> {
        match self.data.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(k) => Err(MatError::NonFinite {
                op,
                row: k / self.cols,
                col: k % self.cols,
            }),
        }
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matrix product size mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn require_square(op: &'static str, m: &Mat) -> Result<(), MatError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(dim_err(op, "square matrix", format!("{}x{}", m.rows, m.cols)))
    }
}

/// Laplace expansion over the rows listed in `rows` and every column not set
/// in `excluded`. Sub-minors are shared through a table indexed by the set of
/// columns already consumed, so the cost is `O(2^n·n)` instead of `O(n!)`;
/// the value is the same signed sum of permutation products.
fn laplace(m: &Mat, rows: &[usize], excluded: u32) -> f64 {
    let n = m.cols;
    debug_assert!(n <= COFACTOR_LIMIT);
    let mut dp = [0.0_f64; 1 << COFACTOR_LIMIT];
    dp[0] = 1.0;
    let full: u32 = ((1u32 << n) - 1) & !excluded;
    for mask in 0..=full {
        if mask & excluded != 0 || dp[mask as usize] == 0.0 {
            continue;
        }
        let k = mask.count_ones() as usize;
        if k == rows.len() {
            continue;
        }
        let r = rows[k];
        let base = dp[mask as usize];
        let mut sign = 1.0;
        for c in 0..n {
            let bit = 1u32 << c;
            if (excluded | mask) & bit != 0 {
                continue;
            }
            let a = m.data[r * n + c];
            if a != 0.0 {
                dp[(mask | bit) as usize] += sign * a * base;
            }
            sign = -sign;
        }
    }
    dp[full as usize]
}

fn lu_det(m: &Mat) -> f64 {
    let n = m.rows;
    let mut a = m.data.clone();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap();
        let piv = a[p * n + k];
        if piv == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            det = -det;
        }
        det *= piv;
        for i in k + 1..n {
            let l = a[i * n + k] / piv;
            if l != 0.0 {
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
        }
    }
    det
}

/// Determinant of a square matrix.
pub fn determinant(m: &Mat) -> Result<f64, MatError> {
    require_square("determinant", m)?;
    let n = m.rows;
    Ok(match n {
        0 => 1.0,
        _ if m.is_diagonal() => (0..n).map(|i| m[(i, i)]).product(),
        _ if n <= COFACTOR_LIMIT => {
            let rows: Vec<usize> = (0..n).collect();
            laplace(m, &rows, 0)
        }
        _ => lu_det(m),
    })
}

fn minor(m: &Mat, skip_r: usize, skip_c: usize) -> Mat {
    let n = m.rows;
    let mut out = Mat::zeros(n - 1, n - 1);
    for (ii, i) in (0..n).filter(|&i| i != skip_r).enumerate() {
        for (jj, j) in (0..n).filter(|&j| j != skip_c).enumerate() {
            out[(ii, jj)] = m[(i, j)];
        }
    }
    out
}

/// Adjugate (transposed cofactor matrix); valid for singular input.
pub fn adjugate(m: &Mat) -> Result<Mat, MatError> {
    require_square("adjugate", m)?;
    let n = m.rows;
    let mut adj = Mat::zeros(n, n);
    if n == 0 {
        return Ok(adj);
    }
    if n == 1 {
        adj[(0, 0)] = 1.0;
        return Ok(adj);
    }
    if m.is_diagonal() {
        for i in 0..n {
            adj[(i, i)] = (0..n).filter(|&j| j != i).map(|j| m[(j, j)]).product();
        }
        return Ok(adj);
    }
    if n <= COFACTOR_LIMIT {
        let cof = cofactors_small(m);
        for i in 0..n {
            for j in 0..n {
                adj[(j, i)] = cof[i * n + j];
            }
        }
        return Ok(adj);
    }
    for i in 0..n {
        for j in 0..n {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            // adj = transpose of the cofactor matrix
            adj[(j, i)] = sign * lu_det(&minor(m, i, j));
        }
    }
    Ok(adj)
}

fn parity(bits: u32) -> f64 {
    if bits.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Signed cofactors `∂det/∂a_ij` (row-major) of a square matrix with
/// `n ≤ COFACTOR_LIMIT`. Prefix tables `fwd[S]` sum the signed products of
/// rows `0..|S|` placed on the column set `S`; suffix tables `bwd[T]` do the
/// same for the trailing rows. Each cofactor joins the two across row `i`.
fn cofactors_small(m: &Mat) -> Vec<f64> {
    const W: usize = 1 << COFACTOR_LIMIT;
    let n = m.rows;
    let full: u32 = (1u32 << n) - 1;
    let a = |r: usize, c: usize| m.data[r * n + c];

    // fwd[S]: rows 0..|S| on columns S, inversions counted within.
    let mut fwd = [0.0_f64; W];
    fwd[0] = 1.0;
    for mask in 0..full {
        let base = fwd[mask as usize];
        if base == 0.0 {
            continue;
        }
        let r = mask.count_ones() as usize;
        for c in 0..n {
            let bit = 1u32 << c;
            if mask & bit == 0 {
                // earlier rows on larger columns form inversions
                fwd[(mask | bit) as usize] += parity(mask >> (c + 1)) * a(r, c) * base;
            }
        }
    }
    // bwd[T]: rows n-|T|..n on columns T.
    let mut bwd = [0.0_f64; W];
    bwd[0] = 1.0;
    for t in 1..=full {
        let r = n - t.count_ones() as usize;
        let mut acc = 0.0;
        for c in 0..n {
            let bit = 1u32 << c;
            if t & bit != 0 {
                let rest = t & !bit;
                let v = bwd[rest as usize];
                if v != 0.0 {
                    // later rows on smaller columns form inversions
                    acc += parity(rest & (bit - 1)) * a(r, c) * v;
                }
            }
        }
        bwd[t as usize] = acc;
    }

    let mut out = vec![0.0; n * n];
    for s in 0..=full {
        let f = fwd[s as usize];
        if f == 0.0 {
            continue;
        }
        let i = s.count_ones() as usize;
        if i >= n {
            continue;
        }
        for j in 0..n {
            let bit = 1u32 << j;
            if s & bit != 0 {
                continue;
            }
            let t = full & !s & !bit;
            let b = bwd[t as usize];
            if b == 0.0 {
                continue;
            }
            // inversions of row i against the prefix, and of the prefix
            // plus row i against the suffix
            let mut cross = parity(s >> (j + 1)) * parity(t & (bit - 1));
            for c in 0..n {
                if s & (1 << c) != 0 {
                    cross *= parity(t & ((1u32 << c) - 1));
                }
            }
            out[i * n + j] += cross * f * b;
        }
    }
    out
}

/// `adj(m)/det(m)`, or `None` when the determinant is exactly zero.
pub fn inverse(m: &Mat) -> Result<Option<Mat>, MatError> {
    let d = determinant(m)?;
    if d == 0.0 {
        return Ok(None);
    }
    Ok(Some(adjugate(m)?.scale(1.0 / d)))
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.rows * b.rows, a.cols * b.cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out[(i * b.rows + k, j * b.cols + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two column vectors.
pub fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

/// Column-major stacking.
pub fn vec(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.rows * m.cols);
    for j in 0..m.cols {
        for i in 0..m.rows {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// `[−k | (I_{n−1}; 0)]`.
pub fn companion_left(k: &[f64]) -> Result<Mat, MatError> {
    if k.is_empty() {
        return Err(dim_err("companion_left", "length >= 1", "0"));
    }
    let n = k.len();
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        a[(i, 0)] = -k[i];
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
        }
    }
    Ok(a)
}

/// Shift matrix with `g` as its bottom row.
pub fn companion_bottom(g: &[f64]) -> Result<Mat, MatError> {
    if g.is_empty() {
        return Err(dim_err("companion_bottom", "length >= 1", "0"));
    }
    let n = g.len();
    let mut a = Mat::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i + 1)] = 1.0;
    }
    for (j, &x) in g.iter().enumerate() {
        a[(n - 1, j)] += x;
    }
    Ok(a)
}

/// Stacks `cᵀ·aᵏ` for `k = 0..n−1`.
pub fn observability(c_t: &[f64], a: &Mat, n: usize) -> Result<Mat, MatError> {
    if !a.is_square() || a.rows != c_t.len() {
        return Err(dim_err(
            "observability",
            format!("{0}x{0} matrix for a length-{0} row", c_t.len()),
            format!("{}x{}", a.rows, a.cols),
        ));
    }
    let m = c_t.len();
    let mut out = Mat::zeros(n, m);
    let mut row = c_t.to_vec();
    for k in 0..n {
        out.data[k * m..(k + 1) * m].copy_from_slice(&row);
        row = a.vec_mul(&row);
    }
    Ok(out)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Result<Vec<f64>, MatError> {
    require_square("sym_eigenvalues", m)?;
    let n = m.rows;
    let mut a = m.clone();
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let scale = a.frobenius();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Complex eigenvalues `(re, im)` of a general square matrix.
pub fn eigenvalues(m: &Mat) -> Result<Vec<(f64, f64)>, MatError> {
    require_square("eigenvalues", m)?;
    let n = m.rows;
    let dm = nalgebra::DMatrix::from_row_slice(n, n, &m.data);
    Ok(dm
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect())
}

/// True when every eigenvalue has a strictly negative real part.
pub fn is_hurwitz(m: &Mat) -> Result<bool, MatError> {
    Ok(eigenvalues(m)?.iter().all(|&(re, _)| re < 0.0))
}

/// Rank by counting singular values above a relative threshold.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    let dm = nalgebra::DMatrix::from_row_slice(m.rows, m.cols, &m.data);
    let sv = dm.singular_values();
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    sv.iter().filter(|&&s| s > rel_tol * smax.max(f64::MIN_POSITIVE)).count()
}
