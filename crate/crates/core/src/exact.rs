//! Exact integer and rational linear algebra: Hermite normal form, integer
//! kernels, lattice saturation, and bounded-denominator rational recovery.
//!
//! Everything here is exact; no floating point.

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Reduced fraction with 64-bit parts, serialized as `{"num": .., "den": ..}`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frac(pub Ratio<i64>);

impl Frac {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Frac(Ratio::new(num, den))
    }

    pub fn zero() -> Self {
        Frac(Ratio::new(0, 1))
    }

    pub fn from_int(n: i64) -> Self {
        Frac(Ratio::new(n, 1))
    }

    pub fn num(&self) -> i64 {
        *self.0.numer()
    }

    pub fn den(&self) -> i64 {
        *self.0.denom()
    }

    /// Representative in `[0, 1)`.
    pub fn mod1(&self) -> Self {
        let d = *self.0.denom();
        let n = self.0.numer().rem_euclid(d);
        Frac(Ratio::new(n, d))
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl std::ops::Add for Frac {
    type Output = Frac;
    fn add(self, rhs: Frac) -> Frac {
        Frac(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Frac {
    type Output = Frac;
    fn sub(self, rhs: Frac) -> Frac {
        Frac(self.0 - rhs.0)
    }
}

impl std::ops::Mul for Frac {
    type Output = Frac;
    fn mul(self, rhs: Frac) -> Frac {
        Frac(self.0 * rhs.0)
    }
}

impl std::ops::Neg for Frac {
    type Output = Frac;
    fn neg(self) -> Frac {
        Frac(-self.0)
    }
}

impl fmt::Debug for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for Frac {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Frac", 2)?;
        st.serialize_field("num", &self.num())?;
        st.serialize_field("den", &self.den())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Frac {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            num: i64,
            den: i64,
        }
        let raw = Raw::deserialize(d)?;
        if raw.den == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Frac::new(raw.num, raw.den))
    }
}

/// Best rational approximation `p/q` of `x` with `1 <= q <= max_den`,
/// by the continued-fraction convergent/semiconvergent walk.
/// Returns the fraction and the residual `|x - p/q|`.
pub fn round_to_rational(x: f64, max_den: i64) -> (Frac, f64) {
    assert!(max_den >= 1);
    // Convergents p_k/q_k of the continued fraction of x.
    let (mut p0, mut q0, mut p1, mut q1): (i64, i64, i64, i64) = (1, 0, x.floor() as i64, 1);
    let mut frac = x - x.floor();
    loop {
        if frac.abs() < 1e-15 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor() as i64;
        frac = inv - inv.floor();
        let (p2, q2) = (
            a.saturating_mul(p1).saturating_add(p0),
            a.saturating_mul(q1).saturating_add(q0),
        );
        if q2 > max_den || q2 <= 0 {
            // Best semiconvergent with denominator within the bound.
            let k = (max_den - q0) / q1;
            let (ps, qs) = (k * p1 + p0, k * q1 + q0);
            let cand = Frac::new(ps, qs);
            let best = Frac::new(p1, q1);
            let (c_err, b_err) = ((x - cand.to_f64()).abs(), (x - best.to_f64()).abs());
            return if qs >= 1 && c_err < b_err {
                (cand, c_err)
            } else {
                (best, b_err)
            };
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        if q1 >= max_den {
            break;
        }
    }
    let best = Frac::new(p1, q1);
    (best, (x - best.to_f64()).abs())
}

/// Dense integer matrix with 128-bit entries (desk-scale exact lattice work).
#[derive(Clone, PartialEq, Eq)]
pub struct IntMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i128>,
}

impl IntMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMat { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut m = IntMat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v as i128;
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IntMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1;
        }
        m
    }

    pub fn row(&self, i: usize) -> &[i128] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows_i64(&self) -> Vec<Vec<i64>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|&v| i64::try_from(v).expect("entry overflow")).collect())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = IntMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// row[a] += k * row[b]
    fn add_row(&mut self, a: usize, b: usize, k: i128) {
        for j in 0..self.cols {
            let v = self[(b, j)];
            self[(a, j)] += k * v;
        }
    }

    fn scale_row(&mut self, a: usize, k: i128) {
        for j in 0..self.cols {
            self[(a, j)] *= k;
        }
    }
}

impl std::ops::Index<(usize, usize)> for IntMat {
    type Output = i128;
    fn index(&self, (i, j): (usize, usize)) -> &i128 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut i128 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for IntMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            writeln!(f, "{:?}", self.row(i))?;
        }
        Ok(())
    }
}

/// Row-style Hermite normal form: unimodular row operations only.
/// Pivots positive, entries above each pivot reduced into `[0, pivot)`,
/// zero rows dropped. Idempotent on its own output.
pub fn hnf(mut m: IntMat) -> IntMat {
    let (rows, cols) = (m.rows, m.cols);
    let mut pivot_row = 0;
    for col in 0..cols {
        if pivot_row >= rows {
            break;
        }
        // Euclidean elimination in this column below pivot_row.
        loop {
            let mut best: Option<usize> = None;
            for i in pivot_row..rows {
                if m[(i, col)] != 0 {
                    best = match best {
                        None => Some(i),
                        Some(b) if m[(i, col)].abs() < m[(b, col)].abs() => Some(i),
                        other => other,
                    };
                }
            }
            let Some(b) = best else { break };
            m.swap_rows(pivot_row, b);
            let p = m[(pivot_row, col)];
            let mut done = true;
            for i in pivot_row + 1..rows {
                let v = m[(i, col)];
                if v != 0 {
                    let q = v.div_euclid(p);
                    m.add_row(i, pivot_row, -q);
                    if m[(i, col)] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if m[(pivot_row, col)] != 0 {
            if m[(pivot_row, col)] < 0 {
                m.scale_row(pivot_row, -1);
            }
            let p = m[(pivot_row, col)];
            for i in 0..pivot_row {
                let q = m[(i, col)].div_euclid(p);
                if q != 0 {
                    m.add_row(i, pivot_row, -q);
                }
            }
            pivot_row += 1;
        }
    }
    // Drop zero rows.
    let kept: Vec<Vec<i128>> = (0..pivot_row).map(|i| m.row(i).to_vec()).collect();
    let mut out = IntMat::zeros(kept.len(), cols);
    for (i, r) in kept.iter().enumerate() {
        out.data[i * cols..(i + 1) * cols].copy_from_slice(r);
    }
    out
}

/// Basis of the right integer kernel `{x in Z^n : Mx = 0}` as matrix columns.
pub fn right_kernel(m: &IntMat) -> IntMat {
    // Column-style echelon via row-HNF of the transpose, tracking the
    // transform: rows of U with zero image span the kernel.
    let t = m.transpose(); // n x r
    let n = t.rows;
    let mut work = IntMat::zeros(n, t.cols + n);
    for i in 0..n {
        for j in 0..t.cols {
            work[(i, j)] = t[(i, j)];
        }
        work[(i, t.cols + i)] = 1;
    }
    let h = hnf_keep_zero_rows(work, t.cols);
    let mut kernel_cols: Vec<Vec<i128>> = Vec::new();
    for i in 0..n {
        let image_zero = (0..t.cols).all(|j| h[(i, j)] == 0);
        if image_zero {
            kernel_cols.push((0..n).map(|j| h[(i, t.cols + j)]).collect());
        }
    }
    let mut out = IntMat::zeros(n, kernel_cols.len());
    for (k, col) in kernel_cols.iter().enumerate() {
        for i in 0..n {
            out[(i, k)] = col[i];
        }
    }
    out
}

/// Row-HNF on the first `lead_cols` columns only; keeps (and returns) all rows,
/// so the trailing columns record the accumulated unimodular transform.
fn hnf_keep_zero_rows(mut m: IntMat, lead_cols: usize) -> IntMat {
    let rows = m.rows;
    let mut pivot_row = 0;
    for col in 0..lead_cols {
        if pivot_row >= rows {
            break;
        }
        loop {
            let mut best: Option<usize> = None;
            for i in pivot_row..rows {
                if m[(i, col)] != 0 {
                    best = match best {
                        None => Some(i),
                        Some(b) if m[(i, col)].abs() < m[(b, col)].abs() => Some(i),
                        other => other,
                    };
                }
            }
            let Some(b) = best else { break };
            m.swap_rows(pivot_row, b);
            let p = m[(pivot_row, col)];
            let mut done = true;
            for i in pivot_row + 1..rows {
                let v = m[(i, col)];
                if v != 0 {
                    let q = v.div_euclid(p);
                    m.add_row(i, pivot_row, -q);
                    if m[(i, col)] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if m[(pivot_row, col)] != 0 {
            pivot_row += 1;
        }
    }
    m
}

/// Saturation of the row lattice: basis (as HNF rows) of
/// `span_Q(rows) ∩ Z^n`. Equals the double integer-orthogonal complement.
pub fn row_saturation_hnf(m: &IntMat) -> IntMat {
    let k = right_kernel(m); // n x d, columns orthogonal to the rowspace
    if k.cols == 0 {
        // Full rank rowspace: saturation is Z^n.
        return IntMat::identity(m.cols);
    }
    let sat_cols = right_kernel(&k.transpose()); // n x rank
    hnf(sat_cols.transpose())
}

/// gcd of a slice, nonnegative.
pub fn gcd_slice(v: &[i128]) -> i128 {
    v.iter().fold(0i128, |acc, &x| acc.gcd(&x)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hnf_gcd_row() {
        // Saturation of a single row divides out the content.
        let m = IntMat::from_rows(&[vec![2, 4]]);
        let s = row_saturation_hnf(&m);
        assert_eq!(s.to_rows_i64(), vec![vec![1, 2]]);
    }

    #[test]
    fn hnf_identity_rows() {
        let m = IntMat::from_rows(&[vec![1, 0], vec![0, 1]]);
        assert_eq!(hnf(m.clone()).to_rows_i64(), m.to_rows_i64());
        assert_eq!(row_saturation_hnf(&m).to_rows_i64(), m.to_rows_i64());
    }

    #[test]
    fn saturation_nontrivial_index() {
        // Rowspace of [(2,1,1),(0,3,3)] has (1,0,0) in its rational span.
        let m = IntMat::from_rows(&[vec![2, 1, 1], vec![0, 3, 3]]);
        let s = row_saturation_hnf(&m);
        assert_eq!(s.to_rows_i64(), vec![vec![1, 0, 0], vec![0, 1, 1]]);
    }

    #[test]
    fn kernel_simple() {
        let m = IntMat::from_rows(&[vec![1, 1, 1]]);
        let k = right_kernel(&m);
        assert_eq!(k.cols, 2);
        for c in 0..k.cols {
            let s: i128 = (0..3).map(|i| k[(i, c)]).sum();
            assert_eq!(s, 0);
        }
    }

    #[test]
    fn rational_rounding() {
        let (f, err) = round_to_rational(0.4, 5);
        assert_eq!(f, Frac::new(2, 5));
        assert!(err < 1e-12);
        let (f, _) = round_to_rational(0.333333333333, 10);
        assert_eq!(f, Frac::new(1, 3));
        let (f, err) = round_to_rational(1.0, 1);
        assert_eq!(f, Frac::from_int(1));
        assert!(err < 1e-12);
        // Semiconvergent case: best q<=3 approximation of 0.45 is 1/2 or ~...
        let (f, _) = round_to_rational(0.45, 20);
        assert_eq!(f, Frac::new(9, 20));
    }

    #[test]
    fn frac_mod1() {
        assert_eq!(Frac::new(-1, 3).mod1(), Frac::new(2, 3));
        assert_eq!(Frac::new(7, 3).mod1(), Frac::new(1, 3));
        assert_eq!(Frac::new(3, 1).mod1(), Frac::zero());
    }
}
