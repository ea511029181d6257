//! Banded symmetric matrices and sparse Jacobian rows.
//!
//! Trajectory problems written over K-order finite differences couple each
//! step only with its K predecessors, so every Hessian we build is banded.
//! Condensed problems are dense; they use the same type with a full band.

use std::fmt;

/// Symmetric matrix stored as its lower band, row-major.
///
/// Row `i` keeps the entries `(i, i - bw) ..= (i, i)`; positions left of
/// column 0 are padding and always zero. Keeping rows contiguous turns the
/// inner Cholesky update into a plain dot product.
#[derive(Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= j && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.offset(i, j)]
        }
    }

    /// Adds `v` to the symmetric pair `(i, j)` / `(j, i)`.
    ///
    /// Panics if the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(
            i - j <= self.bw,
            "entry ({i}, {j}) outside bandwidth {}",
            self.bw
        );
        let k = self.offset(i, j);
        self.data[k] += v;
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        let k = self.offset(i, i);
        self.data[k] += v;
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    /// `self += scale * other`, where `other` may have a narrower band.
    pub fn add_scaled(&mut self, other: &BandedSym, scale: f64) {
        assert_eq!(self.n, other.n);
        assert!(other.bw <= self.bw);
        for i in 0..self.n {
            let lo = i.saturating_sub(other.bw);
            for j in lo..=i {
                let k = self.offset(i, j);
                self.data[k] += scale * other.data[other.offset(i, j)];
            }
        }
    }

    /// Rank-one update `self += scale * r r^T` for a sparse row `r`.
    pub fn add_outer(&mut self, row: SparseRowRef<'_>, scale: f64) {
        for (a, (&ia, &va)) in row.indices.iter().zip(row.values).enumerate() {
            let sa = scale * va;
            for (&ib, &vb) in row.indices[..=a].iter().zip(row.values) {
                let (i, j) = if ia >= ib { (ia, ib) } else { (ib, ia) };
                assert!(i - j <= self.bw, "row spans wider than bandwidth");
                let k = self.offset(i, j);
                self.data[k] += sa * vb;
            }
        }
    }

    /// `out = self * x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[self.offset(i, lo)..=self.offset(i, i)];
            let mut acc = 0.0;
            for (j, &a) in (lo..=i).zip(row) {
                acc += a * x[j];
                if j != i {
                    out[j] += a * x[i];
                }
            }
            out[i] += acc;
        }
    }

    /// `x^T self x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut tmp = vec![0.0; self.n];
        self.mul_vec(x, &mut tmp);
        dot(x, &tmp)
    }

    /// Banded Cholesky factorization `A = L L^T`.
    ///
    /// Returns `None` if a non-positive pivot shows up.
    pub fn cholesky(&self) -> Option<BandedCholesky> {
        let n = self.n;
        let w = self.bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                // Both rows cover columns lo..j inside their bands.
                let ri = i * w + (lo + self.bw - i);
                let rj = j * w + (lo + self.bw - j);
                let len = j - lo;
                let s = l[i * w + (j + self.bw - i)] - dot(&l[ri..ri + len], &l[rj..rj + len]);
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * w + self.bw] = s.sqrt();
                } else {
                    l[i * w + (j + self.bw - i)] = s / l[j * w + self.bw];
                }
            }
        }
        Some(BandedCholesky {
            n,
            bw: self.bw,
            data: l,
        })
    }
}

impl fmt::Debug for BandedSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BandedSym(n={}, bw={})", self.n, self.bw)?;
        for i in 0..self.n.min(12) {
            let row: Vec<String> = (0..self.n.min(12))
                .map(|j| format!("{:9.3e}", self.get(i, j)))
                .collect();
            writeln!(f, "  [{}]", row.join(" "))?;
        }
        Ok(())
    }
}

/// Lower-triangular banded factor produced by [`BandedSym::cholesky`].
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let r = i * w + (lo + self.bw - i);
            let s = dot(&self.data[r..r + (i - lo)], &b[lo..i]);
            b[i] = (b[i] - s) / self.data[i * w + self.bw];
        }
        for i in (0..self.n).rev() {
            b[i] /= self.data[i * w + self.bw];
            let xi = b[i];
            let lo = i.saturating_sub(self.bw);
            let r = i * w + (lo + self.bw - i);
            for (bk, &lik) in b[lo..i].iter_mut().zip(&self.data[r..r + (i - lo)]) {
                *bk -= lik * xi;
            }
        }
    }
}

/// Borrowed view of one sparse row.
#[derive(Clone, Copy, Debug)]
pub struct SparseRowRef<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl SparseRowRef<'_> {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&i, &v)| v * x[i])
            .sum()
    }

    /// `out += scale * row`.
    pub fn axpy(&self, scale: f64, out: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(self.values) {
            out[i] += scale * v;
        }
    }

    /// Largest index distance between two nonzeros.
    pub fn span(&self) -> usize {
        match (self.indices.iter().min(), self.indices.iter().max()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0,
        }
    }
}

/// A list of sparse rows in compressed (CSR-like) layout.
///
/// Used for constraint Jacobians: one row per constraint, in constraint order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRows {
    row_ptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn new() -> Self {
        Self {
            row_ptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.row_ptr.clear();
        self.row_ptr.push(0);
        self.indices.clear();
        self.values.clear();
    }

    pub fn len(&self) -> usize {
        self.row_ptr.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a row given as `(index, value)` pairs.
    pub fn push_row<I: IntoIterator<Item = (usize, f64)>>(&mut self, entries: I) {
        if self.row_ptr.is_empty() {
            self.row_ptr.push(0);
        }
        for (i, v) in entries {
            self.indices.push(i);
            self.values.push(v);
        }
        self.row_ptr.push(self.indices.len());
    }

    /// Appends a row whose nonzeros are contiguous starting at `start`.
    pub fn push_dense_segment(&mut self, start: usize, coeffs: &[f64]) {
        self.push_row(coeffs.iter().enumerate().map(|(k, &v)| (start + k, v)));
    }

    pub fn row(&self, r: usize) -> SparseRowRef<'_> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        SparseRowRef {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = SparseRowRef<'_>> {
        (0..self.len()).map(move |r| self.row(r))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

/// `max_i |a_i - b_i|`.
pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (&x, &y)| m.max((x - y).abs()))
}
