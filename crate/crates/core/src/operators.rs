//! Matrix-free structured linear algebra: CSR sparse matvec, Kronecker-product
//! matvec by reshaping, and Toeplitz matvec through circulant embedding.

use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::transforms::{Direction, FourierPlan};

/// Row-compressed sparse matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from (row, col, value) triplets; duplicate entries are summed,
    /// exact zeros are kept out of the structure.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r},{c}) outside {nrows}x{ncols}"
                )));
            }
            sorted.push((r, c, v));
        }
        sorted.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                last = Some((r, c));
            }
            row_ptr[r + 1] = col_idx.len();
        }
        // rows with no entries inherit the previous offset
        for r in 1..=nrows {
            if row_ptr[r] < row_ptr[r - 1] {
                row_ptr[r] = row_ptr[r - 1];
            }
        }
        // drop numerically exact zeros produced by cancellation
        let mut out = Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
        };
        out.prune_zeros();
        Ok(out)
    }

    fn prune_zeros(&mut self) {
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.col_idx.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.vals[k] != 0.0 {
                    col_idx.push(self.col_idx[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.vals = vals;
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.vals[span])
    }

    /// `out = A v`.
    pub fn spmv(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.ncols, v.len())?;
        check_len(self.nrows, out.len())?;
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * v[self.col_idx[k]];
            }
            *o = acc;
        }
        Ok(())
    }

    /// `out += alpha * A v`.
    pub fn spmv_add(&self, alpha: f64, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.ncols, v.len())?;
        check_len(self.nrows, out.len())?;
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * v[self.col_idx[k]];
            }
            *o += alpha * acc;
        }
        Ok(())
    }

    /// `out = A v` with complex `v` (the matrix stays real).
    pub fn spmv_complex(&self, v: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        check_len(self.ncols, v.len())?;
        check_len(self.nrows, out.len())?;
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += v[self.col_idx[k]] * self.vals[k];
            }
            *o = acc;
        }
        Ok(())
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows.min(self.ncols)];
        for (r, dr) in d.iter_mut().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    *dr += self.vals[k];
                }
            }
        }
        d
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push((self.col_idx[k], r, self.vals[k]));
            }
        }
        SparseMatrix::from_triplets(self.ncols, self.nrows, &triplets)
            .expect("transpose of a valid matrix is valid")
    }

    /// Sparse product `A·B` with a dense accumulator row.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        check_len(self.ncols, other.nrows)?;
        let mut acc = vec![0.0f64; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut triplets = Vec::new();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let mid = self.col_idx[k];
                let w = self.vals[k];
                for kk in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    let c = other.col_idx[kk];
                    if acc[c] == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += w * other.vals[kk];
                }
            }
            for &c in &touched {
                if acc[c] != 0.0 {
                    triplets.push((r, c, acc[c]));
                }
                acc[c] = 0.0;
            }
            touched.clear();
        }
        SparseMatrix::from_triplets(self.nrows, other.ncols, &triplets)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[(r, self.col_idx[k])] += self.vals[k];
            }
        }
        d
    }
}

/// `(B ⊗ C) v` for square `B` (n×n) and `C` (j×j) given only their in-place
/// actions: reshape `v` column-major to j×n (columns are time blocks), apply
/// `C` down each column, then `B` across each row.
pub fn kron_matvec<T, FB, FC>(n: usize, j: usize, b_apply: FB, c_apply: FC, v: &[T]) -> Result<Vec<T>>
where
    T: Copy + Default,
    FB: Fn(&mut [T]),
    FC: Fn(&mut [T]),
{
    check_len(n * j, v.len())?;
    let mut out = v.to_vec();
    for col in out.chunks_mut(j) {
        c_apply(col);
    }
    let mut row = vec![T::default(); n];
    for i in 0..j {
        for k in 0..n {
            row[k] = out[k * j + i];
        }
        b_apply(&mut row);
        for k in 0..n {
            out[k * j + i] = row[k];
        }
    }
    Ok(out)
}

/// First column and first row of an N×N Toeplitz matrix.
#[derive(Debug, Clone)]
pub struct ToeplitzSpec {
    first_col: Vec<f64>,
    first_row: Vec<f64>,
}

impl ToeplitzSpec {
    pub fn new(first_col: Vec<f64>, first_row: Vec<f64>) -> Result<Self> {
        if first_col.is_empty() || first_col.len() != first_row.len() {
            return Err(Error::InvalidArgument(
                "Toeplitz spec needs equal nonempty first column and row".into(),
            ));
        }
        if (first_col[0] - first_row[0]).abs() > 0.0 {
            return Err(Error::InvalidArgument(
                "Toeplitz first column and first row must share the corner entry".into(),
            ));
        }
        Ok(Self { first_col, first_row })
    }

    pub fn n(&self) -> usize {
        self.first_col.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.first_col[i - j]
        } else {
            self.first_row[j - i]
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }
}

/// Toeplitz matvec in O(N log N): embed into a 2N circulant, diagonalize the
/// circulant with the FFT, multiply, and read back the first N coordinates.
pub fn toeplitz_matvec(spec: &ToeplitzSpec, v: &[f64]) -> Result<Vec<f64>> {
    let n = spec.n();
    check_len(n, v.len())?;
    let m = 2 * n;
    let forward = FourierPlan::new(m, Direction::Forward)?;
    let inverse = FourierPlan::new(m, Direction::Inverse)?;
    let mut scratch = forward.make_scratch();

    // First column of the embedding circulant.
    let mut ev: Vec<Complex64> = vec![Complex64::ZERO; m];
    for (k, &t) in spec.first_col.iter().enumerate() {
        ev[k] = Complex64::new(t, 0.0);
    }
    for s in 1..n {
        ev[n + s] = Complex64::new(spec.first_row[n - s], 0.0);
    }
    forward.apply(&mut ev, &mut scratch)?;
    let sqrt_m = (m as f64).sqrt();

    let mut w: Vec<Complex64> = vec![Complex64::ZERO; m];
    for (k, &x) in v.iter().enumerate() {
        w[k] = Complex64::new(x, 0.0);
    }
    forward.apply(&mut w, &mut scratch)?;
    for (wk, ek) in w.iter_mut().zip(&ev) {
        *wk *= ek * sqrt_m;
    }
    inverse.apply(&mut w, &mut scratch)?;
    Ok(w[..n].iter().map(|z| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn dense_apply(m: &nalgebra::DMatrix<f64>) -> impl Fn(&mut [f64]) + '_ {
        move |v: &mut [f64]| {
            let x = nalgebra::DVector::from_column_slice(v);
            let y = m * x;
            v.copy_from_slice(y.as_slice());
        }
    }

    #[test]
    fn identity_spmv_is_identity() {
        let a = SparseMatrix::identity(5);
        let v = [1.0, -2.0, 3.0, 0.5, 0.0];
        let mut out = [0.0; 5];
        a.spmv(&v, &mut out).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn second_difference_telescopes_on_ones() {
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let v = vec![1.0; n];
        let mut out = vec![0.0; n];
        a.spmv(&v, &mut out).unwrap();
        let mut expected = vec![0.0; n];
        expected[0] = 1.0;
        expected[n - 1] = 1.0;
        assert_eq!(out, expected);
    }

    #[test]
    fn random_spmv_matches_dense() {
        let mut r = rng(7);
        let n = 10;
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if r.random_range(0.0..1.0) < 0.3 {
                    triplets.push((i, j, r.random_range(-1.0..1.0)));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let d = a.to_dense();
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut fast = vec![0.0; n];
        a.spmv(&v, &mut fast).unwrap();
        let slow = &d * nalgebra::DVector::from_column_slice(&v);
        for (f, s) in fast.iter().zip(slow.iter()) {
            assert!((f - s).abs() < 1e-14);
        }
    }

    #[test]
    fn matmul_matches_dense_product() {
        let mut r = rng(8);
        let n = 12;
        let mk = |r: &mut rand_chacha::ChaCha8Rng| {
            let mut t = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if r.random_range(0.0..1.0) < 0.25 {
                        t.push((i, j, r.random_range(-1.0..1.0)));
                    }
                }
            }
            SparseMatrix::from_triplets(n, n, &t).unwrap()
        };
        let a = mk(&mut r);
        let b = mk(&mut r);
        let fast = a.matmul(&b).unwrap().to_dense();
        let slow = a.to_dense() * b.to_dense();
        assert!((fast - slow).norm() < 1e-12);
    }

    #[test]
    fn kron_with_identities_is_identity() {
        let v: Vec<f64> = (0..12).map(|x| x as f64).collect();
        let out = kron_matvec(3, 4, |_b: &mut [f64]| {}, |_c: &mut [f64]| {}, &v).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn kron_matches_explicit_kronecker_product() {
        let mut r = rng(9);
        let b = nalgebra::DMatrix::from_fn(2, 2, |_, _| r.random_range(-1.0..1.0));
        let c = nalgebra::DMatrix::from_fn(2, 2, |_, _| r.random_range(-1.0..1.0));
        let v: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let fast = kron_matvec(2, 2, dense_apply(&b), dense_apply(&c), &v).unwrap();
        let slow = b.kronecker(&c) * nalgebra::DVector::from_column_slice(&v);
        for (f, s) in fast.iter().zip(slow.iter()) {
            assert!((f - s).abs() < 1e-13);
        }
    }

    #[test]
    fn kron_composes_with_inverse_actions() {
        let mut r = rng(10);
        let n = 3;
        let j = 4;
        let b = nalgebra::DMatrix::from_fn(n, n, |i, k| {
            r.random_range(-1.0..1.0) + if i == k { 3.0 } else { 0.0 }
        });
        let c = nalgebra::DMatrix::from_fn(j, j, |i, k| {
            r.random_range(-1.0..1.0) + if i == k { 3.0 } else { 0.0 }
        });
        let bi = b.clone().try_inverse().unwrap();
        let ci = c.clone().try_inverse().unwrap();
        let v: Vec<f64> = (0..n * j).map(|_| r.random_range(-1.0..1.0)).collect();
        let mid = kron_matvec(n, j, dense_apply(&b), dense_apply(&c), &v).unwrap();
        let back = kron_matvec(n, j, dense_apply(&bi), dense_apply(&ci), &mid).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_scaled_kron_matches_direct_summation() {
        // Block k of [(F_N D_ε) ⊗ I_J] v must equal
        // (1/sqrt(N)) Σ_j ε^{j/N} θ_N^{kj} v^{j+1}.
        use crate::transforms::{Direction, FourierPlan};
        let mut r = rng(11);
        let n = 4;
        let j = 3;
        let eps: f64 = 0.3;
        let v: Vec<Complex64> = (0..n * j)
            .map(|_| Complex64::new(r.random_range(-1.0..1.0), 0.0))
            .collect();
        let plan = FourierPlan::new(n, Direction::Inverse).unwrap();
        let b_apply = |row: &mut [Complex64]| {
            for (k, z) in row.iter_mut().enumerate() {
                *z *= eps.powf(k as f64 / n as f64);
            }
            let out = plan.apply_alloc(row).unwrap();
            row.copy_from_slice(&out);
        };
        let fast = kron_matvec(n, j, b_apply, |_c: &mut [Complex64]| {}, &v).unwrap();

        for k in 0..n {
            for i in 0..j {
                let mut acc = Complex64::ZERO;
                for jj in 0..n {
                    let angle = 2.0 * std::f64::consts::PI * (k * jj) as f64 / n as f64;
                    acc += v[jj * j + i]
                        * eps.powf(jj as f64 / n as f64)
                        * Complex64::from_polar(1.0, angle);
                }
                acc /= (n as f64).sqrt();
                assert!((fast[k * j + i] - acc).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn identity_toeplitz_matvec_is_identity() {
        let n = 5;
        let mut col = vec![0.0; n];
        col[0] = 1.0;
        let spec = ToeplitzSpec::new(col.clone(), col).unwrap();
        let v: Vec<f64> = (0..n).map(|x| x as f64 - 2.0).collect();
        let out = toeplitz_matvec(&spec, &v).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn backward_difference_toeplitz_on_ones() {
        let n = 4;
        let mut col = vec![0.0; n];
        col[0] = 1.0;
        col[1] = -1.0;
        let mut row = vec![0.0; n];
        row[0] = 1.0;
        let spec = ToeplitzSpec::new(col, row).unwrap();
        let out = toeplitz_matvec(&spec, &[1.0; 4]).unwrap();
        let expected = [1.0, 0.0, 0.0, 0.0];
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    proptest::proptest! {
        #[test]
        fn toeplitz_embedding_matches_dense(n in 1usize..=64, seed in 0u64..50) {
            let mut r = rng(seed);
            let col: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let mut row: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            row[0] = col[0];
            let spec = ToeplitzSpec::new(col, row).unwrap();
            let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            let fast = toeplitz_matvec(&spec, &v).unwrap();
            let slow = spec.to_dense() * nalgebra::DVector::from_column_slice(&v);
            let scale = slow.norm().max(1.0);
            for (a, b) in fast.iter().zip(slow.iter()) {
                proptest::prop_assert!((a - b).abs() < 1e-12 * scale);
            }
        }
    }
}
