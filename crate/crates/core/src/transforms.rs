//! Unitary FFT and DST-I kernels.
//!
//! Every fast operator in this crate (circulant embedding, the Fourier-space
//! block diagonalization, the sine-transform inner solver) is built on the two
//! plans defined here. Both use the unitary normalization `1/sqrt(m)` so that
//! forward∘inverse is the identity and norms are preserved; keeping the scaling
//! inside the plan avoids chasing stray `sqrt(m)` factors through call sites.
//!
//! Plans are immutable once created and cheap to share. `apply` writes in
//! place and takes caller-owned scratch, so concurrent applies on distinct
//! buffers are fine.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{check_len, Error, Result};

/// Which side of the unitary DFT pair a plan applies.
///
/// `Forward` is the conventional DFT (negative exponent) scaled by
/// `1/sqrt(m)`; `Inverse` is its adjoint (positive exponent), i.e. the matrix
/// with entries `θ_m^{jk}/sqrt(m)`, `θ_m = exp(2πi/m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Planned unitary FFT of a fixed length and direction.
pub struct FourierPlan {
    len: usize,
    direction: Direction,
    kernel: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl FourierPlan {
    pub fn new(len: usize, direction: Direction) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("transform length must be positive".into()));
        }
        let fft_dir = match direction {
            Direction::Forward => FftDirection::Forward,
            Direction::Inverse => FftDirection::Inverse,
        };
        let kernel = FftPlanner::new().plan_fft(len, fft_dir);
        Ok(Self {
            len,
            direction,
            kernel,
            scale: 1.0 / (len as f64).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn make_scratch(&self) -> Vec<Complex64> {
        vec![Complex64::ZERO; self.kernel.get_inplace_scratch_len()]
    }

    /// In-place unitary transform of `v`.
    pub fn apply(&self, v: &mut [Complex64], scratch: &mut [Complex64]) -> Result<()> {
        check_len(self.len, v.len())?;
        if scratch.len() < self.kernel.get_inplace_scratch_len() {
            return Err(Error::InvalidArgument("FFT scratch buffer too small".into()));
        }
        self.kernel
            .process_with_scratch(v, &mut scratch[..self.kernel.get_inplace_scratch_len()]);
        for z in v.iter_mut() {
            *z *= self.scale;
        }
        Ok(())
    }

    /// Allocating convenience wrapper around [`FourierPlan::apply`].
    pub fn apply_alloc(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = v.to_vec();
        let mut scratch = self.make_scratch();
        self.apply(&mut out, &mut scratch)?;
        Ok(out)
    }
}

impl std::fmt::Debug for FourierPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierPlan")
            .field("len", &self.len)
            .field("direction", &self.direction)
            .finish()
    }
}

/// Scratch space for [`SinePlan`] applies: the odd extension of length
/// `2(m+1)`, FFT work space, and a gather line for 2D passes.
pub struct SineScratch {
    ext: Vec<Complex64>,
    fft: Vec<Complex64>,
    line: Vec<f64>,
}

/// Planned DST-I of length `m`: the symmetric involutory matrix with entries
/// `sqrt(2/(m+1))·sin(ijπ/(m+1))`.
///
/// Realized as a complex FFT of length `2(m+1)` on the odd extension of the
/// input, so the same kernel family serves both transform types.
pub struct SinePlan {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl SinePlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("transform length must be positive".into()));
        }
        let ext_len = 2 * (len + 1);
        let fft = FftPlanner::new().plan_fft(ext_len, FftDirection::Forward);
        Ok(Self {
            len,
            fft,
            scale: (2.0 / (len as f64 + 1.0)).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn make_scratch(&self) -> SineScratch {
        SineScratch {
            ext: vec![Complex64::ZERO; 2 * (self.len + 1)],
            fft: vec![Complex64::ZERO; self.fft.get_inplace_scratch_len()],
            line: vec![0.0; self.len],
        }
    }

    /// In-place DST-I of `v`.
    pub fn apply(&self, v: &mut [f64], scratch: &mut SineScratch) -> Result<()> {
        check_len(self.len, v.len())?;
        let m = self.len;
        let ext = &mut scratch.ext;
        ext[0] = Complex64::ZERO;
        ext[m + 1] = Complex64::ZERO;
        for (j, &x) in v.iter().enumerate() {
            ext[j + 1] = Complex64::new(x, 0.0);
            ext[2 * (m + 1) - (j + 1)] = Complex64::new(-x, 0.0);
        }
        self.fft.process_with_scratch(ext, &mut scratch.fft);
        // For an odd extension W_k = -2i·Σ_j v_j sin(jkπ/(m+1)).
        for (k, x) in v.iter_mut().enumerate() {
            *x = -0.5 * ext[k + 1].im * self.scale;
        }
        Ok(())
    }

    /// In-place tensor transform `(S ⊗ S)` of an `m×m` field stored
    /// x-fastest: DST-I along every x-line, then along every y-line.
    pub fn apply_2d(&self, v: &mut [f64], scratch: &mut SineScratch) -> Result<()> {
        let m = self.len;
        check_len(m * m, v.len())?;
        for col in v.chunks_mut(m) {
            self.apply_line(col, scratch);
        }
        for i in 0..m {
            for k in 0..m {
                scratch.line[k] = v[k * m + i];
            }
            let mut line = std::mem::take(&mut scratch.line);
            self.apply_line(&mut line, scratch);
            for k in 0..m {
                v[k * m + i] = line[k];
            }
            scratch.line = line;
        }
        Ok(())
    }

    fn apply_line(&self, v: &mut [f64], scratch: &mut SineScratch) {
        let m = self.len;
        let ext = &mut scratch.ext;
        ext[0] = Complex64::ZERO;
        ext[m + 1] = Complex64::ZERO;
        for (j, &x) in v.iter().enumerate() {
            ext[j + 1] = Complex64::new(x, 0.0);
            ext[2 * (m + 1) - (j + 1)] = Complex64::new(-x, 0.0);
        }
        self.fft.process_with_scratch(ext, &mut scratch.fft);
        for (k, x) in v.iter_mut().enumerate() {
            *x = -0.5 * ext[k + 1].im * self.scale;
        }
    }
}

impl std::fmt::Debug for SinePlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SinePlan").field("len", &self.len).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(v: &[Complex64], direction: Direction) -> Vec<Complex64> {
        let m = v.len();
        let sign = match direction {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        };
        let scale = 1.0 / (m as f64).sqrt();
        (0..m)
            .map(|k| {
                let mut acc = Complex64::ZERO;
                for (j, &x) in v.iter().enumerate() {
                    let angle = sign * 2.0 * std::f64::consts::PI * (k * j) as f64 / m as f64;
                    acc += x * Complex64::from_polar(1.0, angle);
                }
                acc * scale
            })
            .collect()
    }

    fn naive_dst(v: &[f64]) -> Vec<f64> {
        let m = v.len();
        let scale = (2.0 / (m as f64 + 1.0)).sqrt();
        (0..m)
            .map(|k| {
                let mut acc = 0.0;
                for (j, &x) in v.iter().enumerate() {
                    let angle =
                        ((j + 1) * (k + 1)) as f64 * std::f64::consts::PI / (m as f64 + 1.0);
                    acc += x * angle.sin();
                }
                acc * scale
            })
            .collect()
    }

    fn rel_err_c(a: &[Complex64], b: &[Complex64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let norm: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (diff / norm.max(1e-300)).sqrt()
    }

    fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        use rand::SeedableRng;
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn forward_of_first_basis_vector_is_constant() {
        let plan = FourierPlan::new(2, Direction::Forward).unwrap();
        let out = plan
            .apply_alloc(&[Complex64::new(1.0, 0.0), Complex64::ZERO])
            .unwrap();
        let c = 1.0 / 2f64.sqrt();
        assert!((out[0] - Complex64::new(c, 0.0)).norm() < 1e-15);
        assert!((out[1] - Complex64::new(c, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn inverse_undoes_forward() {
        use rand::Rng;
        let mut rng = seeded_rng(1);
        let m = 4;
        let fwd = FourierPlan::new(m, Direction::Forward).unwrap();
        let inv = FourierPlan::new(m, Direction::Inverse).unwrap();
        let v: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let round = inv.apply_alloc(&fwd.apply_alloc(&v).unwrap()).unwrap();
        assert!(rel_err_c(&round, &v) < 1e-13);
    }

    #[test]
    fn fft_matches_naive_dft() {
        use rand::Rng;
        let mut rng = seeded_rng(2);
        let m = 8;
        let v: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        for direction in [Direction::Forward, Direction::Inverse] {
            let plan = FourierPlan::new(m, direction).unwrap();
            let fast = plan.apply_alloc(&v).unwrap();
            let slow = naive_dft(&v, direction);
            assert!(rel_err_c(&fast, &slow) < 1e-12);
        }
    }

    #[test]
    fn fft_length_mismatch_is_an_error() {
        let plan = FourierPlan::new(4, Direction::Forward).unwrap();
        assert!(plan.apply_alloc(&[Complex64::ZERO; 3]).is_err());
    }

    #[test]
    fn dst_is_involutory() {
        use rand::Rng;
        let mut rng = seeded_rng(3);
        for m in [1usize, 2, 5, 16, 33] {
            let plan = SinePlan::new(m).unwrap();
            let mut scratch = plan.make_scratch();
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut w = v.clone();
            plan.apply(&mut w, &mut scratch).unwrap();
            plan.apply(&mut w, &mut scratch).unwrap();
            let err: f64 = v
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-13, "m={m} err={err:e}");
        }
    }

    #[test]
    fn dst_matches_naive_sine_matrix() {
        use rand::Rng;
        let mut rng = seeded_rng(4);
        let m = 7;
        let plan = SinePlan::new(m).unwrap();
        let mut scratch = plan.make_scratch();
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut fast = v.clone();
        plan.apply(&mut fast, &mut scratch).unwrap();
        let slow = naive_dst(&v);
        let num: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = slow.iter().map(|b| b * b).sum();
        assert!((num / den).sqrt() < 1e-12);
    }

    #[test]
    fn dst_diagonalizes_second_difference() {
        // sin(jkπ/16) is an eigenvector of tridiag(-1,2,-1) with eigenvalue
        // 2-2cos(kπ/16); its transform is a multiple of the k-th basis vector.
        let m = 15;
        let k = 4;
        let plan = SinePlan::new(m).unwrap();
        let mut scratch = plan.make_scratch();
        let v: Vec<f64> = (1..=m)
            .map(|j| ((j * k) as f64 * std::f64::consts::PI / (m as f64 + 1.0)).sin())
            .collect();

        // Eigenvalue check against the tridiagonal action.
        let lam = 2.0 - 2.0 * ((k as f64) * std::f64::consts::PI / (m as f64 + 1.0)).cos();
        for j in 0..m {
            let left = if j == 0 { 0.0 } else { v[j - 1] };
            let right = if j + 1 == m { 0.0 } else { v[j + 1] };
            let av = 2.0 * v[j] - left - right;
            assert!((av - lam * v[j]).abs() < 1e-12);
        }

        let mut w = v.clone();
        plan.apply(&mut w, &mut scratch).unwrap();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (idx, &x) in w.iter().enumerate() {
            if idx + 1 == k {
                assert!((x.abs() - norm).abs() < 1e-12);
            } else {
                assert!(x.abs() < 1e-12);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn fft_is_unitary(seed in 0u64..200, m in 1usize..64) {
            use rand::Rng;
            let mut rng = seeded_rng(seed);
            let v: Vec<Complex64> = (0..m)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let norm_in: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for direction in [Direction::Forward, Direction::Inverse] {
                let plan = FourierPlan::new(m, direction).unwrap();
                let out = plan.apply_alloc(&v).unwrap();
                let norm_out: f64 = out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                proptest::prop_assert!((norm_out - norm_in).abs() <= 1e-13 * norm_in.max(1.0));
            }
        }

        #[test]
        fn dst_involution_over_lengths(seed in 0u64..200, m in 1usize..=64) {
            use rand::Rng;
            let mut rng = seeded_rng(seed);
            let plan = SinePlan::new(m).unwrap();
            let mut scratch = plan.make_scratch();
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut w = v.clone();
            plan.apply(&mut w, &mut scratch).unwrap();
            plan.apply(&mut w, &mut scratch).unwrap();
            for (a, b) in v.iter().zip(&w) {
                proptest::prop_assert!((a - b).abs() < 1e-13);
            }
        }

        #[test]
        fn fft_matches_naive_up_to_64(m in 1usize..=64) {
            use rand::Rng;
            let mut rng = seeded_rng(m as u64);
            let v: Vec<Complex64> = (0..m)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let plan = FourierPlan::new(m, Direction::Forward).unwrap();
            let fast = plan.apply_alloc(&v).unwrap();
            let slow = naive_dft(&v, Direction::Forward);
            proptest::prop_assert!(rel_err_c(&fast, &slow) < 1e-12);
        }
    }
}
