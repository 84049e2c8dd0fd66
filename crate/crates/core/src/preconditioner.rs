//! The block ε-circulant preconditioner `P_ε = R_ε ⊗ M + τ I_N ⊗ K`.
//!
//! `R_ε` is the banded time-stepping Toeplitz matrix with its wrapped
//! diagonals scaled by ε; it diagonalizes as `D_ε⁻¹ F* Λ_ε F D_ε` with
//! `D_ε = diag(ε^{k/N})`, so applying `P_ε⁻¹` costs one scaled FFT pass in
//! time, one complex spatial solve per Fourier block, and one scaled inverse
//! FFT pass. For real input the blocks come in conjugate pairs
//! (`conj(B_k) = B_{N-k}`), so only the first ⌈(N+1)/2⌉ solves are performed
//! and the rest are filled by conjugation.
//!
//! Three interchangeable inner solvers handle the blocks
//! `B_k = λ_k M + τ K`: an exact sine-transform diagonalization when the pair
//! supports it, a V-cycle multigrid approximation, and a dense complex LU for
//! small problems and oracle checks.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::discretization::{SpatialPair, TimeStencil};
use crate::error::{check_len, Error, Result};
use crate::multigrid::{CoarseLu, CoarseOperators, MgWorkspace, MultigridHierarchy};
use crate::transforms::{Direction, FourierPlan, SinePlan, SineScratch};

/// The ε rule used throughout the experiments: `min(0.5, 0.5τ)`.
pub fn choose_epsilon(tau: f64) -> f64 {
    debug_assert!(tau > 0.0);
    (0.5 * tau).min(0.5)
}

/// Eigenvalues `λ_k = Σ_j r_j ε^{j/N} θ_N^{kj}` of the scaled time matrix,
/// `θ_N = exp(2πi/N)`, by direct summation (O(N·p)).
pub fn bec_eigenvalues(stencil: &TimeStencil, epsilon: f64, n: usize) -> Vec<Complex64> {
    let r = stencil.coeffs();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::ZERO;
            for (j, &rj) in r.iter().enumerate() {
                let angle = 2.0 * std::f64::consts::PI * ((k * j) % n) as f64 / n as f64;
                acc += Complex64::from_polar(1.0, angle)
                    * (rj * epsilon.powf(j as f64 / n as f64));
            }
            acc
        })
        .collect()
}

/// Same eigenvalues through the FFT route
/// `λ = √N·F_N·(r_0, r_1 ε^{1/N}, …, r_p ε^{p/N}, 0, …)`,
/// O(N log N) independent of the stencil width.
pub fn bec_eigenvalues_fft(stencil: &TimeStencil, epsilon: f64, n: usize) -> Result<Vec<Complex64>> {
    let r = stencil.coeffs();
    if r.len() > n {
        return Err(Error::InvalidArgument(format!(
            "stencil width {} exceeds N = {n}",
            r.len() - 1
        )));
    }
    let mut v = vec![Complex64::ZERO; n];
    for (j, &rj) in r.iter().enumerate() {
        v[j] = Complex64::new(rj * epsilon.powf(j as f64 / n as f64), 0.0);
    }
    let plan = FourierPlan::new(n, Direction::Inverse)?;
    let mut scratch = plan.make_scratch();
    plan.apply(&mut v, &mut scratch)?;
    let s = (n as f64).sqrt();
    for z in v.iter_mut() {
        *z *= s;
    }
    Ok(v)
}

/// The banded N×N pattern of `R_ε`: lower band `r_0..r_p` plus the wrapped
/// upper-corner band scaled by ε.
pub fn r_eps_dense(stencil: &TimeStencil, epsilon: f64, n: usize) -> DMatrix<f64> {
    let r = stencil.coeffs();
    let p = stencil.p();
    DMatrix::from_fn(n, n, |i, j| {
        let d = if i >= j { i - j } else { i + n - j };
        if d <= p {
            if i >= j {
                r[d]
            } else {
                epsilon * r[d]
            }
        } else {
            0.0
        }
    })
}

/// The plain (unscaled) time matrix R with the same band.
pub fn r_dense(stencil: &TimeStencil, n: usize) -> DMatrix<f64> {
    let r = stencil.coeffs();
    let p = stencil.p();
    DMatrix::from_fn(n, n, |i, j| {
        if i >= j && i - j <= p {
            r[i - j]
        } else {
            0.0
        }
    })
}

/// Reconstruct `R_ε` densely from its diagonalization
/// `D_ε⁻¹ F* Λ_ε F D_ε`; analysis use only (O(N³)).
pub fn reconstruct_r_eps(stencil: &TimeStencil, epsilon: f64, n: usize) -> Result<DMatrix<f64>> {
    let lambdas = bec_eigenvalues(stencil, epsilon, n);
    let s = 1.0 / (n as f64).sqrt();
    let f = DMatrix::from_fn(n, n, |i, j| {
        Complex64::from_polar(s, 2.0 * std::f64::consts::PI * ((i * j) % n) as f64 / n as f64)
    });
    let f_star = f.adjoint();
    let lam = DMatrix::from_diagonal(&DVector::from_vec(lambdas));
    let mut prod = f_star * lam * f;
    for i in 0..n {
        let di = epsilon.powf(i as f64 / n as f64);
        for j in 0..n {
            let dj = epsilon.powf(j as f64 / n as f64);
            prod[(i, j)] = prod[(i, j)] * (dj / di);
        }
    }
    let imag: f64 = prod.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let real_norm: f64 = prod.iter().map(|z| z.re * z.re).sum::<f64>().sqrt();
    if imag > 1e-10 * real_norm.max(1.0) {
        return Err(Error::Numerical(format!(
            "R_eps reconstruction has imaginary residue {imag:e}"
        )));
    }
    Ok(prod.map(|z| z.re))
}

/// Inner spatial solver selection for the Fourier blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolverKind {
    /// FstDirect when the pair allows it, else Multigrid, else DenseDirect.
    Auto,
    FstDirect,
    Multigrid,
    DenseDirect,
}

/// Multigrid inner-solver settings.
pub struct MgSettings {
    pub cycles: usize,
    pub omega: f64,
    pub coarsest_max_m: usize,
}

impl Default for MgSettings {
    fn default() -> Self {
        Self {
            cycles: 1,
            omega: 0.8,
            coarsest_max_m: 7,
        }
    }
}

pub struct BecOptions {
    pub epsilon: f64,
    pub inner: InnerSolverKind,
    /// Conjugate-pair reduction of the block solves (on by default).
    pub reduction: bool,
    pub mg: MgSettings,
    pub coarse: CoarseOperators,
    /// Largest J the dense inner solver accepts.
    pub dense_cap: usize,
}

impl BecOptions {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            inner: InnerSolverKind::Auto,
            reduction: true,
            mg: MgSettings::default(),
            coarse: CoarseOperators::Galerkin,
            dense_cap: 4096,
        }
    }
}

enum InnerState {
    Fst {
        plan: SinePlan,
        /// `λ_k·m̂ + τ·k̂` per solved block.
        denoms: Vec<Vec<Complex64>>,
    },
    Dense {
        lus: Vec<CoarseLu>,
    },
    Mg {
        hierarchy: MultigridHierarchy,
        cycles: usize,
        omega: f64,
        coarsest: Vec<CoarseLu>,
    },
}

enum InnerScratch {
    Fst {
        re: Vec<f64>,
        im: Vec<f64>,
        sine: SineScratch,
    },
    Dense,
    Mg {
        ws: MgWorkspace,
        rhs: Vec<Complex64>,
    },
}

/// Matrix-free `P_ε⁻¹` with precomputed Fourier eigenvalues, scaling powers,
/// and per-block inner-solver state. Immutable after setup; block solves run
/// in parallel with per-task scratch.
pub struct BecPreconditioner<'a> {
    pair: &'a SpatialPair,
    n: usize,
    tau: f64,
    epsilon: f64,
    lambdas: Vec<Complex64>,
    eps_pow: Vec<f64>,
    reduction: bool,
    n_solve: usize,
    inner: InnerState,
    plan_forward: FourierPlan,
    plan_inverse: FourierPlan,
    block_solves: AtomicU64,
}

impl<'a> BecPreconditioner<'a> {
    pub fn new(
        pair: &'a SpatialPair,
        stencil: &TimeStencil,
        n: usize,
        tau: f64,
        opts: BecOptions,
    ) -> Result<Self> {
        let epsilon = opts.epsilon;
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if n <= stencil.p() {
            return Err(Error::Config(format!(
                "N = {n} must exceed the stencil width p = {}",
                stencil.p()
            )));
        }
        // The D_ε⁻¹ scaling amplifies roundoff by ε^{-(N-1)/N}; refuse
        // configurations where that dynamic range eats the mantissa.
        let dynamic_range = epsilon.powf(-((n - 1) as f64) / n as f64);
        if !dynamic_range.is_finite() || dynamic_range >= 1e12 {
            return Err(Error::Config(format!(
                "epsilon = {epsilon} is too small for N = {n}: scaling range {dynamic_range:e}"
            )));
        }

        let lambdas = bec_eigenvalues(stencil, epsilon, n);
        let eps_pow: Vec<f64> = (0..n).map(|k| epsilon.powf(k as f64 / n as f64)).collect();
        let reduction = opts.reduction;
        let n_solve = if reduction { (n + 1).div_ceil(2) } else { n };

        let kind = match opts.inner {
            InnerSolverKind::Auto => {
                if pair.fst_diagonalizable() {
                    InnerSolverKind::FstDirect
                } else if (pair.grid.m() + 1).is_power_of_two()
                    && pair.grid.m() > opts.mg.coarsest_max_m
                {
                    InnerSolverKind::Multigrid
                } else if pair.j() <= opts.dense_cap {
                    InnerSolverKind::DenseDirect
                } else {
                    return Err(Error::Config(
                        "no inner solver applies: pair is not sine-diagonalizable, \
                         mesh is not multigrid-compatible, and J exceeds the dense cap"
                            .into(),
                    ));
                }
            }
            k => k,
        };

        let j = pair.j();
        let inner = match kind {
            InnerSolverKind::FstDirect => {
                let fst = pair.fst.as_ref().ok_or_else(|| {
                    Error::Config("FstDirect requires a sine-diagonalizable pair".into())
                })?;
                let mut denoms = Vec::with_capacity(n_solve);
                for &lam in lambdas.iter().take(n_solve) {
                    let d: Vec<Complex64> = (0..j)
                        .map(|i| lam * fst.mass[i] + Complex64::new(tau * fst.stiffness[i], 0.0))
                        .collect();
                    if d.iter().any(|z| z.norm() < 1e-300) {
                        return Err(Error::Numerical(
                            "singular Fourier block in sine-transform solver".into(),
                        ));
                    }
                    denoms.push(d);
                }
                InnerState::Fst {
                    plan: SinePlan::new(pair.grid.m())?,
                    denoms,
                }
            }
            InnerSolverKind::DenseDirect => {
                if j > opts.dense_cap {
                    return Err(Error::Config(format!(
                        "dense inner solver capped at J = {}, got {j}",
                        opts.dense_cap
                    )));
                }
                let m_dense = pair.mass.to_dense();
                let k_dense = pair.stiffness.to_dense();
                let lus = lambdas
                    .iter()
                    .take(n_solve)
                    .map(|&lam| {
                        DMatrix::from_fn(j, j, |r, c| {
                            lam * m_dense[(r, c)] + Complex64::new(tau * k_dense[(r, c)], 0.0)
                        })
                        .lu()
                    })
                    .collect();
                InnerState::Dense { lus }
            }
            InnerSolverKind::Multigrid => {
                let hierarchy =
                    MultigridHierarchy::new(pair, tau, &opts.coarse, opts.mg.coarsest_max_m)?;
                let coarsest = lambdas
                    .iter()
                    .take(n_solve)
                    .map(|&lam| hierarchy.coarsest_matrix(lam).lu())
                    .collect();
                InnerState::Mg {
                    hierarchy,
                    cycles: opts.mg.cycles,
                    omega: opts.mg.omega,
                    coarsest,
                }
            }
            InnerSolverKind::Auto => unreachable!(),
        };

        Ok(Self {
            pair,
            n,
            tau,
            epsilon,
            lambdas,
            eps_pow,
            reduction,
            n_solve,
            inner,
            plan_forward: FourierPlan::new(n, Direction::Forward)?,
            plan_inverse: FourierPlan::new(n, Direction::Inverse)?,
            block_solves: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.n * self.pair.j()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn lambdas(&self) -> &[Complex64] {
        &self.lambdas
    }

    pub fn reduction(&self) -> bool {
        self.reduction
    }

    /// Block solves performed per [`BecPreconditioner::apply_inverse`] call.
    pub fn solves_per_apply(&self) -> usize {
        self.n_solve
    }

    pub fn block_solve_count(&self) -> u64 {
        self.block_solves.load(Ordering::Relaxed)
    }

    pub fn reset_block_solve_count(&self) {
        self.block_solves.store(0, Ordering::Relaxed);
    }

    fn make_scratch(&self) -> InnerScratch {
        let j = self.pair.j();
        match &self.inner {
            InnerState::Fst { plan, .. } => InnerScratch::Fst {
                re: vec![0.0; j],
                im: vec![0.0; j],
                sine: plan.make_scratch(),
            },
            InnerState::Dense { .. } => InnerScratch::Dense,
            InnerState::Mg { hierarchy, .. } => InnerScratch::Mg {
                ws: hierarchy.make_workspace(),
                rhs: vec![Complex64::ZERO; j],
            },
        }
    }

    fn solve_block(&self, k: usize, block: &mut [Complex64], scratch: &mut InnerScratch) -> Result<()> {
        match (&self.inner, scratch) {
            (InnerState::Fst { plan, denoms }, InnerScratch::Fst { re, im, sine }) => {
                fst_block_solve(plan, &denoms[k], block, re, im, sine)
            }
            (InnerState::Dense { lus }, InnerScratch::Dense) => {
                let rhs = DVector::from_column_slice(block);
                let sol = lus[k]
                    .solve(&rhs)
                    .ok_or_else(|| Error::InnerSolver("singular Fourier block".into()))?;
                block.copy_from_slice(sol.as_slice());
                Ok(())
            }
            (
                InnerState::Mg {
                    hierarchy,
                    cycles,
                    omega,
                    coarsest,
                },
                InnerScratch::Mg { ws, rhs },
            ) => {
                rhs.copy_from_slice(block);
                hierarchy.solve(self.lambdas[k], *omega, *cycles, &coarsest[k], rhs, block, ws)
            }
            _ => unreachable!("scratch kind matches inner kind"),
        }
    }

    /// `out = P_ε⁻¹ y` by the three-step procedure: scaled forward FFT pass in
    /// time, independent complex block solves, scaled inverse FFT pass.
    pub fn apply_inverse(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let (n, j) = (self.n, self.pair.j());
        check_len(n * j, y.len())?;
        check_len(n * j, out.len())?;

        // Step 1: ỹ = [(F_N D_ε) ⊗ I_J] y, FFT over the time index of each
        // spatial point (time-major layout).
        let mut time_major = vec![Complex64::ZERO; n * j];
        for k in 0..n {
            let w = self.eps_pow[k];
            for i in 0..j {
                time_major[i * n + k] = Complex64::new(y[k * j + i] * w, 0.0);
            }
        }
        time_major
            .par_chunks_mut(n)
            .try_for_each_init(
                || self.plan_inverse.make_scratch(),
                |scratch, chunk| self.plan_inverse.apply(chunk, scratch),
            )?;

        // Step 2: solve B_{k} z̃ᵏ = ỹᵏ for the leading blocks, conjugate the
        // rest (conj(B_k) = B_{N-k} pairs the solutions of real input).
        let mut blocks = vec![Complex64::ZERO; n * j];
        for i in 0..j {
            for k in 0..n {
                blocks[k * j + i] = time_major[i * n + k];
            }
        }
        blocks[..self.n_solve * j]
            .par_chunks_mut(j)
            .enumerate()
            .try_for_each_init(
                || self.make_scratch(),
                |scratch, (k, block)| self.solve_block(k, block, scratch),
            )?;
        self.block_solves.fetch_add(self.n_solve as u64, Ordering::Relaxed);
        let (solved, rest) = blocks.split_at_mut(self.n_solve * j);
        for k in self.n_solve..n {
            let src = &solved[(n - k) * j..(n - k + 1) * j];
            let dst = &mut rest[(k - self.n_solve) * j..(k - self.n_solve + 1) * j];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s.conj();
            }
        }

        // Step 3: z = [(D_ε⁻¹ F_N*) ⊗ I_J] z̃; the result of a real input is
        // real up to roundoff, anything larger flags a conjugation bug.
        for i in 0..j {
            for k in 0..n {
                time_major[i * n + k] = blocks[k * j + i];
            }
        }
        time_major
            .par_chunks_mut(n)
            .try_for_each_init(
                || self.plan_forward.make_scratch(),
                |scratch, chunk| self.plan_forward.apply(chunk, scratch),
            )?;

        let mut imag_sq = 0.0;
        let mut total_sq = 0.0;
        for k in 0..n {
            let w = 1.0 / self.eps_pow[k];
            for i in 0..j {
                let z = time_major[i * n + k] * w;
                out[k * j + i] = z.re;
                imag_sq += z.im * z.im;
                total_sq += z.norm_sqr();
            }
        }
        if imag_sq.sqrt() > 1e-10 * total_sq.sqrt().max(1e-300) {
            return Err(Error::Numerical(format!(
                "preconditioner output has imaginary residue {:e} (conjugate symmetry broken)",
                imag_sq.sqrt()
            )));
        }
        Ok(())
    }
}

fn fst_block_solve(
    plan: &SinePlan,
    denom: &[Complex64],
    block: &mut [Complex64],
    re: &mut [f64],
    im: &mut [f64],
    sine: &mut SineScratch,
) -> Result<()> {
    for (i, z) in block.iter().enumerate() {
        re[i] = z.re;
        im[i] = z.im;
    }
    plan.apply_2d(re, sine)?;
    plan.apply_2d(im, sine)?;
    for i in 0..block.len() {
        let v = Complex64::new(re[i], im[i]) / denom[i];
        re[i] = v.re;
        im[i] = v.im;
    }
    plan.apply_2d(re, sine)?;
    plan.apply_2d(im, sine)?;
    for (i, z) in block.iter_mut().enumerate() {
        *z = Complex64::new(re[i], im[i]);
    }
    Ok(())
}

/// Exact solve of `(λM + τK) z = rhs` through the 2D sine diagonalization.
pub fn inner_solve_fst(
    lambda: Complex64,
    pair: &SpatialPair,
    tau: f64,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let fst = pair
        .fst
        .as_ref()
        .ok_or_else(|| Error::Config("pair is not sine-transform diagonalizable".into()))?;
    check_len(pair.j(), rhs.len())?;
    let denom: Vec<Complex64> = (0..pair.j())
        .map(|i| lambda * fst.mass[i] + Complex64::new(tau * fst.stiffness[i], 0.0))
        .collect();
    if denom.iter().any(|z| z.norm() < 1e-300) {
        return Err(Error::Numerical("singular Fourier block".into()));
    }
    let plan = SinePlan::new(pair.grid.m())?;
    let mut sine = plan.make_scratch();
    let mut re = vec![0.0; pair.j()];
    let mut im = vec![0.0; pair.j()];
    let mut out = rhs.to_vec();
    fst_block_solve(&plan, &denom, &mut out, &mut re, &mut im, &mut sine)?;
    Ok(out)
}

/// Dense complex LU solve of `(λM + τK) z = rhs`; oracle and small-J fallback.
pub fn inner_solve_dense(
    lambda: Complex64,
    pair: &SpatialPair,
    tau: f64,
    rhs: &[Complex64],
    cap: usize,
) -> Result<Vec<Complex64>> {
    let j = pair.j();
    if j > cap {
        return Err(Error::Config(format!("dense inner solver capped at J = {cap}, got {j}")));
    }
    check_len(j, rhs.len())?;
    let m = pair.mass.to_dense();
    let k = pair.stiffness.to_dense();
    let b = DMatrix::from_fn(j, j, |r, c| {
        lambda * m[(r, c)] + Complex64::new(tau * k[(r, c)], 0.0)
    });
    let sol = b
        .lu()
        .solve(&DVector::from_column_slice(rhs))
        .ok_or_else(|| Error::InnerSolver("singular Fourier block".into()))?;
    Ok(sol.as_slice().to_vec())
}

/// Approximate solve of `(λM + τK) z = rhs` by V-cycles from a zero guess.
#[allow(clippy::too_many_arguments)]
pub fn inner_solve_multigrid(
    lambda: Complex64,
    pair: &SpatialPair,
    tau: f64,
    rhs: &[Complex64],
    cycles: usize,
    omega: f64,
    coarse: &CoarseOperators,
    coarsest_max_m: usize,
) -> Result<Vec<Complex64>> {
    check_len(pair.j(), rhs.len())?;
    let hierarchy = MultigridHierarchy::new(pair, tau, coarse, coarsest_max_m)?;
    let lu = hierarchy.coarsest_matrix(lambda).lu();
    let mut out = vec![Complex64::ZERO; pair.j()];
    let mut ws = hierarchy.make_workspace();
    hierarchy.solve(lambda, omega, cycles, &lu, rhs, &mut out, &mut ws)?;
    Ok(out)
}
