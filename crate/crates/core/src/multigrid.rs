//! Geometric V-cycle multigrid for the complex Fourier-space blocks
//! `B = λM + τK` on the uniform square mesh.
//!
//! Smoothing is damped Jacobi (one pre- and one post-sweep), grid transfer is
//! bilinear interpolation with its transpose as restriction, and the coarsest
//! level (m ≤ 7 by default) is solved with a dense complex LU. Every level
//! stores M and K separately, so one hierarchy serves all Fourier blocks:
//! only the scalar λ changes between solves.

use nalgebra::{DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::discretization::SpatialPair;
use crate::error::{check_len, Error, Result};
use crate::operators::SparseMatrix;

/// How coarse-level operators are produced.
pub enum CoarseOperators {
    /// Variationally: `M_c = Pᵀ M P`, `K_c = Pᵀ K P`. Works for any pair.
    Galerkin,
    /// Rebuild the pair on the coarse mesh. Exact for constant coefficients.
    Rediscretize(Box<dyn Fn(usize) -> Result<SpatialPair> + Send + Sync>),
}

pub type CoarseLu = nalgebra::LU<Complex64, Dyn, Dyn>;

struct MgLevel {
    j: usize,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    diag_mass: Vec<f64>,
    diag_stiffness: Vec<f64>,
    /// Bilinear interpolation from the next coarser level; absent on the
    /// coarsest one. `restrict` is its transpose.
    interp: Option<SparseMatrix>,
    restrict: Option<SparseMatrix>,
}

pub struct MultigridHierarchy {
    levels: Vec<MgLevel>,
    tau: f64,
}

/// Per-solve scratch: one set of vectors per level.
pub struct MgWorkspace {
    rhs: Vec<Vec<Complex64>>,
    z: Vec<Vec<Complex64>>,
    r: Vec<Vec<Complex64>>,
    t: Vec<Vec<Complex64>>,
}

/// 1D piecewise-linear interpolation from `m_c = (m_f+1)/2 - 1` coarse points
/// to `m_f` fine points, as (fine, coarse, weight) triplets, 0-based.
fn interp_1d(m_f: usize) -> Vec<(usize, usize, f64)> {
    let m_c = (m_f + 1) / 2 - 1;
    let mut t = Vec::new();
    for f in 1..=m_f {
        if f % 2 == 0 {
            t.push((f - 1, f / 2 - 1, 1.0));
        } else {
            let left = (f - 1) / 2;
            let right = (f + 1) / 2;
            if left >= 1 {
                t.push((f - 1, left - 1, 0.5));
            }
            if right <= m_c {
                t.push((f - 1, right - 1, 0.5));
            }
        }
    }
    t
}

fn interp_2d(m_f: usize) -> Result<SparseMatrix> {
    let m_c = (m_f + 1) / 2 - 1;
    let one_d = interp_1d(m_f);
    let mut t = Vec::with_capacity(one_d.len() * one_d.len());
    for &(fy, cy, wy) in &one_d {
        for &(fx, cx, wx) in &one_d {
            t.push((fy * m_f + fx, cy * m_c + cx, wy * wx));
        }
    }
    SparseMatrix::from_triplets(m_f * m_f, m_c * m_c, &t)
}

impl MultigridHierarchy {
    pub fn new(
        pair: &SpatialPair,
        tau: f64,
        coarse: &CoarseOperators,
        coarsest_max_m: usize,
    ) -> Result<Self> {
        let m = pair.grid.m();
        if !(m + 1).is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "multigrid needs m+1 a power of two, got m = {m}"
            )));
        }
        let mut levels = Vec::new();
        let mut current_m = m;
        let mut mass = pair.mass.clone();
        let mut stiffness = pair.stiffness.clone();
        loop {
            if current_m <= coarsest_max_m {
                levels.push(MgLevel {
                    j: current_m * current_m,
                    diag_mass: mass.diag(),
                    diag_stiffness: stiffness.diag(),
                    mass,
                    stiffness,
                    interp: None,
                    restrict: None,
                });
                break;
            }
            let interp = interp_2d(current_m)?;
            let restrict = interp.transpose();
            let (next_mass, next_stiffness) = match coarse {
                CoarseOperators::Galerkin => (
                    restrict.matmul(&mass)?.matmul(&interp)?,
                    restrict.matmul(&stiffness)?.matmul(&interp)?,
                ),
                CoarseOperators::Rediscretize(builder) => {
                    let coarse_pair = builder((current_m + 1) / 2 - 1)?;
                    (coarse_pair.mass, coarse_pair.stiffness)
                }
            };
            levels.push(MgLevel {
                j: current_m * current_m,
                diag_mass: mass.diag(),
                diag_stiffness: stiffness.diag(),
                mass,
                stiffness,
                interp: Some(interp),
                restrict: Some(restrict),
            });
            mass = next_mass;
            stiffness = next_stiffness;
            current_m = (current_m + 1) / 2 - 1;
        }
        Ok(Self { levels, tau })
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn coarsest_j(&self) -> usize {
        self.levels.last().unwrap().j
    }

    /// Dense coarsest-level block `λ M_c + τ K_c`, ready for factorization.
    pub fn coarsest_matrix(&self, lambda: Complex64) -> DMatrix<Complex64> {
        let level = self.levels.last().unwrap();
        let m = level.mass.to_dense();
        let k = level.stiffness.to_dense();
        DMatrix::from_fn(level.j, level.j, |i, jj| {
            lambda * m[(i, jj)] + Complex64::new(self.tau * k[(i, jj)], 0.0)
        })
    }

    pub fn make_workspace(&self) -> MgWorkspace {
        let alloc = || -> Vec<Vec<Complex64>> {
            self.levels
                .iter()
                .map(|l| vec![Complex64::ZERO; l.j])
                .collect()
        };
        MgWorkspace {
            rhs: alloc(),
            z: alloc(),
            r: alloc(),
            t: alloc(),
        }
    }

    /// `out = (λM + τK) z` on level `lvl`, `tmp` clobbered.
    fn apply_block(
        &self,
        lvl: usize,
        lambda: Complex64,
        z: &[Complex64],
        out: &mut [Complex64],
        tmp: &mut [Complex64],
    ) -> Result<()> {
        let level = &self.levels[lvl];
        level.mass.spmv_complex(z, out)?;
        for o in out.iter_mut() {
            *o *= lambda;
        }
        level.stiffness.spmv_complex(z, tmp)?;
        for (o, t) in out.iter_mut().zip(tmp.iter()) {
            *o += t * self.tau;
        }
        Ok(())
    }

    /// One damped-Jacobi sweep: `z += ω·diag(B)⁻¹·(rhs − B z)`.
    fn smooth(
        &self,
        lvl: usize,
        lambda: Complex64,
        omega: f64,
        z: &mut [Complex64],
        rhs: &[Complex64],
        r: &mut [Complex64],
        t: &mut [Complex64],
    ) -> Result<()> {
        self.apply_block(lvl, lambda, z, r, t)?;
        let level = &self.levels[lvl];
        for i in 0..level.j {
            let diag =
                lambda * level.diag_mass[i] + Complex64::new(self.tau * level.diag_stiffness[i], 0.0);
            z[i] += (rhs[i] - r[i]) / diag * omega;
        }
        Ok(())
    }

    fn v_cycle(
        &self,
        lambda: Complex64,
        omega: f64,
        coarsest_lu: &CoarseLu,
        ws: &mut MgWorkspace,
    ) -> Result<()> {
        let coarsest = self.levels.len() - 1;
        for lvl in 0..coarsest {
            self.smooth(lvl, lambda, omega, &mut ws.z[lvl], &ws.rhs[lvl], &mut ws.r[lvl], &mut ws.t[lvl])?;
            self.apply_block(lvl, lambda, &ws.z[lvl], &mut ws.r[lvl], &mut ws.t[lvl])?;
            for i in 0..self.levels[lvl].j {
                ws.r[lvl][i] = ws.rhs[lvl][i] - ws.r[lvl][i];
            }
            let restrict = self.levels[lvl].restrict.as_ref().unwrap();
            restrict.spmv_complex(&ws.r[lvl], &mut ws.rhs[lvl + 1])?;
            ws.z[lvl + 1].fill(Complex64::ZERO);
        }

        let rhs_c = DVector::from_column_slice(&ws.rhs[coarsest]);
        let sol = coarsest_lu
            .solve(&rhs_c)
            .ok_or_else(|| Error::InnerSolver("singular coarsest-level block".into()))?;
        ws.z[coarsest].copy_from_slice(sol.as_slice());

        for lvl in (0..coarsest).rev() {
            let interp = self.levels[lvl].interp.as_ref().unwrap();
            interp.spmv_complex(&ws.z[lvl + 1], &mut ws.t[lvl])?;
            for i in 0..self.levels[lvl].j {
                ws.z[lvl][i] += ws.t[lvl][i];
            }
            self.smooth(lvl, lambda, omega, &mut ws.z[lvl], &ws.rhs[lvl], &mut ws.r[lvl], &mut ws.t[lvl])?;
        }
        Ok(())
    }

    /// Approximate solve of `(λM + τK) z = rhs` by `cycles` V-cycles from a
    /// zero initial guess. Errors if the finest-level residual grows across a
    /// cycle.
    #[allow(clippy::too_many_arguments)]
    pub fn solve(
        &self,
        lambda: Complex64,
        omega: f64,
        cycles: usize,
        coarsest_lu: &CoarseLu,
        rhs: &[Complex64],
        out: &mut [Complex64],
        ws: &mut MgWorkspace,
    ) -> Result<()> {
        let j = self.levels[0].j;
        check_len(j, rhs.len())?;
        check_len(j, out.len())?;
        if cycles == 0 {
            return Err(Error::InvalidArgument("need at least one V-cycle".into()));
        }

        ws.rhs[0].copy_from_slice(rhs);
        ws.z[0].fill(Complex64::ZERO);
        let norm0 = norm(rhs);
        if norm0 == 0.0 {
            out.fill(Complex64::ZERO);
            return Ok(());
        }
        let mut prev = norm0;
        for _ in 0..cycles {
            self.v_cycle(lambda, omega, coarsest_lu, ws)?;
            self.apply_block(0, lambda, &ws.z[0], &mut ws.r[0], &mut ws.t[0])?;
            for (ri, bi) in ws.r[0].iter_mut().zip(rhs) {
                *ri = bi - *ri;
            }
            let rn = norm(&ws.r[0]);
            if rn > prev * (1.0 + 1e-8) {
                return Err(Error::InnerSolver(format!(
                    "V-cycle residual grew from {prev:e} to {rn:e}"
                )));
            }
            prev = rn;
        }
        out.copy_from_slice(&ws.z[0]);
        Ok(())
    }

    /// Residual contraction of a single V-cycle from a zero start.
    pub fn measured_contraction(
        &self,
        lambda: Complex64,
        omega: f64,
        coarsest_lu: &CoarseLu,
        rhs: &[Complex64],
    ) -> Result<f64> {
        let mut out = vec![Complex64::ZERO; rhs.len()];
        let mut ws = self.make_workspace();
        self.solve(lambda, omega, 1, coarsest_lu, rhs, &mut out, &mut ws)?;
        self.apply_block(0, lambda, &out, &mut ws.r[0], &mut ws.t[0])?;
        for (ri, bi) in ws.r[0].iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        Ok(norm(&ws.r[0]) / norm(rhs))
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_heat_fd, Coefficient, Grid2D};

    fn poisson_hierarchy(m: usize, tau: f64) -> MultigridHierarchy {
        let grid = Grid2D::unit_square(m).unwrap();
        let pair = build_heat_fd(grid, &Coefficient::Constant(1.0)).unwrap();
        MultigridHierarchy::new(&pair, tau, &CoarseOperators::Galerkin, 7).unwrap()
    }

    #[test]
    fn hierarchy_depth_and_sizes() {
        let h = poisson_hierarchy(31, 0.1);
        assert_eq!(h.level_count(), 3); // 31 -> 15 -> 7
        assert_eq!(h.coarsest_j(), 49);
        let pair =
            build_heat_fd(Grid2D::unit_square(10).unwrap(), &Coefficient::Constant(1.0)).unwrap();
        assert!(MultigridHierarchy::new(&pair, 0.1, &CoarseOperators::Galerkin, 7).is_err());
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let h = poisson_hierarchy(15, 0.1);
        let lam = Complex64::new(1.0, 0.0);
        let lu = h.coarsest_matrix(lam).lu();
        let rhs = vec![Complex64::ZERO; 225];
        let mut out = vec![Complex64::new(1.0, 1.0); 225];
        let mut ws = h.make_workspace();
        h.solve(lam, 0.8, 1, &lu, &rhs, &mut out, &mut ws).unwrap();
        assert!(out.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn one_cycle_contracts_poisson_residual() {
        use rand::{Rng, SeedableRng};
        let m = 31;
        let h = poisson_hierarchy(m, 1.0 / 16.0);
        let lam = Complex64::new(1.0, 0.0);
        let lu = h.coarsest_matrix(lam).lu();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let rhs: Vec<Complex64> = (0..m * m)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0))
            .collect();
        let rho = h.measured_contraction(lam, 0.8, &lu, &rhs).unwrap();
        assert!(rho < 0.5, "contraction factor {rho}");
    }

    #[test]
    fn rediscretized_and_galerkin_coarse_operators_both_converge() {
        use rand::{Rng, SeedableRng};
        let m = 15;
        let grid = Grid2D::unit_square(m).unwrap();
        let pair = build_heat_fd(grid, &Coefficient::Constant(1.0)).unwrap();
        let redisc = CoarseOperators::Rediscretize(Box::new(|mc| {
            build_heat_fd(Grid2D::unit_square(mc)?, &Coefficient::Constant(1.0))
        }));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(18);
        let rhs: Vec<Complex64> = (0..m * m)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0))
            .collect();
        for coarse in [CoarseOperators::Galerkin, redisc] {
            let h = MultigridHierarchy::new(&pair, 0.05, &coarse, 7).unwrap();
            let lam = Complex64::new(1.0, 0.0);
            let lu = h.coarsest_matrix(lam).lu();
            let rho = h.measured_contraction(lam, 0.8, &lu, &rhs).unwrap();
            assert!(rho < 0.5, "contraction factor {rho}");
        }
    }

    #[test]
    fn repeated_cycles_solve_to_high_accuracy() {
        use rand::{Rng, SeedableRng};
        let m = 15;
        let h = poisson_hierarchy(m, 0.05);
        let lam = Complex64::new(1.0, 0.5);
        let lu = h.coarsest_matrix(lam).lu();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let rhs: Vec<Complex64> = (0..m * m)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut out = vec![Complex64::ZERO; m * m];
        let mut ws = h.make_workspace();
        h.solve(lam, 0.8, 30, &lu, &rhs, &mut out, &mut ws).unwrap();
        h.apply_block(0, lam, &out, &mut ws.r[0], &mut ws.t[0]).unwrap();
        let res: f64 = ws.r[0]
            .iter()
            .zip(&rhs)
            .map(|(a, b)| (b - a).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(res / norm(&rhs) < 1e-10);
    }
}
