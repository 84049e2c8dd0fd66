//! Spatial operator pairs (M, K), backward-difference time stencils, and
//! assembly of the all-at-once system `L u = f` with
//! `L = R ⊗ M + τ I_N ⊗ K`.
//!
//! Unknown ordering is lexicographic with x fastest, fixed globally, so the
//! tensor eigenvalue index pair (i, j) maps to linear index `(j-1)·m + (i-1)`
//! without ambiguity.

use crate::error::{check_len, Error, Result};
use crate::operators::SparseMatrix;

/// Uniform square mesh of `m` interior points per dimension over a square
/// domain, `h = side/(m+1)`.
#[derive(Debug, Clone, Copy)]
pub struct Grid2D {
    m: usize,
    x0: f64,
    y0: f64,
    h: f64,
}

impl Grid2D {
    pub fn new(m: usize, x_bounds: (f64, f64), y_bounds: (f64, f64)) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid needs at least one interior point".into()));
        }
        let sx = x_bounds.1 - x_bounds.0;
        let sy = y_bounds.1 - y_bounds.0;
        if sx <= 0.0 || sy <= 0.0 {
            return Err(Error::InvalidArgument("domain bounds must be increasing".into()));
        }
        if (sx - sy).abs() > 1e-14 * sx.abs() {
            return Err(Error::InvalidArgument("domain must be square (one mesh width)".into()));
        }
        Ok(Self {
            m,
            x0: x_bounds.0,
            y0: y_bounds.0,
            h: sx / (m as f64 + 1.0),
        })
    }

    pub fn unit_square(m: usize) -> Result<Self> {
        Self::new(m, (0.0, 1.0), (0.0, 1.0))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Total interior unknowns `J = m²`.
    pub fn j(&self) -> usize {
        self.m * self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// x-coordinate of column `i ∈ 0..=m+1` (0 and m+1 are boundary).
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.h
    }

    /// Linear index of interior node `(i, j)`, both 1-based.
    pub fn index(&self, i: usize, j: usize) -> usize {
        (j - 1) * self.m + (i - 1)
    }

    /// Interior node coordinates for a linear index.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let i = idx % self.m + 1;
        let j = idx / self.m + 1;
        (self.x(i), self.y(j))
    }
}

/// Diffusion coefficient: constant coefficients keep the pair
/// sine-transform-diagonalizable, varying ones do not.
pub enum Coefficient<'a> {
    Constant(f64),
    Varying(&'a dyn Fn(f64, f64) -> f64),
}

impl Coefficient<'_> {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Coefficient::Constant(a) => *a,
            Coefficient::Varying(f) => f(x, y),
        }
    }
}

/// Tensor eigenvalues of M and K under the 2D sine transform `S ⊗ S`,
/// stored for every linear node index.
#[derive(Debug, Clone)]
pub struct FstEigens {
    pub mass: Vec<f64>,
    pub stiffness: Vec<f64>,
}

/// One eliminated Dirichlet coupling: stencil weight `coef` from interior row
/// `row` to the boundary point at `(x, y)`. Boundary data enters the
/// right-hand side as `-coef · g(x, y, t)`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryCoupling {
    pub row: usize,
    pub coef: f64,
    pub x: f64,
    pub y: f64,
}

/// Mass and stiffness matrices for one spatial mesh, with structure flags.
#[derive(Debug)]
pub struct SpatialPair {
    pub grid: Grid2D,
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub symmetric_k: bool,
    pub fst: Option<FstEigens>,
    pub boundary: Vec<BoundaryCoupling>,
}

impl SpatialPair {
    pub fn j(&self) -> usize {
        self.grid.j()
    }

    pub fn fst_diagonalizable(&self) -> bool {
        self.fst.is_some()
    }
}

fn sine_factor_eigens(m: usize) -> (Vec<f64>, Vec<f64>) {
    // tridiag(1,4,1) and tridiag(-1,2,-1) under DST-I
    let mut t_hat = Vec::with_capacity(m);
    let mut l_hat = Vec::with_capacity(m);
    for i in 1..=m {
        let c = (i as f64 * std::f64::consts::PI / (m as f64 + 1.0)).cos();
        t_hat.push(4.0 + 2.0 * c);
        l_hat.push(2.0 - 2.0 * c);
    }
    (t_hat, l_hat)
}

/// Finite-difference heat pair: `M = I`, `K` the 5-point discretization of
/// `-∇·(a∇·)` with the coefficient evaluated at edge midpoints (which keeps
/// K symmetric for varying `a`).
pub fn build_heat_fd(grid: Grid2D, a: &Coefficient) -> Result<SpatialPair> {
    let m = grid.m();
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let mut triplets = Vec::with_capacity(5 * grid.j());
    let mut boundary = Vec::new();

    let edge = |x: f64, y: f64| -> Result<f64> {
        let v = a.eval(x, y);
        if v <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "diffusion coefficient must be positive, got {v} at ({x}, {y})"
            )));
        }
        Ok(v)
    };

    for j in 1..=m {
        for i in 1..=m {
            let row = grid.index(i, j);
            let (x, y) = (grid.x(i), grid.y(j));
            let mut diag = 0.0;
            // (neighbor i, neighbor j, midpoint x, midpoint y)
            let stencil = [
                (i + 1, j, x + 0.5 * h, y),
                (i - 1, j, x - 0.5 * h, y),
                (i, j + 1, x, y + 0.5 * h),
                (i, j - 1, x, y - 0.5 * h),
            ];
            for (ni, nj, mx, my) in stencil {
                let ae = edge(mx, my)? * inv_h2;
                diag += ae;
                if ni >= 1 && ni <= m && nj >= 1 && nj <= m {
                    triplets.push((row, grid.index(ni, nj), -ae));
                } else {
                    boundary.push(BoundaryCoupling {
                        row,
                        coef: -ae,
                        x: grid.x(ni),
                        y: grid.y(nj),
                    });
                }
            }
            triplets.push((row, row, diag));
        }
    }

    let fst = if let Coefficient::Constant(c) = a {
        let (_, l_hat) = sine_factor_eigens(m);
        let mut k_hat = Vec::with_capacity(grid.j());
        for j in 0..m {
            for i in 0..m {
                k_hat.push(c * inv_h2 * (l_hat[i] + l_hat[j]));
            }
        }
        Some(FstEigens {
            mass: vec![1.0; grid.j()],
            stiffness: k_hat,
        })
    } else {
        None
    };

    Ok(SpatialPair {
        grid,
        mass: SparseMatrix::identity(grid.j()),
        stiffness: SparseMatrix::from_triplets(grid.j(), grid.j(), &triplets)?,
        symmetric_k: true,
        fst,
        boundary,
    })
}

/// Bilinear-element heat pair on the uniform square mesh:
/// `M = (h/6·T) ⊗ (h/6·T)` and `K = a/6 · (L ⊗ T + T ⊗ L)` with
/// `T = tridiag(1,4,1)`, `L = tridiag(-1,2,-1)`. Assumes homogeneous
/// Dirichlet data (no boundary couplings are recorded).
pub fn build_heat_q1(grid: Grid2D, a: f64) -> Result<SpatialPair> {
    if a <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "diffusion coefficient must be positive, got {a}"
        )));
    }
    let m = grid.m();
    let h = grid.h();
    let t = |d: i64| if d == 0 { 4.0 } else { 1.0 };
    let l = |d: i64| if d == 0 { 2.0 } else { -1.0 };

    let mut mt = Vec::with_capacity(9 * grid.j());
    let mut kt = Vec::with_capacity(9 * grid.j());
    for j in 1..=m as i64 {
        for i in 1..=m as i64 {
            let row = grid.index(i as usize, j as usize);
            for dj in -1..=1i64 {
                for di in -1..=1i64 {
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 1 || nj < 1 || ni > m as i64 || nj > m as i64 {
                        continue;
                    }
                    let col = grid.index(ni as usize, nj as usize);
                    mt.push((row, col, h * h / 36.0 * t(di) * t(dj)));
                    kt.push((row, col, a / 6.0 * (l(dj) * t(di) + t(dj) * l(di))));
                }
            }
        }
    }

    let (t_hat, l_hat) = sine_factor_eigens(m);
    let mut m_hat = Vec::with_capacity(grid.j());
    let mut k_hat = Vec::with_capacity(grid.j());
    for j in 0..m {
        for i in 0..m {
            m_hat.push(h * h / 36.0 * t_hat[i] * t_hat[j]);
            k_hat.push(a / 6.0 * (l_hat[j] * t_hat[i] + t_hat[j] * l_hat[i]));
        }
    }

    Ok(SpatialPair {
        grid,
        mass: SparseMatrix::from_triplets(grid.j(), grid.j(), &mt)?,
        stiffness: SparseMatrix::from_triplets(grid.j(), grid.j(), &kt)?,
        symmetric_k: true,
        fst: Some(FstEigens {
            mass: m_hat,
            stiffness: k_hat,
        }),
        boundary: Vec::new(),
    })
}

/// Convection-diffusion pair: `M = I`, `K = ν·(5-point Laplacian) + first
/// order upwinding of `w·∇` with the wind evaluated at grid nodes.
pub fn build_convdiff(
    grid: Grid2D,
    nu: f64,
    wind: &dyn Fn(f64, f64) -> (f64, f64),
) -> Result<SpatialPair> {
    if nu <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "diffusion constant must be positive, got {nu}"
        )));
    }
    let m = grid.m();
    let h = grid.h();
    let inv_h2 = nu / (h * h);
    let inv_h = 1.0 / h;
    let mut triplets = Vec::with_capacity(5 * grid.j());
    let mut boundary = Vec::new();

    let add = |row: usize,
                   ni: usize,
                   nj: usize,
                   coef: f64,
                   grid: &Grid2D,
                   triplets: &mut Vec<(usize, usize, f64)>,
                   boundary: &mut Vec<BoundaryCoupling>| {
        if coef == 0.0 {
            return;
        }
        if ni >= 1 && ni <= m && nj >= 1 && nj <= m {
            triplets.push((row, grid.index(ni, nj), coef));
        } else {
            boundary.push(BoundaryCoupling {
                row,
                coef,
                x: grid.x(ni),
                y: grid.y(nj),
            });
        }
    };

    for j in 1..=m {
        for i in 1..=m {
            let row = grid.index(i, j);
            let (x, y) = (grid.x(i), grid.y(j));
            let (wx, wy) = wind(x, y);

            let mut diag = 4.0 * inv_h2;
            for (ni, nj) in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)] {
                add(row, ni, nj, -inv_h2, &grid, &mut triplets, &mut boundary);
            }

            // upwinded w·∇: couple to the node the flow comes from
            diag += (wx.abs() + wy.abs()) * inv_h;
            if wx > 0.0 {
                add(row, i - 1, j, -wx * inv_h, &grid, &mut triplets, &mut boundary);
            } else if wx < 0.0 {
                add(row, i + 1, j, wx * inv_h, &grid, &mut triplets, &mut boundary);
            }
            if wy > 0.0 {
                add(row, i, j - 1, -wy * inv_h, &grid, &mut triplets, &mut boundary);
            } else if wy < 0.0 {
                add(row, i, j + 1, wy * inv_h, &grid, &mut triplets, &mut boundary);
            }

            triplets.push((row, row, diag));
        }
    }

    Ok(SpatialPair {
        grid,
        mass: SparseMatrix::identity(grid.j()),
        stiffness: SparseMatrix::from_triplets(grid.j(), grid.j(), &triplets)?,
        symmetric_k: false,
        fst: None,
        boundary,
    })
}

/// Backward-difference coefficients `r_0..r_p` of the Toeplitz time matrix R.
#[derive(Debug, Clone)]
pub struct TimeStencil {
    coeffs: Vec<f64>,
}

impl TimeStencil {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 || coeffs[0] <= 0.0 {
            return Err(Error::InvalidArgument(
                "time stencil needs r_0 > 0 and at least one step".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    /// Step count p.
    pub fn p(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// BDF1: (1, -1). BDF2: (3/2, -2, 1/2).
pub fn bdf_stencil(order: usize) -> Result<TimeStencil> {
    match order {
        1 => TimeStencil::new(vec![1.0, -1.0]),
        2 => TimeStencil::new(vec![1.5, -2.0, 0.5]),
        _ => Err(Error::InvalidArgument(format!(
            "unsupported backward-difference order {order}"
        ))),
    }
}

/// The coupled space-time system `L u = f` over all N steps.
///
/// The right-hand side folds the source, eliminated boundary data, and the
/// starting values: block n receives `-r_j·M·u^{n-j}` for every stencil tap
/// that reaches below step 1, with pre-initial history frozen at `u⁰`
/// (for BDF2 this means `u^{-1} := u⁰`; the first step degrades to first
/// order, which is accepted and documented).
#[derive(Debug)]
pub struct AllAtOnceSystem {
    pub pair: SpatialPair,
    pub stencil: TimeStencil,
    n_steps: usize,
    tau: f64,
    t_final: f64,
    pub rhs: Vec<f64>,
    pub u0: Vec<f64>,
}

impl AllAtOnceSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        pair: SpatialPair,
        stencil: TimeStencil,
        t_final: f64,
        n_steps: usize,
        source: &dyn Fn(f64, f64, f64) -> f64,
        boundary_data: &dyn Fn(f64, f64, f64) -> f64,
        initial: &dyn Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("need at least one time step".into()));
        }
        if t_final <= 0.0 {
            return Err(Error::InvalidArgument("final time must be positive".into()));
        }
        let j = pair.j();
        let tau = t_final / n_steps as f64;

        if pair.boundary.is_empty() {
            // This pair eliminated Dirichlet data without recording couplings;
            // only homogeneous boundary values are representable.
            let g = grid_boundary_sample(&pair.grid, boundary_data, t_final, n_steps);
            if g > 0.0 {
                return Err(Error::InvalidArgument(
                    "spatial pair does not carry boundary couplings but g is nonzero".into(),
                ));
            }
        }

        let u0: Vec<f64> = (0..j)
            .map(|idx| {
                let (x, y) = pair.grid.coords(idx);
                initial(x, y)
            })
            .collect();
        let mut mu0 = vec![0.0; j];
        pair.mass.spmv(&u0, &mut mu0)?;

        let r = stencil.coeffs().to_vec();
        let mut rhs = vec![0.0; n_steps * j];
        let mut f_nodal = vec![0.0; j];
        for n in 1..=n_steps {
            let t = n as f64 * tau;
            let block = &mut rhs[(n - 1) * j..n * j];
            for (idx, f) in f_nodal.iter_mut().enumerate() {
                let (x, y) = pair.grid.coords(idx);
                *f = source(x, y, t);
            }
            // τ·(load − eliminated boundary terms)
            pair.mass.spmv_add(tau, &f_nodal, block)?;
            for bc in &pair.boundary {
                block[bc.row] -= tau * bc.coef * boundary_data(bc.x, bc.y, t);
            }
            // fold starting values: taps j ≥ n reach u^{n-j} with n-j ≤ 0
            for &rj in r.iter().skip(n) {
                for (b, m) in block.iter_mut().zip(&mu0) {
                    *b -= rj * m;
                }
            }
        }

        Ok(Self {
            pair,
            stencil,
            n_steps,
            tau,
            t_final,
            rhs,
            u0,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn j(&self) -> usize {
        self.pair.j()
    }

    pub fn dofs(&self) -> usize {
        self.n_steps * self.pair.j()
    }

    /// Matrix-free `out = L v` using the block-banded structure: block n is
    /// `Σ_{k=0..min(p,n)} r_k·M·v^{n-k} + τ·K·v^n`, O(N·J) for small p.
    pub fn apply_l(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let j = self.j();
        check_len(self.dofs(), v.len())?;
        check_len(self.dofs(), out.len())?;
        let r = self.stencil.coeffs();
        let p = self.stencil.p();
        out.fill(0.0);
        for n in 0..self.n_steps {
            // split so the output block and the input history blocks coexist
            let block = &mut out[n * j..(n + 1) * j];
            self.pair.stiffness.spmv_add(self.tau, &v[n * j..(n + 1) * j], block)?;
            for (k, &rk) in r.iter().enumerate().take(p.min(n) + 1) {
                let src = &v[(n - k) * j..(n - k + 1) * j];
                self.pair.mass.spmv_add(rk, src, block)?;
            }
        }
        Ok(())
    }
}

fn grid_boundary_sample(
    grid: &Grid2D,
    g: &dyn Fn(f64, f64, f64) -> f64,
    t_final: f64,
    n_steps: usize,
) -> f64 {
    let m = grid.m();
    let times = [t_final / n_steps as f64, 0.5 * t_final, t_final];
    let mut worst: f64 = 0.0;
    for &t in &times {
        for k in 0..=m + 1 {
            for (x, y) in [
                (grid.x(k), grid.y(0)),
                (grid.x(k), grid.y(m + 1)),
                (grid.x(0), grid.y(k)),
                (grid.x(m + 1), grid.y(k)),
            ] {
                worst = worst.max(g(x, y, t).abs());
            }
        }
    }
    worst
}
