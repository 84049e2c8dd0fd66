//! The three built-in evolutionary PDE problems.
//!
//! * `heat-const`: heat equation on the unit square, constant diffusivity
//!   `a = 1e-5`, zero source and boundary data, `u₀ = x(x-1)y(y-1)`,
//!   bilinear-element spatial pair (sine-transform diagonalizable).
//! * `heat-var`: heat equation with `a(x,y) = 1e-5·sin(πxy)` and a
//!   manufactured source so the exact solution is
//!   `u = exp(-t)·x(1-x)y(1-y)`; finite-difference spatial pair.
//! * `convdiff`: convection-diffusion with circulating wind
//!   `(2y(1-x²), -2x(1-y²))`, diffusion `1/200`, hot wall `x = 1` ramping in
//!   as `1 - exp(-10t)`, on `(-1,1)²`; upwinded finite differences.

use serde::{Deserialize, Serialize};

use crate::discretization::{
    bdf_stencil, build_convdiff, build_heat_fd, build_heat_q1, AllAtOnceSystem, Coefficient,
    Grid2D, SpatialPair,
};
use crate::error::{Error, Result};
use crate::multigrid::CoarseOperators;

pub const HEAT_DIFFUSIVITY: f64 = 1e-5;
pub const CONVDIFF_DIFFUSION: f64 = 1.0 / 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    HeatConst,
    HeatVar,
    ConvDiff,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::HeatConst => "heat-const",
            ProblemKind::HeatVar => "heat-var",
            ProblemKind::ConvDiff => "convdiff",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "heat-const" => Ok(ProblemKind::HeatConst),
            "heat-var" => Ok(ProblemKind::HeatVar),
            "convdiff" => Ok(ProblemKind::ConvDiff),
            _ => Err(Error::Config(format!("unknown problem '{s}'"))),
        }
    }
}

fn heat_initial(x: f64, y: f64) -> f64 {
    x * (x - 1.0) * y * (y - 1.0)
}

fn heat_var_coefficient(x: f64, y: f64) -> f64 {
    HEAT_DIFFUSIVITY * (std::f64::consts::PI * x * y).sin()
}

/// Source consistent with `u = exp(-t)x(1-x)y(1-y)` under
/// `∂_t u = ∇·(a∇u) + f` with `a = 1e-5·sin(πxy)`:
/// `f = ∂_t u - a·Δu - ∇a·∇u`.
fn heat_var_source(x: f64, y: f64, t: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let e = (-t).exp();
    let gx = x * (1.0 - x);
    let gy = y * (1.0 - y);
    let a = heat_var_coefficient(x, y);
    let da = HEAT_DIFFUSIVITY * pi * (pi * x * y).cos();
    e * (-gx * gy + 2.0 * a * (gx + gy)
        - da * (y * y * (1.0 - y) * (1.0 - 2.0 * x) + x * x * (1.0 - x) * (1.0 - 2.0 * y)))
}

fn heat_var_exact(x: f64, y: f64, t: f64) -> f64 {
    (-t).exp() * x * (1.0 - x) * y * (1.0 - y)
}

pub fn convdiff_wind(x: f64, y: f64) -> (f64, f64) {
    (2.0 * y * (1.0 - x * x), -2.0 * x * (1.0 - y * y))
}

fn zero2(_x: f64, _y: f64) -> f64 {
    0.0
}

fn zero3(_x: f64, _y: f64, _t: f64) -> f64 {
    0.0
}

/// Build the spatial pair of a problem at `m` interior points per dimension.
pub fn spatial_pair(kind: ProblemKind, m: usize) -> Result<SpatialPair> {
    match kind {
        ProblemKind::HeatConst => {
            build_heat_q1(Grid2D::unit_square(m)?, HEAT_DIFFUSIVITY)
        }
        ProblemKind::HeatVar => build_heat_fd(
            Grid2D::unit_square(m)?,
            &Coefficient::Varying(&heat_var_coefficient),
        ),
        ProblemKind::ConvDiff => build_convdiff(
            Grid2D::new(m, (-1.0, 1.0), (-1.0, 1.0))?,
            CONVDIFF_DIFFUSION,
            &convdiff_wind,
        ),
    }
}

/// Assemble the all-at-once system of a problem.
pub fn build_system(
    kind: ProblemKind,
    scheme_order: usize,
    m: usize,
    n_steps: usize,
    t_final: f64,
) -> Result<AllAtOnceSystem> {
    let pair = spatial_pair(kind, m)?;
    let stencil = bdf_stencil(scheme_order)?;
    match kind {
        ProblemKind::HeatConst => AllAtOnceSystem::assemble(
            pair,
            stencil,
            t_final,
            n_steps,
            &zero3,
            &zero3,
            &heat_initial,
        ),
        ProblemKind::HeatVar => AllAtOnceSystem::assemble(
            pair,
            stencil,
            t_final,
            n_steps,
            &heat_var_source,
            &zero3,
            &heat_initial,
        ),
        ProblemKind::ConvDiff => {
            let x_wall = 1.0;
            let g = move |x: f64, _y: f64, t: f64| {
                if (x - x_wall).abs() < 1e-12 {
                    1.0 - (-10.0 * t).exp()
                } else {
                    0.0
                }
            };
            AllAtOnceSystem::assemble(pair, stencil, t_final, n_steps, &zero3, &g, &zero2)
        }
    }
}

/// Exact solution when the problem has one.
pub fn exact_solution(kind: ProblemKind) -> Option<fn(f64, f64, f64) -> f64> {
    match kind {
        ProblemKind::HeatVar => Some(heat_var_exact),
        _ => None,
    }
}

/// Exact solution sampled on the full space-time mesh of `system`.
pub fn exact_on_mesh(kind: ProblemKind, system: &AllAtOnceSystem) -> Option<Vec<f64>> {
    let exact = exact_solution(kind)?;
    let j = system.j();
    let tau = system.tau();
    let mut u = Vec::with_capacity(system.dofs());
    for n in 1..=system.n_steps() {
        let t = n as f64 * tau;
        for idx in 0..j {
            let (x, y) = system.pair.grid.coords(idx);
            u.push(exact(x, y, t));
        }
    }
    Some(u)
}

/// Coarse-operator strategy for the multigrid inner solver: constant
/// coefficients re-discretize exactly, varying ones use the Galerkin product.
pub fn coarse_operators(kind: ProblemKind) -> CoarseOperators {
    match kind {
        ProblemKind::HeatConst => CoarseOperators::Rediscretize(Box::new(move |m| {
            build_heat_q1(Grid2D::unit_square(m)?, HEAT_DIFFUSIVITY)
        })),
        _ => CoarseOperators::Galerkin,
    }
}
