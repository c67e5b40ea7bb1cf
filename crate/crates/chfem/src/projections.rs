//! Spatial projections (L²-orthogonal and H¹-elliptic), the discrete
//! chemical potential induced by a projected field, and the temporal
//! operators: piecewise-linear interpolation and piecewise-constant interval
//! averaging on a uniform time grid.
//!
//! Analytic inputs enter only through quadrature-point evaluation; there is
//! no symbolic integration. All solves go through the sparse Cholesky of the
//! (SPD) mass or H¹ Gram operator.

use crate::assembly::{analytic_grad_load, analytic_load, h1_gram, mass_matrix, nonlinear_load, stiffness_matrix};
use crate::error::{Error, Result};
use crate::fespace::{FeField, FeSpace};
use crate::linalg::SpdSolver;
use crate::model::ModelParams;
use crate::quadrature::gauss_legendre_01;
use std::sync::Arc;

/// L²-orthogonal projection of an analytic function: the unique `p ∈ 𝒱_h`
/// with `⟨p − g, v_h⟩ = 0` for every basis function, i.e. one mass solve.
pub fn l2_project(space: &Arc<FeSpace>, g: impl Fn(f64, f64) -> f64) -> Result<FeField> {
    let rhs = analytic_load(space, g);
    let solver = SpdSolver::new(&mass_matrix(space))
        .map_err(|e| Error::LinearSolveFailed(format!("mass operator: {e}")))?;
    Ok(FeField {
        space: space.clone(),
        coeffs: solver.solve(&rhs),
    })
}

/// L²-orthogonal projection of a field living on the same grid or on a
/// nested finer grid. The right side `⟨g, ψ_i⟩` is integrated exactly by
/// looping over *fine* cells (the integrand is polynomial there), so this is
/// an exact transfer up to solver precision.
pub fn l2_project_field(space: &Arc<FeSpace>, g: &FeField) -> Result<FeField> {
    if g.space.mesh.level < space.mesh.level {
        return Err(Error::SpaceNotNested {
            coarse: space.mesh.level,
            fine: g.space.mesh.level,
        });
    }
    let fine = &g.space;
    let scale = fine.mesh.h * fine.mesh.h;
    let rule = &fine.quad_stiff;
    let table = &fine.basis_stiff;
    let mut rhs = vec![0.0; space.dof_count];
    for t in 0..fine.cell_dofs.len() {
        let dofs = &fine.cell_dofs[t];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let vals = &table.values[q];
            let g_q: f64 = (0..6).map(|k| g.coeffs[dofs[k]] * vals[k]).sum();
            let (x, y) = {
                let (xi, eta) = rule.points[q];
                fine.map_to_physical(t, xi, eta)
            };
            let (tc, cxi, ceta) = space.locate(x, y);
            let cvals = crate::fespace::p2_values(cxi, ceta);
            let cdofs = &space.cell_dofs[tc];
            let w = wq * scale * g_q;
            for i in 0..6 {
                rhs[cdofs[i]] += w * cvals[i];
            }
        }
    }
    let solver = SpdSolver::new(&mass_matrix(space))
        .map_err(|e| Error::LinearSolveFailed(format!("mass operator: {e}")))?;
    Ok(FeField {
        space: space.clone(),
        coeffs: solver.solve(&rhs),
    })
}

/// H¹-elliptic projection: the unique `p ∈ 𝒱_h` with
/// `⟨∇(p − g), ∇v_h⟩ + ⟨p − g, v_h⟩ = 0` for all `v_h` (one Gram solve).
pub fn h1_project(
    space: &Arc<FeSpace>,
    g: impl Fn(f64, f64) -> f64,
    g_grad: impl Fn(f64, f64) -> (f64, f64),
) -> Result<FeField> {
    let mut rhs = analytic_load(space, g);
    for (r, gr) in rhs.iter_mut().zip(analytic_grad_load(space, g_grad)) {
        *r += gr;
    }
    let solver = SpdSolver::new(&h1_gram(space))
        .map_err(|e| Error::LinearSolveFailed(format!("H1 Gram operator: {e}")))?;
    Ok(FeField {
        space: space.clone(),
        coeffs: solver.solve(&rhs),
    })
}

/// Discrete chemical potential induced by a projected field `phi_hat`
/// relative to an exact pair `(φ, μ)`: the unique `μ̂ ∈ 𝒱_h` with
///
/// ```text
/// ⟨μ̂ − μ, w⟩ = γ⟨∇φ̂ − ∇φ, ∇w⟩ + ⟨f'(φ̂) − f'(φ), w⟩   ∀ w ∈ 𝒱_h,
/// ```
///
/// realized as one mass solve.
pub fn mu_hat(
    space: &Arc<FeSpace>,
    model: &ModelParams,
    phi_exact: impl Fn(f64, f64) -> f64,
    phi_grad_exact: impl Fn(f64, f64) -> (f64, f64),
    mu_exact: impl Fn(f64, f64) -> f64,
    phi_hat: &FeField,
) -> Result<FeField> {
    let gamma = model.gamma;
    let k = stiffness_matrix(space);
    let mut rhs = analytic_load(space, mu_exact);
    let k_phi_hat = k.matvec(&phi_hat.coeffs);
    let grad_phi = analytic_grad_load(space, phi_grad_exact);
    let load_fp_hat = nonlinear_load(space, phi_hat, model, 1);
    let load_fp_exact = analytic_load(space, |x, y| model.f_eval(phi_exact(x, y), 1));
    for i in 0..rhs.len() {
        rhs[i] += gamma * (k_phi_hat[i] - grad_phi[i]) + load_fp_hat[i] - load_fp_exact[i];
    }
    let solver = SpdSolver::new(&mass_matrix(space))
        .map_err(|e| Error::LinearSolveFailed(format!("mass operator: {e}")))?;
    Ok(FeField {
        space: space.clone(),
        coeffs: solver.solve(&rhs),
    })
}

/// L²(Ω) error `‖field − g‖₀` against an analytic function, by the
/// degree-10 rule per cell.
pub fn analytic_l2_error(field: &FeField, g: impl Fn(f64, f64) -> f64) -> f64 {
    let sp = &field.space;
    let scale = sp.mesh.h * sp.mesh.h;
    let rule = &sp.quad_nonlin;
    let table = &sp.basis_nonlin;
    let mut acc = 0.0;
    for t in 0..sp.cell_dofs.len() {
        let dofs = &sp.cell_dofs[t];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let vals = &table.values[q];
            let u_q: f64 = (0..6).map(|k| field.coeffs[dofs[k]] * vals[k]).sum();
            let (x, y) = {
                let (xi, eta) = rule.points[q];
                sp.map_to_physical(t, xi, eta)
            };
            let d = u_q - g(x, y);
            acc += wq * scale * d * d;
        }
    }
    acc.sqrt()
}

/// Full H¹(Ω) error `(‖field − g‖₀² + ‖∇field − ∇g‖₀²)^{1/2}` against an
/// analytic function with gradient.
pub fn analytic_h1_error(
    field: &FeField,
    g: impl Fn(f64, f64) -> f64,
    g_grad: impl Fn(f64, f64) -> (f64, f64),
) -> f64 {
    let sp = &field.space;
    let scale = sp.mesh.h * sp.mesh.h;
    let rule = &sp.quad_nonlin;
    let table = &sp.basis_nonlin;
    let mut acc = 0.0;
    for t in 0..sp.cell_dofs.len() {
        let dofs = &sp.cell_dofs[t];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let vals = &table.values[q];
            let mut u_q = 0.0;
            let mut gu = (0.0, 0.0);
            for k in 0..6 {
                u_q += field.coeffs[dofs[k]] * vals[k];
                let gk = sp.grad_to_physical(t, table.grads[q][k]);
                gu.0 += field.coeffs[dofs[k]] * gk.0;
                gu.1 += field.coeffs[dofs[k]] * gk.1;
            }
            let (x, y) = {
                let (xi, eta) = rule.points[q];
                sp.map_to_physical(t, xi, eta)
            };
            let d = u_q - g(x, y);
            let gg = g_grad(x, y);
            let (dx, dy) = (gu.0 - gg.0, gu.1 - gg.1);
            acc += wq * scale * (d * d + dx * dx + dy * dy);
        }
    }
    acc.sqrt()
}

/// Uniform time grid `t^n = n·τ`, `n = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub tau: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, n_steps: usize) -> Self {
        Self { tau, n_steps }
    }

    /// Grid covering `[0, t_final]`; `t_final/τ` must be an integer to 1e−12.
    pub fn from_final_time(t_final: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::ValidationError {
                key: "tau".into(),
                reason: format!("step size must be positive and finite, got {tau}"),
            });
        }
        let ratio = t_final / tau;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-12 * n.max(1.0) {
            return Err(Error::ValidationError {
                key: "t_final".into(),
                reason: format!("final time {t_final} is not an integer multiple of tau {tau}"),
            });
        }
        Ok(Self {
            tau,
            n_steps: n as usize,
        })
    }

    pub fn t_end(&self) -> f64 {
        self.tau * self.n_steps as f64
    }

    pub fn node(&self, n: usize) -> f64 {
        self.tau * n as f64
    }
}

/// Piecewise-linear-in-time evaluator built from nodal samples.
#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn eval(&self, t: f64) -> f64 {
        let s = (t / self.grid.tau).clamp(0.0, self.grid.n_steps as f64);
        let k = (s.floor() as usize).min(self.grid.n_steps - 1);
        let theta = s - k as f64;
        (1.0 - theta) * self.values[k] + theta * self.values[k + 1]
    }

    /// Constant slope on interval `k` (between nodes `k` and `k+1`).
    pub fn interval_slope(&self, k: usize) -> f64 {
        (self.values[k + 1] - self.values[k]) / self.grid.tau
    }
}

/// Piecewise-linear interpolation of nodal samples (values at `t^0..t^N`).
pub fn time_interp(grid: TimeGrid, nodal: Vec<f64>) -> PiecewiseLinear {
    assert_eq!(nodal.len(), grid.n_steps + 1, "one value per grid node");
    PiecewiseLinear {
        grid,
        values: nodal,
    }
}

/// Per-interval averages `(1/τ)∫ g dt` by a 3-point Gauss rule (exact for
/// polynomials of degree ≤ 5 per interval).
pub fn time_avg(g: impl Fn(f64) -> f64, grid: &TimeGrid) -> Vec<f64> {
    let gauss = gauss_legendre_01(3);
    (0..grid.n_steps)
        .map(|k| {
            let t0 = grid.node(k);
            gauss
                .iter()
                .map(|&(s, w)| w * g(t0 + s * grid.tau))
                .sum::<f64>()
        })
        .collect()
}

/// `L²(0,T)` distance between `g` and its interval averages (5-point Gauss
/// per interval for the error integrand).
pub fn time_avg_error_l2(g: impl Fn(f64) -> f64, grid: &TimeGrid) -> f64 {
    let bars = time_avg(&g, grid);
    let gauss = gauss_legendre_01(5);
    let mut acc = 0.0;
    for (k, bar) in bars.iter().enumerate() {
        let t0 = grid.node(k);
        for &(s, w) in &gauss {
            let d = g(t0 + s * grid.tau) - bar;
            acc += w * grid.tau * d * d;
        }
    }
    acc.sqrt()
}

/// `L²(0,T)` distance between `g` and its piecewise-linear nodal interpolant.
pub fn time_interp_error_l2(g: impl Fn(f64) -> f64, grid: &TimeGrid) -> f64 {
    let nodal: Vec<f64> = (0..=grid.n_steps).map(|n| g(grid.node(n))).collect();
    let pl = time_interp(*grid, nodal);
    let gauss = gauss_legendre_01(5);
    let mut acc = 0.0;
    for k in 0..grid.n_steps {
        let t0 = grid.node(k);
        for &(s, w) in &gauss {
            let t = t0 + s * grid.tau;
            let d = g(t) - pl.eval(t);
            acc += w * grid.tau * d * d;
        }
    }
    acc.sqrt()
}

/// `‖ū v̄ − (uv)‾‖_{Lᵖ(0,T)}` where the bar is interval averaging. The defect
/// is interval-constant, so the norm is a weighted `ℓᵖ` sum of per-interval
/// values (`p = ∞` gives the max).
pub fn product_projection_defect(
    u: impl Fn(f64) -> f64,
    v: impl Fn(f64) -> f64,
    grid: &TimeGrid,
    p: f64,
) -> f64 {
    let ubar = time_avg(&u, grid);
    let vbar = time_avg(&v, grid);
    let uvbar = time_avg(|t| u(t) * v(t), grid);
    let defects = (0..grid.n_steps).map(|k| (ubar[k] * vbar[k] - uvbar[k]).abs());
    if p.is_infinite() {
        defects.fold(0.0, f64::max)
    } else {
        defects
            .map(|d| grid.tau * d.powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}
