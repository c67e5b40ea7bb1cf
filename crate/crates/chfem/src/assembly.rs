//! Assembly of the discrete bilinear forms and nonlinear functional vectors.
//!
//! Everything is an element loop over local 6×6 blocks scattered in a fixed
//! element order, so assembled operators are bitwise reproducible. Bilinear
//! P2 forms (mass, stiffness, H¹ Gram) use the degree-4 rule, which is exact
//! for their degree-≤4 integrands. Every form involving `b(φ_h)` or a
//! derivative of `f(φ_h)` uses the degree-10 rule, which is exact for the
//! worst case `b(φ_h) ∇μ_h·∇v_h` (degree 10); with polynomial `f` and `b` the
//! assembled forms therefore *are* the Galerkin forms, not approximations,
//! which is what makes the discrete mass/energy identities hold to solver
//! tolerance.

use crate::fespace::{FeField, FeSpace};
use crate::linalg::SparseOperator;
use crate::model::ModelParams;

/// Physical basis gradients at one quadrature point of triangle `t`.
#[inline]
fn physical_grads(space: &FeSpace, t: usize, ref_grads: &[(f64, f64); 6]) -> [(f64, f64); 6] {
    let mut out = [(0.0, 0.0); 6];
    for k in 0..6 {
        out[k] = space.grad_to_physical(t, ref_grads[k]);
    }
    out
}

/// Mass matrix `⟨u, v⟩` (degree-4 rule; exact).
pub fn mass_matrix(space: &FeSpace) -> SparseOperator {
    bilinear_p2(space, 1.0, 0.0)
}

/// Stiffness matrix `⟨∇u, ∇v⟩` (degree-4 rule; exact).
pub fn stiffness_matrix(space: &FeSpace) -> SparseOperator {
    bilinear_p2(space, 0.0, 1.0)
}

/// H¹ Gram operator `⟨u, v⟩ + ⟨∇u, ∇v⟩`, assembled in one pass so there is a
/// single canonical Gram everywhere (Riesz maps, dual norms, H¹ errors).
pub fn h1_gram(space: &FeSpace) -> SparseOperator {
    bilinear_p2(space, 1.0, 1.0)
}

/// Shared kernel for `cm·⟨u,v⟩ + ck·⟨∇u,∇v⟩`.
fn bilinear_p2(space: &FeSpace, cm: f64, ck: f64) -> SparseOperator {
    let scale = space.mesh.h * space.mesh.h;
    let rule = &space.quad_stiff;
    let table = &space.basis_stiff;
    let mut triplets = Vec::with_capacity(space.cell_dofs.len() * 36);
    for t in 0..space.cell_dofs.len() {
        let dofs = &space.cell_dofs[t];
        let mut local = [[0.0f64; 6]; 6];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let vals = &table.values[q];
            let grads = physical_grads(space, t, &table.grads[q]);
            let w = wq * scale;
            for i in 0..6 {
                for j in 0..6 {
                    local[i][j] += w
                        * (cm * vals[i] * vals[j]
                            + ck * (grads[i].0 * grads[j].0 + grads[i].1 * grads[j].1));
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                triplets.push((dofs[i], dofs[j], local[i][j]));
            }
        }
    }
    SparseOperator::from_triplets(space.dof_count, space.dof_count, triplets)
}

/// Weighted stiffness `∫ w(φ_h) ∇ψ_j·∇ψ_i` with the degree-10 rule.
pub fn weighted_stiffness(
    space: &FeSpace,
    phi: &FeField,
    weight: impl Fn(f64) -> f64,
) -> SparseOperator {
    weighted_stiffness_multi(space, &[phi], |v| weight(v[0]))
}

/// Weighted stiffness whose pointwise weight depends on several fields
/// evaluated at the quadrature point (used e.g. for directional-derivative
/// checks with weight `b'(φ)·v`).
pub fn weighted_stiffness_multi(
    space: &FeSpace,
    fields: &[&FeField],
    weight: impl Fn(&[f64]) -> f64,
) -> SparseOperator {
    let scale = space.mesh.h * space.mesh.h;
    let rule = &space.quad_nonlin;
    let table = &space.basis_nonlin;
    let mut vals_at_q = vec![0.0; fields.len()];
    let mut triplets = Vec::with_capacity(space.cell_dofs.len() * 36);
    for t in 0..space.cell_dofs.len() {
        let dofs = &space.cell_dofs[t];
        let mut local = [[0.0f64; 6]; 6];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let vals = &table.values[q];
            let grads = physical_grads(space, t, &table.grads[q]);
            for (fi, f) in fields.iter().enumerate() {
                vals_at_q[fi] = (0..6).map(|k| f.coeffs[dofs[k]] * vals[k]).sum();
            }
            let w = wq * scale * weight(&vals_at_q);
            for i in 0..6 {
                for j in 0..6 {
                    local[i][j] += w * (grads[i].0 * grads[j].0 + grads[i].1 * grads[j].1);
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                triplets.push((dofs[i], dofs[j], local[i][j]));
            }
        }
    }
    SparseOperator::from_triplets(space.dof_count, space.dof_count, triplets)
}

/// Weighted mass `∫ w(φ_h) ψ_j ψ_i` with the degree-10 rule (the `f''`
/// Jacobian block of the potential term).
pub fn weighted_mass(space: &FeSpace, phi: &FeField, weight: impl Fn(f64) -> f64) -> SparseOperator {
    let scale = space.mesh.h * space.mesh.h;
    let rule = &space.quad_nonlin;
    let table = &space.basis_nonlin;
    let mut triplets = Vec::with_capacity(space.cell_dofs.len() * 36);
    for t in 0..space.cell_dofs.len() {
        let dofs = &space.cell_dofs[t];
        let mut local = [[0.0f64; 6]; 6];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let vals = &table.values[q];
            let phi_q: f64 = (0..6).map(|k| phi.coeffs[dofs[k]] * vals[k]).sum();
            let w = wq * scale * weight(phi_q);
            for i in 0..6 {
                for j in 0..6 {
                    local[i][j] += w * vals[i] * vals[j];
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                triplets.push((dofs[i], dofs[j], local[i][j]));
            }
        }
    }
    SparseOperator::from_triplets(space.dof_count, space.dof_count, triplets)
}

/// Mobility Jacobian `∫ b'(φ_h) ψ_j (∇μ_h·∇ψ_i)`: the exact derivative of the
/// mobility term with respect to the φ coefficients. Nonsymmetric.
pub fn mobility_jacobian(
    space: &FeSpace,
    phi: &FeField,
    mu: &FeField,
    weight_deriv: impl Fn(f64) -> f64,
) -> SparseOperator {
    let scale = space.mesh.h * space.mesh.h;
    let rule = &space.quad_nonlin;
    let table = &space.basis_nonlin;
    let mut triplets = Vec::with_capacity(space.cell_dofs.len() * 36);
    for t in 0..space.cell_dofs.len() {
        let dofs = &space.cell_dofs[t];
        let mut local = [[0.0f64; 6]; 6];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let vals = &table.values[q];
            let grads = physical_grads(space, t, &table.grads[q]);
            let phi_q: f64 = (0..6).map(|k| phi.coeffs[dofs[k]] * vals[k]).sum();
            let mut gmu = (0.0, 0.0);
            for k in 0..6 {
                gmu.0 += mu.coeffs[dofs[k]] * grads[k].0;
                gmu.1 += mu.coeffs[dofs[k]] * grads[k].1;
            }
            let w = wq * scale * weight_deriv(phi_q);
            for i in 0..6 {
                let flux = gmu.0 * grads[i].0 + gmu.1 * grads[i].1;
                for j in 0..6 {
                    local[i][j] += w * vals[j] * flux;
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                triplets.push((dofs[i], dofs[j], local[i][j]));
            }
        }
    }
    SparseOperator::from_triplets(space.dof_count, space.dof_count, triplets)
}

/// Potential load `∫ f⁽ᵒʳᵈᵉʳ⁾(φ_h) ψ_i` for order 1 or 2 (degree-10 rule).
pub fn nonlinear_load(
    space: &FeSpace,
    phi: &FeField,
    model: &ModelParams,
    derivative_order: usize,
) -> Vec<f64> {
    assert!(
        derivative_order == 1 || derivative_order == 2,
        "load is defined for f' and f''"
    );
    let scale = space.mesh.h * space.mesh.h;
    let rule = &space.quad_nonlin;
    let table = &space.basis_nonlin;
    let mut load = vec![0.0; space.dof_count];
    for t in 0..space.cell_dofs.len() {
        let dofs = &space.cell_dofs[t];
        let mut local = [0.0f64; 6];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let vals = &table.values[q];
            let phi_q: f64 = (0..6).map(|k| phi.coeffs[dofs[k]] * vals[k]).sum();
            let w = wq * scale * model.f_eval(phi_q, derivative_order);
            for i in 0..6 {
                local[i] += w * vals[i];
            }
        }
        for i in 0..6 {
            load[dofs[i]] += local[i];
        }
    }
    load
}

/// Load vector `∫ g ψ_i` for an analytic integrand evaluated at the physical
/// quadrature points (degree-10 rule).
pub fn analytic_load(space: &FeSpace, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let scale = space.mesh.h * space.mesh.h;
    let rule = &space.quad_nonlin;
    let table = &space.basis_nonlin;
    let mut load = vec![0.0; space.dof_count];
    for t in 0..space.cell_dofs.len() {
        let dofs = &space.cell_dofs[t];
        let mut local = [0.0f64; 6];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let (x, y) = {
                let (xi, eta) = rule.points[q];
                space.map_to_physical(t, xi, eta)
            };
            let vals = &table.values[q];
            let w = wq * scale * g(x, y);
            for i in 0..6 {
                local[i] += w * vals[i];
            }
        }
        for i in 0..6 {
            load[dofs[i]] += local[i];
        }
    }
    load
}

/// Load vector `∫ G(x)·∇ψ_i` for an analytic vector field (used for the
/// gradient part of elliptic-projection right sides).
pub fn analytic_grad_load(space: &FeSpace, g_grad: impl Fn(f64, f64) -> (f64, f64)) -> Vec<f64> {
    let scale = space.mesh.h * space.mesh.h;
    let rule = &space.quad_nonlin;
    let table = &space.basis_nonlin;
    let mut load = vec![0.0; space.dof_count];
    for t in 0..space.cell_dofs.len() {
        let dofs = &space.cell_dofs[t];
        let mut local = [0.0f64; 6];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let (x, y) = {
                let (xi, eta) = rule.points[q];
                space.map_to_physical(t, xi, eta)
            };
            let grads = physical_grads(space, t, &table.grads[q]);
            let gv = g_grad(x, y);
            let w = wq * scale;
            for i in 0..6 {
                local[i] += w * (gv.0 * grads[i].0 + gv.1 * grads[i].1);
            }
        }
        for i in 0..6 {
            load[dofs[i]] += local[i];
        }
    }
    load
}

/// The four time-averaged forms of one Petrov-Galerkin step, assembled in a
/// single fused element loop. With `φ(s) = φ_prev + s(φ_new − φ_prev)` linear
/// in the interval parameter and a Gauss rule in `s` (3 points: exact for the
/// degree-≤5 integrands below), the pointwise weights are
///
/// ```text
/// w̄(x)   = Σ_g ω_g b(φ(x, s_g))          (mobility average)
/// ĵ(x)   = Σ_g ω_g s_g b'(φ(x, s_g))     (its φ-derivative weight)
/// f̄'(x)  = Σ_g ω_g f'(φ(x, s_g))         (potential average)
/// f̂''(x) = Σ_g ω_g s_g f''(φ(x, s_g))    (its φ-derivative weight)
/// ```
pub struct TimeAveragedForms {
    /// `∫ w̄ ∇ψ_j·∇ψ_i` — the time-averaged mobility stiffness.
    pub w_bar: SparseOperator,
    /// `∫ ĵ ψ_j (∇μ·∇ψ_i)` — mobility Jacobian block (nonsymmetric).
    pub j_mob: SparseOperator,
    /// `∫ f̂'' ψ_j ψ_i` — potential Jacobian block.
    pub m_fpp: SparseOperator,
    /// `∫ f̄' ψ_i` — time-averaged potential load.
    pub load_fp: Vec<f64>,
}

/// Assemble [`TimeAveragedForms`] for the interval from `phi_prev` to
/// `phi_new` with interval-constant `mu`, using the Gauss rule `s_rule` on
/// `[0, 1]` (pairs of node and weight).
pub fn time_averaged_forms(
    space: &FeSpace,
    model: &ModelParams,
    phi_prev: &[f64],
    phi_new: &[f64],
    mu: &[f64],
    s_rule: &[(f64, f64)],
) -> TimeAveragedForms {
    let nd = space.dof_count;
    let scale = space.mesh.h * space.mesh.h;
    let rule = &space.quad_nonlin;
    let table = &space.basis_nonlin;
    let ncells = space.cell_dofs.len();
    let mut trip_w = Vec::with_capacity(ncells * 36);
    let mut trip_j = Vec::with_capacity(ncells * 36);
    let mut trip_m = Vec::with_capacity(ncells * 36);
    let mut load_fp = vec![0.0; nd];
    for t in 0..ncells {
        let dofs = &space.cell_dofs[t];
        let mut w_loc = [[0.0f64; 6]; 6];
        let mut j_loc = [[0.0f64; 6]; 6];
        let mut m_loc = [[0.0f64; 6]; 6];
        let mut f_loc = [0.0f64; 6];
        for (q, &wq) in rule.weights.iter().enumerate() {
            let vals = &table.values[q];
            let grads = physical_grads(space, t, &table.grads[q]);
            let mut prev_q = 0.0;
            let mut new_q = 0.0;
            let mut gmu = (0.0, 0.0);
            for k in 0..6 {
                let d = dofs[k];
                prev_q += phi_prev[d] * vals[k];
                new_q += phi_new[d] * vals[k];
                gmu.0 += mu[d] * grads[k].0;
                gmu.1 += mu[d] * grads[k].1;
            }
            let (mut bbar, mut jw, mut fbar, mut fppw) = (0.0, 0.0, 0.0, 0.0);
            for &(s, omega) in s_rule {
                let phi_s = prev_q + s * (new_q - prev_q);
                bbar += omega * model.b_eval(phi_s, 0);
                jw += omega * s * model.b_eval(phi_s, 1);
                fbar += omega * model.f_eval(phi_s, 1);
                fppw += omega * s * model.f_eval(phi_s, 2);
            }
            let w = wq * scale;
            for i in 0..6 {
                let flux = gmu.0 * grads[i].0 + gmu.1 * grads[i].1;
                f_loc[i] += w * fbar * vals[i];
                for j in 0..6 {
                    w_loc[i][j] +=
                        w * bbar * (grads[i].0 * grads[j].0 + grads[i].1 * grads[j].1);
                    j_loc[i][j] += w * jw * vals[j] * flux;
                    m_loc[i][j] += w * fppw * vals[i] * vals[j];
                }
            }
        }
        for i in 0..6 {
            load_fp[dofs[i]] += f_loc[i];
            for j in 0..6 {
                trip_w.push((dofs[i], dofs[j], w_loc[i][j]));
                trip_j.push((dofs[i], dofs[j], j_loc[i][j]));
                trip_m.push((dofs[i], dofs[j], m_loc[i][j]));
            }
        }
    }
    TimeAveragedForms {
        w_bar: SparseOperator::from_triplets(nd, nd, trip_w),
        j_mob: SparseOperator::from_triplets(nd, nd, trip_j),
        m_fpp: SparseOperator::from_triplets(nd, nd, trip_m),
        load_fp,
    }
}
