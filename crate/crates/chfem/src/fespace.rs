//! Periodic P2 Lagrange finite elements over a [`Mesh`].
//!
//! Dofs are the function values at the primary vertices (first `n²` indices)
//! and at the edge midpoints (`3n²` more, in the mesh's edge order), giving
//! `4n²` dofs. On the reference triangle with vertices (0,0), (1,0), (0,1)
//! and barycentric coordinates `λ₀ = 1−ξ−η, λ₁ = ξ, λ₂ = η`, the local basis
//! is ordered as
//!
//! ```text
//! N₀..N₂ = λᵢ(2λᵢ − 1)          (vertex functions)
//! N₃ = 4λ₁λ₂,  N₄ = 4λ₀λ₂,  N₅ = 4λ₀λ₁   (midpoints of edges 12, 02, 01)
//! ```
//!
//! Both element classes (lower/upper of each square) are translates of two
//! fixed affine maps, so Jacobians are constant per class and all geometry is
//! exact in binary floating point (coordinates are dyadic rationals).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::TriangleRule;

/// Reference basis values at a reference point.
#[inline]
pub fn p2_values(xi: f64, eta: f64) -> [f64; 6] {
    let l0 = 1.0 - xi - eta;
    let (l1, l2) = (xi, eta);
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l1 * l2,
        4.0 * l0 * l2,
        4.0 * l0 * l1,
    ]
}

/// Reference basis gradients (∂/∂ξ, ∂/∂η) at a reference point.
#[inline]
pub fn p2_gradients(xi: f64, eta: f64) -> [(f64, f64); 6] {
    let l0 = 1.0 - xi - eta;
    let (l1, l2) = (xi, eta);
    [
        (1.0 - 4.0 * l0, 1.0 - 4.0 * l0),
        (4.0 * l1 - 1.0, 0.0),
        (0.0, 4.0 * l2 - 1.0),
        (4.0 * l2, 4.0 * l1),
        (-4.0 * l2, 4.0 * (l0 - l2)),
        (4.0 * (l0 - l1), -4.0 * l1),
    ]
}

/// Precomputed reference basis table at the points of one quadrature rule.
#[derive(Debug, Clone)]
pub struct BasisTable {
    /// `values[q][i]` = Nᵢ at quadrature point q.
    pub values: Vec<[f64; 6]>,
    /// `grads[q][i]` = reference gradient of Nᵢ at quadrature point q.
    pub grads: Vec<[(f64, f64); 6]>,
}

impl BasisTable {
    fn for_rule(rule: &TriangleRule) -> BasisTable {
        BasisTable {
            values: rule.points.iter().map(|&(x, y)| p2_values(x, y)).collect(),
            grads: rule
                .points
                .iter()
                .map(|&(x, y)| p2_gradients(x, y))
                .collect(),
        }
    }
}

/// The periodic P2 space over a mesh, with its quadrature rules and reference
/// basis tables. Immutable; share via [`Arc`].
#[derive(Debug)]
pub struct FeSpace {
    /// The underlying triangulation.
    pub mesh: Mesh,
    /// `4n²`: vertex dofs first, then edge-midpoint dofs in mesh edge order.
    pub dof_count: usize,
    /// Per-triangle global dof indices in local basis order.
    pub cell_dofs: Vec<[usize; 6]>,
    /// Representative coordinate of each dof (in `[0,1)²`).
    pub dof_coords: Vec<(f64, f64)>,
    /// Degree-4 rule: exact for all bilinear P2 integrands.
    pub quad_stiff: TriangleRule,
    /// Degree-10 rule: exact for all nonlinear terms of the quartic model.
    pub quad_nonlin: TriangleRule,
    /// Basis table at the degree-4 points.
    pub basis_stiff: BasisTable,
    /// Basis table at the degree-10 points.
    pub basis_nonlin: BasisTable,
}

/// Build the P2 space for a mesh (deterministic dof numbering: vertices
/// first, then edges).
pub fn build_space(mesh: Mesh) -> Arc<FeSpace> {
    let n = mesh.n;
    let nv = n * n;
    let dof_count = 4 * nv;

    let mut cell_dofs = Vec::with_capacity(mesh.triangles.len());
    for t in 0..mesh.triangles.len() {
        let (i, j, upper) = mesh.triangle_square(t);
        let tri = mesh.triangles[t];
        let dofs = if upper {
            // v0 = ll, v1 = ur, v2 = ul; edge 12 is the bottom edge of the
            // square above, edge 02 the left edge, edge 01 the diagonal.
            [
                tri[0],
                tri[1],
                tri[2],
                nv + mesh.edge_bottom(i, j + 1),
                nv + mesh.edge_left(i, j),
                nv + mesh.edge_diag(i, j),
            ]
        } else {
            // v0 = ll, v1 = lr, v2 = ur; edge 12 is the left edge of the
            // square to the right, edge 02 the diagonal, edge 01 the bottom.
            [
                tri[0],
                tri[1],
                tri[2],
                nv + mesh.edge_left(i + 1, j),
                nv + mesh.edge_diag(i, j),
                nv + mesh.edge_bottom(i, j),
            ]
        };
        cell_dofs.push(dofs);
    }

    let mut dof_coords = Vec::with_capacity(dof_count);
    dof_coords.extend_from_slice(&mesh.vertices);
    dof_coords.extend(mesh.edges.iter().map(|e| e.midpoint));

    let quad_stiff = TriangleRule::degree4();
    let quad_nonlin = TriangleRule::degree10();
    let basis_stiff = BasisTable::for_rule(&quad_stiff);
    let basis_nonlin = BasisTable::for_rule(&quad_nonlin);

    Arc::new(FeSpace {
        mesh,
        dof_count,
        cell_dofs,
        dof_coords,
        quad_stiff,
        quad_nonlin,
        basis_stiff,
        basis_nonlin,
    })
}

impl FeSpace {
    /// Map a reference point of triangle `t` to physical coordinates.
    #[inline]
    pub fn map_to_physical(&self, t: usize, xi: f64, eta: f64) -> (f64, f64) {
        let (i, j, upper) = self.mesh.triangle_square(t);
        let h = self.mesh.h;
        let (x0, y0) = (i as f64 * h, j as f64 * h);
        if upper {
            (x0 + h * xi, y0 + h * (xi + eta))
        } else {
            (x0 + h * (xi + eta), y0 + h * eta)
        }
    }

    /// Transform a reference gradient on triangle `t` to a physical gradient.
    #[inline]
    pub fn grad_to_physical(&self, t: usize, g: (f64, f64)) -> (f64, f64) {
        let inv_h = self.mesh.n as f64;
        if t % 2 == 1 {
            // upper: x = x0 + hξ, y = y0 + h(ξ+η)
            ((g.0 - g.1) * inv_h, g.1 * inv_h)
        } else {
            // lower: x = x0 + h(ξ+η), y = y0 + hη
            (g.0 * inv_h, (g.1 - g.0) * inv_h)
        }
    }

    /// Locate the triangle containing a point (wrapped to `[0,1)²`) and its
    /// reference coordinates there.
    pub fn locate(&self, x: f64, y: f64) -> (usize, f64, f64) {
        let n = self.mesh.n;
        let wrap = |v: f64| {
            let w = v - v.floor();
            if w >= 1.0 {
                0.0
            } else {
                w
            }
        };
        let (x, y) = (wrap(x), wrap(y));
        let u = x * n as f64;
        let v = y * n as f64;
        let i = (u.floor() as usize).min(n - 1);
        let j = (v.floor() as usize).min(n - 1);
        let (uu, vv) = (u - i as f64, v - j as f64);
        let t = 2 * (j * n + i);
        if vv <= uu {
            (t, uu - vv, vv) // lower
        } else {
            (t + 1, uu, vv - uu) // upper
        }
    }

    /// Nodal interpolation: coefficients are `g` at the dof coordinates.
    pub fn interpolate(self: &Arc<Self>, g: impl Fn(f64, f64) -> f64) -> FeField {
        let coeffs = self.dof_coords.iter().map(|&(x, y)| g(x, y)).collect();
        FeField {
            space: Arc::clone(self),
            coeffs,
        }
    }

    /// The zero field.
    pub fn zero_field(self: &Arc<Self>) -> FeField {
        FeField {
            space: Arc::clone(self),
            coeffs: vec![0.0; self.dof_count],
        }
    }

    /// Wrap a coefficient vector as a field.
    pub fn field_from_coeffs(self: &Arc<Self>, coeffs: Vec<f64>) -> FeField {
        assert_eq!(coeffs.len(), self.dof_count);
        FeField {
            space: Arc::clone(self),
            coeffs,
        }
    }
}

/// A scalar P2 field: coefficient vector over a shared space.
#[derive(Debug, Clone)]
pub struct FeField {
    /// The space the coefficients refer to.
    pub space: Arc<FeSpace>,
    /// One value per dof (Lagrange coefficients).
    pub coeffs: Vec<f64>,
}

impl FeField {
    /// Evaluate at a point (periodic wrapping applied).
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (t, xi, eta) = self.space.locate(x, y);
        self.eval_on_cell(t, xi, eta)
    }

    /// Evaluate value and gradient at a point.
    pub fn eval_grad(&self, x: f64, y: f64) -> (f64, (f64, f64)) {
        let (t, xi, eta) = self.space.locate(x, y);
        let dofs = &self.space.cell_dofs[t];
        let vals = p2_values(xi, eta);
        let grads = p2_gradients(xi, eta);
        let mut v = 0.0;
        let mut g = (0.0, 0.0);
        for k in 0..6 {
            let c = self.coeffs[dofs[k]];
            v += c * vals[k];
            g.0 += c * grads[k].0;
            g.1 += c * grads[k].1;
        }
        (v, self.space.grad_to_physical(t, g))
    }

    /// Evaluate on a given triangle at reference coordinates (used by the
    /// continuity tests to compare the two sides of a shared edge).
    pub fn eval_on_cell(&self, t: usize, xi: f64, eta: f64) -> f64 {
        let dofs = &self.space.cell_dofs[t];
        let vals = p2_values(xi, eta);
        (0..6).map(|k| self.coeffs[dofs[k]] * vals[k]).sum()
    }

    /// Batch evaluation.
    pub fn eval_points(&self, points: &[(f64, f64)]) -> Vec<f64> {
        points.iter().map(|&(x, y)| self.eval(x, y)).collect()
    }

    /// `∫ u dx` over the periodic square (degree-4 rule; exact for P2).
    pub fn integral(&self) -> f64 {
        let space = &self.space;
        let scale = space.mesh.h * space.mesh.h; // |det J|
        let mut total = 0.0;
        for t in 0..space.cell_dofs.len() {
            let dofs = &space.cell_dofs[t];
            for (q, w) in space.quad_stiff.weights.iter().enumerate() {
                let vals = &space.basis_stiff.values[q];
                let u: f64 = (0..6).map(|k| self.coeffs[dofs[k]] * vals[k]).sum();
                total += w * scale * u;
            }
        }
        total
    }

    /// `‖u‖₀²` by direct element-loop quadrature (exact for P2).
    pub fn l2_norm_sq(&self) -> f64 {
        let space = &self.space;
        let scale = space.mesh.h * space.mesh.h;
        let mut total = 0.0;
        for t in 0..space.cell_dofs.len() {
            let dofs = &space.cell_dofs[t];
            for (q, w) in space.quad_stiff.weights.iter().enumerate() {
                let vals = &space.basis_stiff.values[q];
                let u: f64 = (0..6).map(|k| self.coeffs[dofs[k]] * vals[k]).sum();
                total += w * scale * u * u;
            }
        }
        total
    }

    /// `‖∇u‖₀²` by direct element-loop quadrature (exact for P2).
    pub fn h1_seminorm_sq(&self) -> f64 {
        let space = &self.space;
        let scale = space.mesh.h * space.mesh.h;
        let mut total = 0.0;
        for t in 0..space.cell_dofs.len() {
            let dofs = &space.cell_dofs[t];
            for (q, w) in space.quad_stiff.weights.iter().enumerate() {
                let grads = &space.basis_stiff.grads[q];
                let mut g = (0.0, 0.0);
                for k in 0..6 {
                    let c = self.coeffs[dofs[k]];
                    g.0 += c * grads[k].0;
                    g.1 += c * grads[k].1;
                }
                let g = space.grad_to_physical(t, g);
                total += w * scale * (g.0 * g.0 + g.1 * g.1);
            }
        }
        total
    }

    /// Sample on a uniform m×m grid (rows `(x, y, value)`), the snapshot
    /// format of the CLI.
    pub fn sample_grid(&self, m: usize) -> Vec<(f64, f64, f64)> {
        let mut rows = Vec::with_capacity(m * m);
        for jj in 0..m {
            for ii in 0..m {
                let x = ii as f64 / m as f64;
                let y = jj as f64 / m as f64;
                rows.push((x, y, self.eval(x, y)));
            }
        }
        rows
    }
}

/// Exact prolongation of a coarse field into the next-finer space.
///
/// A P2 function restricted to a child triangle is still quadratic, so nodal
/// interpolation of the coarse field at the fine dof coordinates reproduces
/// it exactly (all dof coordinates are dyadic, so point location is exact).
pub fn prolong(field: &FeField, fine: &Arc<FeSpace>) -> Result<FeField> {
    let coarse_level = field.space.mesh.level;
    if fine.mesh.level != coarse_level + 1 {
        return Err(Error::SpaceNotNested {
            coarse: coarse_level,
            fine: fine.mesh.level,
        });
    }
    Ok(fine.interpolate(|x, y| field.eval(x, y)))
}
