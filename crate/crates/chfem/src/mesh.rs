//! Nested, uniform, periodic triangulations of the unit square.
//!
//! Level `k` has `n = 2^(3+k)` square cells per side, each split along the
//! bottom-left→top-right diagonal into two triangles, so there are `n²`
//! primary vertices, `3n²` edges and `2n²` triangles under periodic
//! identification (vertices on the right/top seam are identifications of the
//! left/bottom ones, never duplicates). Refining a mesh halves `h = 1/n` and
//! is exactly the level-`k+1` mesh: every parent triangle is the union of four
//! children (red refinement), which makes prolongation between the associated
//! P2 spaces exact.

use crate::error::{Error, Result};

/// Resource guard: level 7 is n = 1024, ~4M dofs — beyond desk scale.
pub const MAX_LEVEL: u32 = 7;

/// Mesh width `h` of the level-`k` uniform grid, `1/(8·2^k)`.
pub fn mesh_width(level: u32) -> f64 {
    1.0 / (8u64 << level) as f64
}

/// An edge of the triangulation, identified by its two primary vertex ids and
/// carrying its (unwrapped) midpoint — the coordinate of the P2 edge dof.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    /// Primary vertex ids of the endpoints.
    pub vertices: [usize; 2],
    /// Midpoint coordinate in `[0, 1)²`.
    pub midpoint: (f64, f64),
}

/// A uniform periodic triangulation of `(0,1)²`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// Refinement level `k ≥ 0`.
    pub level: u32,
    /// Cells per side, `n = 2^(3+k)`.
    pub n: usize,
    /// Mesh size `h = 1/n` (cell side; triangle diameter is `√2·h`).
    pub h: f64,
    /// Primary vertex coordinates, lexicographic by `(y, x)`:
    /// vertex `j·n + i` sits at `(i·h, j·h)`.
    pub vertices: Vec<(f64, f64)>,
    /// Vertex-id triples, positively oriented. Square `(i, j)` produces
    /// triangle `2(j·n+i)` (lower: ll, lr, ur) and `2(j·n+i)+1`
    /// (upper: ll, ur, ul).
    pub triangles: Vec<[usize; 3]>,
    /// Edges in dof order: bottom edges of all squares first (`j·n+i`), then
    /// left edges, then diagonals. Edge `e` carries P2 dof `n² + e`.
    pub edges: Vec<Edge>,
    /// Periodic identification of the closure grid: entry `j·(n+1) + i` for
    /// `0 ≤ i, j ≤ n` is the primary id of lattice vertex `(i, j)`; the
    /// seam rows `i = n` / `j = n` resolve to `i = 0` / `j = 0`.
    pub periodic_map: Vec<usize>,
}

impl Mesh {
    /// Build the level-`k` mesh with deterministic ordering.
    pub fn build_uniform(level: u32) -> Result<Mesh> {
        if level > MAX_LEVEL {
            return Err(Error::LevelTooLarge {
                level,
                max: MAX_LEVEL,
            });
        }
        let n = 1usize << (3 + level);
        let h = 1.0 / n as f64;
        let vid = |i: usize, j: usize| (j % n) * n + (i % n);

        let mut vertices = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                vertices.push((i as f64 * h, j as f64 * h));
            }
        }

        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (ll, lr) = (vid(i, j), vid(i + 1, j));
                let (ul, ur) = (vid(i, j + 1), vid(i + 1, j + 1));
                triangles.push([ll, lr, ur]); // lower
                triangles.push([ll, ur, ul]); // upper
            }
        }

        // Edge blocks share the square index s = j·n + i within each block.
        let mut edges = Vec::with_capacity(3 * n * n);
        for j in 0..n {
            for i in 0..n {
                edges.push(Edge {
                    vertices: [vid(i, j), vid(i + 1, j)],
                    midpoint: ((i as f64 + 0.5) * h, j as f64 * h),
                });
            }
        }
        for j in 0..n {
            for i in 0..n {
                edges.push(Edge {
                    vertices: [vid(i, j), vid(i, j + 1)],
                    midpoint: (i as f64 * h, (j as f64 + 0.5) * h),
                });
            }
        }
        for j in 0..n {
            for i in 0..n {
                edges.push(Edge {
                    vertices: [vid(i, j), vid(i + 1, j + 1)],
                    midpoint: ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h),
                });
            }
        }

        let mut periodic_map = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                periodic_map.push(vid(i, j));
            }
        }

        Ok(Mesh {
            level,
            n,
            h,
            vertices,
            triangles,
            edges,
            periodic_map,
        })
    }

    /// Primary vertex id of lattice position `(i, j)`, wrapping periodically.
    #[inline]
    pub fn vertex_id(&self, i: usize, j: usize) -> usize {
        (j % self.n) * self.n + (i % self.n)
    }

    /// Edge index (within `edges`) of the bottom edge of square `(i, j)`.
    #[inline]
    pub fn edge_bottom(&self, i: usize, j: usize) -> usize {
        (j % self.n) * self.n + (i % self.n)
    }

    /// Edge index of the left edge of square `(i, j)`.
    #[inline]
    pub fn edge_left(&self, i: usize, j: usize) -> usize {
        self.n * self.n + (j % self.n) * self.n + (i % self.n)
    }

    /// Edge index of the diagonal edge of square `(i, j)`.
    #[inline]
    pub fn edge_diag(&self, i: usize, j: usize) -> usize {
        2 * self.n * self.n + (j % self.n) * self.n + (i % self.n)
    }

    /// Square index and orientation of triangle `t`: `(i, j, upper)`.
    #[inline]
    pub fn triangle_square(&self, t: usize) -> (usize, usize, bool) {
        let s = t / 2;
        (s % self.n, s / self.n, t % 2 == 1)
    }

    /// Unwrapped corner coordinates of triangle `t` (its true geometry; for
    /// seam triangles these extend beyond 1 while the stored vertex ids wrap).
    pub fn triangle_corners(&self, t: usize) -> [(f64, f64); 3] {
        let (i, j, upper) = self.triangle_square(t);
        let (x0, y0) = (i as f64 * self.h, j as f64 * self.h);
        let (x1, y1) = (x0 + self.h, y0 + self.h);
        if upper {
            [(x0, y0), (x1, y1), (x0, y1)]
        } else {
            [(x0, y0), (x1, y0), (x1, y1)]
        }
    }

    /// The level-`k+1` mesh together with the parent→children triangle map.
    ///
    /// Children of the lower parent in square `(i, j)` are the fine triangles
    /// covering `{y−y₀ ≤ x−x₀}` of the four subsquares; analogously for the
    /// upper parent. The fine mesh is bit-identical to
    /// `build_uniform(level+1)` — no canonicalization step is needed.
    pub fn refine(&self) -> Result<(Mesh, Vec<[usize; 4]>)> {
        let fine = Mesh::build_uniform(self.level + 1)?;
        let n2 = fine.n;
        let lower = |i: usize, j: usize| 2 * (j * n2 + i);
        let upper = |i: usize, j: usize| 2 * (j * n2 + i) + 1;
        let mut children = Vec::with_capacity(self.triangles.len());
        for t in 0..self.triangles.len() {
            let (i, j, is_upper) = self.triangle_square(t);
            let (fi, fj) = (2 * i, 2 * j);
            if is_upper {
                children.push([
                    upper(fi, fj),
                    lower(fi, fj + 1),
                    upper(fi, fj + 1),
                    upper(fi + 1, fj + 1),
                ]);
            } else {
                children.push([
                    lower(fi, fj),
                    lower(fi + 1, fj),
                    upper(fi + 1, fj),
                    lower(fi + 1, fj + 1),
                ]);
            }
        }
        Ok((fine, children))
    }
}
