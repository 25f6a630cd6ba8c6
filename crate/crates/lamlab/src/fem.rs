//! P1 finite elements on structured triangulations of rectangles.
//!
//! The mesh is implicit: a uniform grid of cells, each cut into two right
//! triangles along the same diagonal, with vertices and connectivity
//! computed from indices on demand. Only nodal values are ever stored, so a
//! mesh with tens of millions of vertices costs one flat vector. Gradients
//! of P1 functions are constant per triangle and evaluated in closed form
//! from the three corner values.
//!
//! Integral quantities (`energy`, `bad_measure`) reduce per-triangle terms
//! through one shared pairwise summation tree, so two reductions whose
//! terms are bitwise equal produce bitwise equal totals regardless of size.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::construct::Field;
use crate::matgeom::DiagMatF;
use crate::{Error, Result};

/// Simple polygon with counterclockwise vertices; the spatial domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    verts: Vec<[f64; 2]>,
}

impl Polygon {
    /// Validates at least three finite vertices, counterclockwise
    /// orientation, and pairwise non-crossing edges.
    pub fn new(verts: Vec<[f64; 2]>) -> Result<Polygon> {
        if verts.len() < 3 {
            return Err(Error::Parameter(format!(
                "polygon needs at least 3 vertices, got {}",
                verts.len()
            )));
        }
        if verts.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("polygon vertices must be finite".into()));
        }
        let poly = Polygon { verts };
        if poly.signed_area() <= 0.0 {
            return Err(Error::Parameter(
                "polygon vertices must be in counterclockwise order with positive area".into(),
            ));
        }
        let n = poly.verts.len();
        for i in 0..n {
            for j in i + 1..n {
                // Neighbouring edges share a vertex; skip those pairs.
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = poly.edge(i);
                let (c, d) = poly.edge(j);
                if segments_cross(a, b, c, d) {
                    return Err(Error::Parameter(format!(
                        "polygon edges {i} and {j} intersect"
                    )));
                }
            }
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle `(x0, x1) × (y0, y1)`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Polygon> {
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::Parameter(format!(
                "degenerate rectangle ({x0}, {x1}) x ({y0}, {y1})"
            )));
        }
        Polygon::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.verts
    }

    fn edge(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        (self.verts[i], self.verts[(i + 1) % self.verts.len()])
    }

    fn signed_area(&self) -> f64 {
        let n = self.verts.len();
        let mut s = 0.0;
        for i in 0..n {
            let (a, b) = (self.verts[i], self.verts[(i + 1) % n]);
            s += a[0] * b[1] - b[0] * a[1];
        }
        s / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area()
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.verts.len())
            .map(|i| {
                let (a, b) = self.edge(i);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .sum()
    }

    /// Largest distance between two points of the polygon; attained at a
    /// vertex pair.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.verts.iter().enumerate() {
            for b in &self.verts[i + 1..] {
                best = best.max((b[0] - a[0]).hypot(b[1] - a[1]));
            }
        }
        best
    }

    /// Even-odd point-in-polygon test (points on the boundary may land on
    /// either side; they have zero inner distance regardless).
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let n = self.verts.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = (self.verts[i], self.verts[(i + 1) % n]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from `p` to the boundary (minimum over edges, exact).
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.verts.len() {
            let (a, b) = self.edge(i);
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len2 = ex * ex + ey * ey;
            let t = (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2).clamp(0.0, 1.0);
            let (cx, cy) = (a[0] + t * ex, a[1] + t * ey);
            best = best.min((p[0] - cx).hypot(p[1] - cy));
        }
        best
    }

    /// Distance to the boundary for interior points, zero outside.
    pub fn inner_distance(&self, p: [f64; 2]) -> f64 {
        if self.contains(p) {
            self.boundary_distance(p)
        } else {
            0.0
        }
    }

    /// The corner coordinates when the polygon is an axis-aligned
    /// rectangle (in either vertex rotation), else `None`.
    pub fn as_rectangle(&self) -> Option<(f64, f64, f64, f64)> {
        if self.verts.len() != 4 {
            return None;
        }
        let xs: Vec<f64> = self.verts.iter().map(|v| v[0]).collect();
        let ys: Vec<f64> = self.verts.iter().map(|v| v[1]).collect();
        let (x0, x1) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let (y0, y1) = (ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let ok = self
            .verts
            .iter()
            .all(|v| (v[0] == x0 || v[0] == x1) && (v[1] == y0 || v[1] == y1));
        // Four distinct corners are guaranteed by the simplicity check.
        if ok {
            Some((x0, y0, x1, y1))
        } else {
            None
        }
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Uniform triangulation of a rectangle: `nx × ny` cells of size
/// `sx × sy`, each split along the same diagonal into two right triangles.
/// Vertices and triangles are addressed by index and generated on demand;
/// nothing per-entity is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    origin: [f64; 2],
    sx: f64,
    sy: f64,
    nx: usize,
    ny: usize,
    h: f64,
}

/// Triangulate a rectangular domain with triangle diameters at most
/// `h_target`: cell sides are `≤ h_target/√2`, so the diagonal — the mesh
/// size — is `≤ h_target`, with equality for squares at matching targets.
pub fn make_mesh(omega: &Polygon, h_target: f64) -> Result<Mesh> {
    if !(h_target > 0.0 && h_target.is_finite()) {
        return Err(Error::Parameter(format!("mesh size target {h_target} must be positive")));
    }
    let Some((x0, y0, x1, y1)) = omega.as_rectangle() else {
        return Err(Error::Parameter(
            "only axis-aligned rectangular domains can be meshed".into(),
        ));
    };
    let side = h_target / 2.0f64.sqrt();
    let (w, hh) = (x1 - x0, y1 - y0);
    let nx = (w / side).ceil().max(1.0) as usize;
    let ny = (hh / side).ceil().max(1.0) as usize;
    let (sx, sy) = (w / nx as f64, hh / ny as f64);
    Ok(Mesh { origin: [x0, y0], sx, sy, nx, ny, h: sx.hypot(sy) })
}

impl Mesh {
    /// Mesh size: the common diameter (hypotenuse) of all triangles.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cell_sides(&self) -> (f64, f64) {
        (self.sx, self.sy)
    }

    pub fn n_vertices(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_triangles(&self) -> usize {
        2 * self.nx * self.ny
    }

    /// All triangles have the same area.
    pub fn triangle_area(&self) -> f64 {
        0.5 * self.sx * self.sy
    }

    #[inline]
    pub fn vertex_index(&self, ix: usize, iy: usize) -> usize {
        iy * (self.nx + 1) + ix
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> [f64; 2] {
        let (ix, iy) = (i % (self.nx + 1), i / (self.nx + 1));
        [self.origin[0] + ix as f64 * self.sx, self.origin[1] + iy as f64 * self.sy]
    }

    pub fn is_boundary_vertex(&self, i: usize) -> bool {
        let (ix, iy) = (i % (self.nx + 1), i / (self.nx + 1));
        ix == 0 || ix == self.nx || iy == 0 || iy == self.ny
    }

    /// Vertex indices of triangle `t`, counterclockwise. Triangles `2c` and
    /// `2c + 1` triangulate cell `c = cy·nx + cx` below and above its
    /// south-west-to-north-east diagonal.
    pub fn triangle(&self, t: usize) -> [usize; 3] {
        let cell = t / 2;
        let (cx, cy) = (cell % self.nx, cell / self.nx);
        let v00 = self.vertex_index(cx, cy);
        let v10 = self.vertex_index(cx + 1, cy);
        let v01 = self.vertex_index(cx, cy + 1);
        let v11 = self.vertex_index(cx + 1, cy + 1);
        if t % 2 == 0 {
            [v00, v10, v11]
        } else {
            [v00, v11, v01]
        }
    }
}

/// Vector-valued P1 function: one `[f64; 2]` per mesh vertex.
#[derive(Debug, Clone)]
pub struct FEFunction<'m> {
    mesh: &'m Mesh,
    values: Vec<[f64; 2]>,
}

impl<'m> FEFunction<'m> {
    /// Nodal values from a pointwise function, no boundary adjustment.
    pub fn from_fn(mesh: &'m Mesh, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> FEFunction<'m> {
        let values = (0..mesh.n_vertices()).map(|i| f(mesh.vertex(i))).collect();
        FEFunction { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    /// Constant gradient on triangle `t`: `g[i][j] = ∂u_i/∂x_j`. Each
    /// triangle has one horizontal and one vertical leg, so the derivatives
    /// are single divided differences of the corner values.
    pub fn tri_gradient(&self, t: usize) -> [[f64; 2]; 2] {
        let cell = t / 2;
        let (cx, cy) = (cell % self.mesh.nx, cell / self.mesh.nx);
        let u00 = self.values[self.mesh.vertex_index(cx, cy)];
        let u11 = self.values[self.mesh.vertex_index(cx + 1, cy + 1)];
        let mut g = [[0.0; 2]; 2];
        if t % 2 == 0 {
            let u10 = self.values[self.mesh.vertex_index(cx + 1, cy)];
            for i in 0..2 {
                g[i][0] = (u10[i] - u00[i]) / self.mesh.sx;
                g[i][1] = (u11[i] - u10[i]) / self.mesh.sy;
            }
        } else {
            let u01 = self.values[self.mesh.vertex_index(cx, cy + 1)];
            for i in 0..2 {
                g[i][0] = (u11[i] - u01[i]) / self.mesh.sx;
                g[i][1] = (u01[i] - u00[i]) / self.mesh.sy;
            }
        }
        g
    }
}

/// Nodal interpolant of a field, with boundary vertices pinned to zero (the
/// fields vanish there up to rounding; pinning makes it exact).
pub fn interpolate<'m>(u: &Field, mesh: &'m Mesh) -> FEFunction<'m> {
    let values = (0..mesh.n_vertices())
        .map(|i| {
            if mesh.is_boundary_vertex(i) {
                [0.0, 0.0]
            } else {
                u.value(mesh.vertex(i))
            }
        })
        .collect();
    FEFunction { mesh, values }
}

/// Pairwise (cascade) sum of `f(0..n)`: fixed reduction tree determined
/// only by `n`, short runs added sequentially. Deterministic and accurate
/// enough for tens of millions of terms.
fn triangle_pairwise(n: usize, f: &mut impl FnMut(usize) -> f64) -> f64 {
    fn run(lo: usize, hi: usize, f: &mut impl FnMut(usize) -> f64) -> f64 {
        if hi - lo <= 64 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            run(lo, mid, f) + run(mid, hi, f)
        }
    }
    run(0, n, f)
}

/// `∫ f(∇u_h) dx` over the mesh: the per-triangle terms `area · f(g)`
/// reduced through the shared pairwise tree.
pub fn energy(u: &FEFunction, f: impl Fn(&[[f64; 2]; 2]) -> f64) -> f64 {
    let area = u.mesh().triangle_area();
    triangle_pairwise(u.mesh().n_triangles(), &mut |t| area * f(&u.tri_gradient(t)))
}

fn deviation(g: &[[f64; 2]; 2], s: &DiagMatF) -> f64 {
    (g[0][0] - s.d1).abs().max((g[1][1] - s.d2).abs())
}

fn is_bad(g: &[[f64; 2]; 2], sigma: &[DiagMatF], tol: f64) -> bool {
    let off = g[0][1].abs().max(g[1][0].abs());
    let best = sigma.iter().map(|s| deviation(g, s)).fold(f64::INFINITY, f64::min);
    // Empty target set: every triangle counts.
    best.max(off) > tol
}

/// Total area of the triangles whose gradient deviates from every matrix
/// of `sigma` by more than `tol` in any entry. Bitwise equal to
/// `energy(u, indicator(sigma, tol))`: the terms are the same floats and
/// the reduction tree is shared.
pub fn bad_measure(u: &FEFunction, sigma: &[DiagMatF], tol: f64) -> f64 {
    let area = u.mesh().triangle_area();
    triangle_pairwise(u.mesh().n_triangles(), &mut |t| {
        if is_bad(&u.tri_gradient(t), sigma, tol) {
            area
        } else {
            0.0
        }
    })
}

/// `{0, 1}`-valued integrand matching [`bad_measure`].
pub fn indicator<'a>(
    sigma: &'a [DiagMatF],
    tol: f64,
) -> impl Fn(&[[f64; 2]; 2]) -> f64 + 'a {
    move |g| {
        if is_bad(g, sigma, tol) {
            1.0
        } else {
            0.0
        }
    }
}

/// Squared Frobenius distance to `sigma`, clipped at 1; a smooth-ish
/// alternative integrand for the same deviation.
pub fn f_dist2<'a>(sigma: &'a [DiagMatF]) -> impl Fn(&[[f64; 2]; 2]) -> f64 + 'a {
    move |g| {
        let off = g[0][1] * g[0][1] + g[1][0] * g[1][0];
        let best = sigma
            .iter()
            .map(|s| {
                let (a, b) = (g[0][0] - s.d1, g[1][1] - s.d2);
                a * a + b * b
            })
            .fold(f64::INFINITY, f64::min);
        (best + off).min(1.0)
    }
}

/// Largest Frobenius norm of the gradient over all triangles.
pub fn sup_grad_norm(u: &FEFunction) -> f64 {
    let mut best = 0.0f64;
    for t in 0..u.mesh().n_triangles() {
        let g = u.tri_gradient(t);
        let n2 = g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1];
        best = best.max(n2);
    }
    best.sqrt()
}

/// Write the function, its per-triangle gradients, and the deviation flag
/// as a legacy ASCII VTK unstructured grid.
pub fn write_vtk(path: &Path, u: &FEFunction, sigma: &[DiagMatF], tol: f64) -> Result<()> {
    let mesh = u.mesh();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "laminate field")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} float", mesh.n_vertices())?;
    for i in 0..mesh.n_vertices() {
        let p = mesh.vertex(i);
        writeln!(out, "{} {} 0", p[0], p[1])?;
    }
    let nt = mesh.n_triangles();
    writeln!(out, "CELLS {} {}", nt, 4 * nt)?;
    for t in 0..nt {
        let v = mesh.triangle(t);
        writeln!(out, "3 {} {} {}", v[0], v[1], v[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "5")?;
    }
    writeln!(out, "POINT_DATA {}", mesh.n_vertices())?;
    writeln!(out, "VECTORS u float")?;
    for v in u.values() {
        writeln!(out, "{} {} 0", v[0], v[1])?;
    }
    writeln!(out, "CELL_DATA {nt}")?;
    writeln!(out, "TENSORS gradient float")?;
    for t in 0..nt {
        let g = u.tri_gradient(t);
        writeln!(out, "{} {} 0", g[0][0], g[0][1])?;
        writeln!(out, "{} {} 0", g[1][0], g[1][1])?;
        writeln!(out, "0 0 0")?;
    }
    writeln!(out, "SCALARS bad int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for t in 0..nt {
        writeln!(out, "{}", i32::from(is_bad(&u.tri_gradient(t), sigma, tol)))?;
    }
    Ok(())
}
