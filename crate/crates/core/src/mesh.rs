//! Uniform triangulations of axis-aligned rectangles and P1 nodal fields.
//!
//! Nodes are numbered lexicographically with `x` running fastest. Every grid
//! cell is split along its `(i, j) -> (i + 1, j + 1)` diagonal, so all
//! elements are counterclockwise and the triangulation is conforming.

use std::collections::HashMap;
use std::sync::Arc;

use crate::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        let finite = [x0, x1, y0, y1].iter().all(|v| v.is_finite());
        if !finite || x1 <= x0 || y1 <= y0 {
            return Err(Error::Argument(format!(
                "rectangle [{x0}, {x1}] x [{y0}, {y1}] is empty or not finite"
            )));
        }
        Ok(Rect { x0, x1, y0, y1 })
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Area and constant barycentric gradients of one P1 triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub grad_basis: [[f64; 2]; 3],
}

/// Geometry of the triangle with vertices `p`, in the given order.
///
/// The signed area is returned, so clockwise input yields a negative area.
pub fn triangle_geometry(p: &[[f64; 2]; 3]) -> ElementGeometry {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let grad_basis = [
        [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
        [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
        [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
    ];
    ElementGeometry {
        area: 0.5 * det,
        grad_basis,
    }
}

#[derive(Debug)]
pub struct Mesh {
    rect: Rect,
    nx: usize,
    ny: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    geometry: Vec<ElementGeometry>,
}

impl Mesh {
    /// Uniform `nx x ny` grid on the rectangle, two triangles per cell.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Arc<Mesh>> {
        let rect = Rect::new(x0, x1, y0, y1)?;
        if nx == 0 || ny == 0 {
            return Err(Error::Argument(format!(
                "mesh needs at least one cell per axis, got {nx} x {ny}"
            )));
        }
        let coord = |lo: f64, hi: f64, k: usize, n: usize| {
            if k == n {
                hi
            } else {
                lo + (hi - lo) * (k as f64) / (n as f64)
            }
        };
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            let y = coord(y0, y1, j, ny);
            for i in 0..=nx {
                nodes.push([coord(x0, x1, i, nx), y]);
            }
        }
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let a = j * (nx + 1) + i;
                let b = a + 1;
                let c = a + nx + 1;
                let d = c + 1;
                elements.push([a, b, d]);
                elements.push([a, d, c]);
            }
        }
        let geometry = elements
            .iter()
            .map(|e| triangle_geometry(&[nodes[e[0]], nodes[e[1]], nodes[e[2]]]))
            .collect();
        Ok(Arc::new(Mesh {
            rect,
            nx,
            ny,
            nodes,
            elements,
            geometry,
        }))
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    /// Cell widths along x and y.
    pub fn spacing(&self) -> (f64, f64) {
        (
            self.rect.width() / self.nx as f64,
            self.rect.height() / self.ny as f64,
        )
    }

    /// Mesh size: the largest element diameter (the cell diagonal).
    pub fn h(&self) -> f64 {
        let (hx, hy) = self.spacing();
        hx.hypot(hy)
    }

    pub fn domain_area(&self) -> f64 {
        self.rect.area()
    }

    pub fn element_geometry(&self, e: usize) -> Result<ElementGeometry> {
        self.geometry.get(e).copied().ok_or(Error::IndexOutOfRange {
            index: e,
            len: self.elements.len(),
        })
    }

    /// Precomputed geometry of all elements, in element order.
    pub fn geometries(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    /// Same rectangle and same subdivision, i.e. identical node sets.
    pub fn same_as(&self, other: &Mesh) -> bool {
        std::ptr::eq(self, other) || (self.rect == other.rect && self.nx == other.nx && self.ny == other.ny)
    }

    /// Number of elements incident to each undirected edge.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for e in &self.elements {
            for k in 0..3 {
                let (a, b) = (e[k], e[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Barycentric location of a point: three vertex indices and their weights.
    ///
    /// Points within `1e-10` cell widths of a grid line are snapped onto it,
    /// so coincident nodes get weights of exactly one and zero.
    pub fn locate(&self, x: f64, y: f64) -> Result<([usize; 3], [f64; 3])> {
        let r = self.rect;
        let (hx, hy) = self.spacing();
        let tol = 1e-10;
        let sx = (x - r.x0) / hx;
        let sy = (y - r.y0) / hy;
        if !(sx >= -tol && sx <= self.nx as f64 + tol && sy >= -tol && sy <= self.ny as f64 + tol) {
            return Err(Error::Argument(format!(
                "point ({x}, {y}) lies outside [{}, {}] x [{}, {}]",
                r.x0, r.x1, r.y0, r.y1
            )));
        }
        let split = |s: f64, n: usize| -> (usize, f64) {
            let snapped = if (s - s.round()).abs() < tol { s.round() } else { s };
            let cell = (snapped.floor().max(0.0) as usize).min(n - 1);
            (cell, (snapped - cell as f64).clamp(0.0, 1.0))
        };
        let (i, s) = split(sx, self.nx);
        let (j, t) = split(sy, self.ny);
        let a = j * (self.nx + 1) + i;
        let b = a + 1;
        let c = a + self.nx + 1;
        let d = c + 1;
        if t <= s {
            Ok(([a, b, d], [1.0 - s, s - t, t]))
        } else {
            Ok(([a, d, c], [1.0 - t, s, t - s]))
        }
    }
}

/// Coefficients of a continuous piecewise-linear field on a mesh.
#[derive(Clone, Debug)]
pub struct NodalFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl NodalFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(Error::Dimension {
                expected: mesh.node_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite nodal value at node {i}")));
        }
        Ok(NodalFunction { mesh, values })
    }

    pub fn constant(mesh: Arc<Mesh>, value: f64) -> Self {
        let n = mesh.node_count();
        NodalFunction {
            mesh,
            values: vec![value; n],
        }
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of the P1 interpolant at an arbitrary point of the domain.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let (idx, w) = self.mesh.locate(x, y)?;
        Ok(w[0] * self.values[idx[0]] + w[1] * self.values[idx[1]] + w[2] * self.values[idx[2]])
    }

    /// `self - other`, both on the same mesh.
    pub fn difference(&self, other: &NodalFunction) -> Result<NodalFunction> {
        if !self.mesh.same_as(&other.mesh) {
            return Err(Error::MeshMismatch("difference of fields on different meshes".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(NodalFunction {
            mesh: self.mesh.clone(),
            values,
        })
    }
}

/// Nodal interpolant of a pointwise function.
pub fn interpolate_nodal(mesh: &Arc<Mesh>, f: impl Fn(f64, f64) -> f64) -> Result<NodalFunction> {
    let values = mesh.nodes().iter().map(|p| f(p[0], p[1])).collect();
    NodalFunction::new(mesh.clone(), values)
}

/// Evaluate the P1 field `src` at every node of `dst`.
pub fn transfer_to_mesh(src: &NodalFunction, dst: &Arc<Mesh>) -> Result<NodalFunction> {
    if src.mesh().rect() != dst.rect() {
        return Err(Error::MeshMismatch(format!(
            "source domain {:?} differs from destination domain {:?}",
            src.mesh().rect(),
            dst.rect()
        )));
    }
    let values = dst
        .nodes()
        .iter()
        .map(|p| src.eval(p[0], p[1]))
        .collect::<Result<Vec<_>>>()?;
    NodalFunction::new(dst.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_cell() {
        let m = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 1, 1).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.element_count(), 2);
        let area: f64 = m.geometries().iter().map(|g| g.area).sum();
        assert_eq!(area, 1.0);
    }

    #[test]
    fn benchmark_grid_counts() {
        let m = Mesh::rectangle(0.0, 2.0 * PI, 0.0, 2.0 * PI, 128, 128).unwrap();
        assert_eq!(m.node_count(), 16641);
        assert_eq!(m.element_count(), 32768);
    }

    #[test]
    fn two_by_two_area_by_direct_summation() {
        let m = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let mut total = 0.0;
        for e in m.elements() {
            let [a, b, c] = e.map(|k| m.nodes()[k]);
            total += 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        }
        assert_eq!(m.element_count(), 8);
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(Mesh::rectangle(1.0, 0.0, 0.0, 1.0, 1, 1), Err(Error::Argument(_))));
        assert!(matches!(Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 0, 1), Err(Error::Argument(_))));
        assert!(matches!(Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 1, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn unit_right_triangle_geometry() {
        let g = triangle_geometry(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(g.area, 0.5);
        assert_eq!(g.grad_basis, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn element_geometry_partition_of_unity() {
        let m = Mesh::rectangle(-1.0, 2.0, 0.5, 1.7, 5, 3).unwrap();
        for e in 0..m.element_count() {
            let g = m.element_geometry(e).unwrap();
            assert!(g.area > 0.0);
            let sx: f64 = g.grad_basis.iter().map(|v| v[0]).sum();
            let sy: f64 = g.grad_basis.iter().map(|v| v[1]).sum();
            assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
        }
        assert!(matches!(
            m.element_geometry(m.element_count()),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn conformity() {
        let m = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 4, 3).unwrap();
        let counts = m.edge_incidence();
        let on_boundary = |k: usize| {
            let p = m.nodes()[k];
            (p[0] == 0.0 || p[0] == 1.0, p[1] == 0.0 || p[1] == 1.0)
        };
        for (&(a, b), &n) in &counts {
            let (pa, pb) = (m.nodes()[a], m.nodes()[b]);
            let (ax, ay) = on_boundary(a);
            let (bx, by) = on_boundary(b);
            let boundary = (ax && bx && pa[0] == pb[0]) || (ay && by && pa[1] == pb[1]);
            assert_eq!(n, if boundary { 1 } else { 2 }, "edge {a}-{b}");
        }
        // Euler: V - E + F = 1 for a disc.
        assert_eq!(m.node_count() + m.element_count(), counts.len() + 1);
    }

    #[test]
    fn interpolation_examples() {
        let m = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 1, 1).unwrap();
        let f = interpolate_nodal(&m, |x, _| x).unwrap();
        assert_eq!(f.values(), &[0.0, 1.0, 0.0, 1.0]);
        let three = interpolate_nodal(&m, |_, _| 3.0).unwrap();
        assert!(three.values().iter().all(|&v| v == 3.0));

        let p = Mesh::rectangle(0.0, 2.0 * PI, 0.0, 2.0 * PI, 8, 8).unwrap();
        let phi0 = interpolate_nodal(&p, |x, y| 0.05 * x.cos() * y.cos() + 0.3).unwrap();
        assert!((phi0.values()[0] - 0.35).abs() < 1e-15);

        assert!(matches!(interpolate_nodal(&m, |x, _| 1.0 / x), Err(Error::Data(_))));
    }

    #[test]
    fn nested_transfer_is_exact() {
        let fine = Mesh::rectangle(0.0, 2.0 * PI, 0.0, 2.0 * PI, 16, 16).unwrap();
        let coarse = Mesh::rectangle(0.0, 2.0 * PI, 0.0, 2.0 * PI, 8, 8).unwrap();
        let f = interpolate_nodal(&fine, |x, y| (x * 1.3).sin() * y.cos() + x * y).unwrap();
        let g = transfer_to_mesh(&f, &coarse).unwrap();
        for j in 0..=8 {
            for i in 0..=8 {
                assert_eq!(g.values()[j * 9 + i], f.values()[2 * j * 17 + 2 * i]);
            }
        }
    }

    #[test]
    fn transfer_rejects_other_domain() {
        let a = Mesh::rectangle(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let b = Mesh::rectangle(0.0, 2.0, 0.0, 1.0, 2, 2).unwrap();
        let f = NodalFunction::zeros(a);
        assert!(matches!(transfer_to_mesh(&f, &b), Err(Error::MeshMismatch(_))));
    }

    #[test]
    fn interpolation_error_of_cosine_is_second_order_bounded() {
        // Dense sampling oracle for max|f - I_h f| against h^2/8 * max|f''|
        // (one-dimensional variation, so the bound is the 1D estimate).
        let src = Mesh::rectangle(0.0, 2.0 * PI, 0.0, 2.0 * PI, 4, 4).unwrap();
        let dst = Mesh::rectangle(0.0, 2.0 * PI, 0.0, 2.0 * PI, 3, 3).unwrap();
        let f = interpolate_nodal(&src, |x, _| x.cos()).unwrap();
        let g = transfer_to_mesh(&f, &dst).unwrap();
        let hx = 2.0 * PI / 4.0;
        let mut sampled_max = 0.0f64;
        let n = 400;
        for k in 0..=n {
            let x = 2.0 * PI * k as f64 / n as f64;
            sampled_max = sampled_max.max((f.eval(x, 1.0).unwrap() - x.cos()).abs());
        }
        let bound = hx * hx / 8.0;
        assert!(sampled_max <= bound + 1e-12);
        for (p, v) in dst.nodes().iter().zip(g.values()) {
            assert!((v - p[0].cos()).abs() <= sampled_max + 1e-12);
        }
    }
}
