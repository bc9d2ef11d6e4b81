//! Surface quadratures for the nanoparticle boundary ∂V.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, gauss_legendre_interval, pairwise_reduce, pairwise_sum};
use crate::types::Rotation;

/// Default node count parameter for analytic shapes (sphere: 64 × 128 nodes).
pub const DEFAULT_ANALYTIC_RESOLUTION: usize = 64;
/// Default subdivision for meshes (one 3-point rule per triangle).
pub const DEFAULT_MESH_RESOLUTION: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    /// Axis along the body z axis, centered at the origin.
    Cylinder {
        radius: f64,
        half_length: f64,
        capped: bool,
    },
    /// Axis-aligned box centered at the origin.
    Box {
        half_extents: Vector3<f64>,
    },
    /// Closed triangle mesh, faces counter-clockwise seen from outside.
    Mesh {
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[usize; 3]>,
    },
}

impl Shape {
    pub fn default_resolution(&self) -> usize {
        match self {
            Shape::Mesh { .. } => DEFAULT_MESH_RESOLUTION,
            _ => DEFAULT_ANALYTIC_RESOLUTION,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            Shape::Sphere { radius } => positive("radius", *radius),
            Shape::Cylinder {
                radius,
                half_length,
                ..
            } => {
                positive("radius", *radius)?;
                positive("half_length", *half_length)
            }
            Shape::Box { half_extents } => {
                for (axis, v) in ["x", "y", "z"].iter().zip(half_extents.iter()) {
                    positive(&format!("half_extents.{axis}"), *v)?;
                }
                Ok(())
            }
            Shape::Mesh { vertices, faces } => validate_mesh(vertices, faces),
        }
    }

    /// Volume and centroid of the solid, assuming uniform density.
    fn volume_and_centroid(&self) -> (f64, Vector3<f64>) {
        match self {
            Shape::Sphere { radius } => (4.0 / 3.0 * PI * radius.powi(3), Vector3::zeros()),
            Shape::Cylinder {
                radius,
                half_length,
                ..
            } => (PI * radius * radius * 2.0 * half_length, Vector3::zeros()),
            Shape::Box { half_extents } => (8.0 * half_extents.product(), Vector3::zeros()),
            Shape::Mesh { vertices, faces } => {
                let (v, first, _) = mesh_volume_integrals(vertices, faces);
                (v, first / v)
            }
        }
    }

    /// Inertia tensor about the centroid for uniform density and this mass.
    fn uniform_inertia(&self, mass: f64) -> Matrix3<f64> {
        match self {
            Shape::Sphere { radius } => Matrix3::identity() * (0.4 * mass * radius * radius),
            Shape::Cylinder {
                radius,
                half_length,
                ..
            } => {
                let ixx = mass * (3.0 * radius * radius + 4.0 * half_length * half_length) / 12.0;
                Matrix3::from_diagonal(&Vector3::new(ixx, ixx, 0.5 * mass * radius * radius))
            }
            Shape::Box { half_extents: h } => Matrix3::from_diagonal(&Vector3::new(
                mass * (h.y * h.y + h.z * h.z) / 3.0,
                mass * (h.x * h.x + h.z * h.z) / 3.0,
                mass * (h.x * h.x + h.y * h.y) / 3.0,
            )),
            Shape::Mesh { vertices, faces } => {
                let (v, first, second) = mesh_volume_integrals(vertices, faces);
                let c = first / v;
                let cov = second - c * c.transpose() * v;
                (Matrix3::identity() * cov.trace() - cov) * (mass / v)
            }
        }
    }
}

/// ∫dV, ∫x dV and ∫x xᵀ dV of a closed oriented triangle mesh.
fn mesh_volume_integrals(
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
) -> (f64, Vector3<f64>, Matrix3<f64>) {
    // canonical tetrahedron (0, e1, e2, e3): ∫x xᵀ dV = S / 120
    let canonical = Matrix3::new(2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0) / 120.0;
    let mut volume = 0.0;
    let mut first = Vector3::zeros();
    let mut second = Matrix3::zeros();
    for f in faces {
        let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        let jac = Matrix3::from_columns(&[a, b, c]);
        let det = jac.determinant();
        volume += det / 6.0;
        first += (a + b + c) * (det / 24.0);
        second += jac * canonical * jac.transpose() * det;
    }
    (volume, first, second)
}

fn validate_mesh(vertices: &[Vector3<f64>], faces: &[[usize; 3]]) -> Result<()> {
    if faces.is_empty() {
        return Err(Error::DegenerateMesh("mesh has no faces".into()));
    }
    if vertices.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::DegenerateMesh("non-finite vertex coordinate".into()));
    }
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for (k, f) in faces.iter().enumerate() {
        if f.iter().any(|&i| i >= vertices.len()) {
            return Err(Error::DegenerateMesh(format!("face {k} references a missing vertex")));
        }
        let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        let scale = (b - a).norm().max((c - a).norm()).max((c - b).norm());
        let area2 = (b - a).cross(&(c - a)).norm();
        if !(area2 > 1e-14 * scale * scale) {
            return Err(Error::DegenerateMesh(format!("face {k} has zero area")));
        }
        for (i, j) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            *edges.entry((i, j)).or_default() += 1;
        }
    }
    for (&(i, j), &count) in &edges {
        if count > 1 {
            return Err(Error::DegenerateMesh(format!(
                "edge {i}-{j} is traversed twice in the same direction (inconsistent orientation)"
            )));
        }
        if !edges.contains_key(&(j, i)) {
            return Err(Error::DegenerateMesh(format!("edge {i}-{j} is on an open boundary")));
        }
    }
    let (volume, _, _) = mesh_volume_integrals(vertices, faces);
    if !(volume > 0.0) {
        return Err(Error::DegenerateMesh(format!(
            "signed volume {volume:e} is not positive (faces oriented inward)"
        )));
    }
    Ok(())
}

/// Nanoparticle body: shape, orientation of the shape in the body frame,
/// mass, center of mass and inertia tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct BodySpec {
    pub shape: Shape,
    /// Rotates the shape's own axes into the body frame.
    pub orientation: Rotation,
    pub mass: f64,
    /// In shape coordinates, before `orientation` is applied.
    pub center_of_mass: Vector3<f64>,
    /// About the center of mass, body frame.
    pub inertia_body: Matrix3<f64>,
}

impl BodySpec {
    /// Uniform-density body with its center of mass at the solid centroid.
    pub fn uniform(shape: Shape, mass: f64) -> Result<Self> {
        shape.validate()?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
        }
        let (_, centroid) = shape.volume_and_centroid();
        let inertia_body = shape.uniform_inertia(mass);
        Ok(BodySpec {
            shape,
            orientation: Rotation::identity(),
            mass,
            center_of_mass: centroid,
            inertia_body,
        })
    }

    pub fn with_orientation(mut self, orientation: Rotation) -> Self {
        let q = orientation.matrix() * self.orientation.matrix().transpose();
        self.inertia_body = q * self.inertia_body * q.transpose();
        self.orientation = orientation;
        self
    }

    pub fn with_center_of_mass(mut self, center_of_mass: Vector3<f64>) -> Self {
        self.center_of_mass = center_of_mass;
        self
    }

    pub fn with_inertia(mut self, inertia_body: Matrix3<f64>) -> Result<Self> {
        let asym = (inertia_body - inertia_body.transpose()).amax();
        if asym > 1e-12 * inertia_body.amax() {
            return Err(Error::InvalidInput("inertia tensor is not symmetric".into()));
        }
        let eig = inertia_body.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidInput("inertia tensor is not positive definite".into()));
        }
        self.inertia_body = inertia_body;
        Ok(self)
    }

    /// Largest distance of a surface point from the center of mass.
    pub fn max_radius(&self) -> f64 {
        let c = self.center_of_mass;
        match &self.shape {
            Shape::Sphere { radius } => c.norm() + radius,
            Shape::Cylinder {
                radius,
                half_length,
                ..
            } => c.norm() + radius.hypot(*half_length),
            Shape::Box { half_extents } => c.norm() + half_extents.norm(),
            Shape::Mesh { vertices, .. } => vertices
                .iter()
                .map(|v| (v - c).norm())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNode {
    /// Relative to the center of mass (m).
    pub position: Vector3<f64>,
    /// Outward unit normal.
    pub normal: Vector3<f64>,
    /// Area weight (m²).
    pub weight: f64,
}

/// Discretization of ∫_{∂V} d²s.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceQuadrature {
    pub nodes: Vec<SurfaceNode>,
    pub total_area: f64,
}

impl SurfaceQuadrature {
    pub fn from_nodes(nodes: Vec<SurfaceNode>) -> Self {
        let weights: Vec<f64> = nodes.iter().map(|n| n.weight).collect();
        SurfaceQuadrature {
            total_area: pairwise_sum(&weights),
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_radius(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.position.norm())
            .fold(0.0, f64::max)
    }

    /// Same surface after a rigid rotation about the center of mass.
    pub fn rotated(&self, q: &Rotation) -> Self {
        SurfaceQuadrature {
            nodes: self
                .nodes
                .iter()
                .map(|n| SurfaceNode {
                    position: q.apply(&n.position),
                    normal: q.apply(&n.normal),
                    weight: n.weight,
                })
                .collect(),
            total_area: self.total_area,
        }
    }
}

/// Σ weight · f(node), evaluated in parallel and reduced pairwise in node order.
pub fn surface_moment<T, F>(q: &SurfaceQuadrature, zero: T, f: F) -> T
where
    T: Clone + Send + Sync + Add<Output = T> + Mul<f64, Output = T>,
    F: Fn(&SurfaceNode) -> T + Sync,
{
    let terms: Vec<T> = q.nodes.par_iter().map(|n| f(n) * n.weight).collect();
    pairwise_reduce(&terms, zero, |a, b| a + b)
}

pub fn build_quadrature(body: &BodySpec, resolution: usize) -> Result<SurfaceQuadrature> {
    if resolution == 0 {
        return Err(Error::InvalidInput("resolution must be at least 1".into()));
    }
    body.shape.validate()?;
    let mut nodes = Vec::new();
    match &body.shape {
        Shape::Sphere { radius } => sphere_nodes(*radius, resolution, &mut nodes),
        Shape::Cylinder {
            radius,
            half_length,
            capped,
        } => cylinder_nodes(*radius, *half_length, *capped, resolution, &mut nodes),
        Shape::Box { half_extents } => box_nodes(half_extents, resolution, &mut nodes),
        Shape::Mesh { vertices, faces } => mesh_nodes(vertices, faces, resolution, &mut nodes),
    }
    let o = body.orientation;
    let com = body.center_of_mass;
    for n in &mut nodes {
        n.position = o.apply(&(n.position - com));
        n.normal = o.apply(&n.normal);
    }
    Ok(SurfaceQuadrature::from_nodes(nodes))
}

fn sphere_nodes(radius: f64, res: usize, out: &mut Vec<SurfaceNode>) {
    let (x, w) = gauss_legendre(res);
    let n_phi = 2 * res;
    let dphi = 2.0 * PI / n_phi as f64;
    for (c, wc) in x.iter().zip(&w) {
        let s = (1.0 - c * c).sqrt();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            let normal = Vector3::new(s * phi.cos(), s * phi.sin(), *c);
            out.push(SurfaceNode {
                position: normal * radius,
                normal,
                weight: radius * radius * wc * dphi,
            });
        }
    }
}

fn disk_nodes(radius: f64, z: f64, normal: Vector3<f64>, res: usize, out: &mut Vec<SurfaceNode>) {
    let (r, wr) = gauss_legendre_interval(res, 0.0, radius);
    let n_phi = 2 * res;
    let dphi = 2.0 * PI / n_phi as f64;
    for (ri, wi) in r.iter().zip(&wr) {
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            out.push(SurfaceNode {
                position: Vector3::new(ri * phi.cos(), ri * phi.sin(), z),
                normal,
                weight: wi * ri * dphi,
            });
        }
    }
}

fn cylinder_nodes(radius: f64, half: f64, capped: bool, res: usize, out: &mut Vec<SurfaceNode>) {
    let (z, wz) = gauss_legendre_interval(res, -half, half);
    let n_phi = 2 * res;
    let dphi = 2.0 * PI / n_phi as f64;
    for (zi, wi) in z.iter().zip(&wz) {
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            let normal = Vector3::new(phi.cos(), phi.sin(), 0.0);
            out.push(SurfaceNode {
                position: Vector3::new(radius * normal.x, radius * normal.y, *zi),
                normal,
                weight: wi * radius * dphi,
            });
        }
    }
    if capped {
        disk_nodes(radius, half, Vector3::z(), res, out);
        disk_nodes(radius, -half, -Vector3::z(), res, out);
    }
}

fn box_nodes(h: &Vector3<f64>, res: usize, out: &mut Vec<SurfaceNode>) {
    let (x, w) = gauss_legendre(res);
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for sign in [1.0, -1.0] {
            let mut normal = Vector3::zeros();
            normal[axis] = sign;
            for (xi, wi) in x.iter().zip(&w) {
                for (xj, wj) in x.iter().zip(&w) {
                    let mut p = Vector3::zeros();
                    p[axis] = sign * h[axis];
                    p[u] = xi * h[u];
                    p[v] = xj * h[v];
                    out.push(SurfaceNode {
                        position: p,
                        normal,
                        weight: wi * wj * h[u] * h[v],
                    });
                }
            }
        }
    }
}

fn mesh_nodes(vertices: &[Vector3<f64>], faces: &[[usize; 3]], res: usize, out: &mut Vec<SurfaceNode>) {
    let m = res as f64;
    // barycentric points of the degree-2 three-point rule
    let bary = [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ];
    for f in faces {
        let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        let cross = (b - a).cross(&(c - a));
        let normal = cross.normalize();
        let sub_area = 0.5 * cross.norm() / (m * m);
        let at = |i: f64, j: f64| a + (b - a) * (i / m) + (c - a) * (j / m);
        for i in 0..res {
            for j in 0..(res - i) {
                let (fi, fj) = (i as f64, j as f64);
                let mut tris = vec![[at(fi, fj), at(fi + 1.0, fj), at(fi, fj + 1.0)]];
                if i + j + 1 < res {
                    tris.push([at(fi + 1.0, fj), at(fi + 1.0, fj + 1.0), at(fi, fj + 1.0)]);
                }
                for t in tris {
                    for l in &bary {
                        out.push(SurfaceNode {
                            position: t[0] * l[0] + t[1] * l[1] + t[2] * l[2],
                            normal,
                            weight: sub_area / 3.0,
                        });
                    }
                }
            }
        }
    }
}

/// Parses the ASCII OBJ subset `v x y z` / `f i j k` (1-based indices).
/// Blank lines and `#` comments are skipped; any other content is an error.
pub fn parse_obj(text: &str) -> Result<Shape> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        match tokens.as_slice() {
            ["v", x, y, z] => {
                let mut p = [0.0; 3];
                for (slot, tok) in p.iter_mut().zip([x, y, z]) {
                    *slot = tok
                        .parse::<f64>()
                        .map_err(|_| err(format!("bad coordinate '{tok}'")))?;
                }
                vertices.push(Vector3::new(p[0], p[1], p[2]));
            }
            ["f", i, j, l] => {
                let mut f = [0usize; 3];
                for (slot, tok) in f.iter_mut().zip([i, j, l]) {
                    let idx = tok
                        .parse::<usize>()
                        .map_err(|_| err(format!("bad vertex index '{tok}'")))?;
                    if idx == 0 {
                        return Err(err("vertex indices are 1-based".into()));
                    }
                    *slot = idx - 1;
                }
                faces.push(f);
            }
            _ => return Err(err(format!("unsupported OBJ line '{trimmed}'"))),
        }
    }
    let shape = Shape::Mesh { vertices, faces };
    shape.validate()?;
    Ok(shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) const UNIT_CUBE_OBJ: &str = "\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

    fn sphere(r: f64) -> BodySpec {
        BodySpec::uniform(Shape::Sphere { radius: r }, 1e-18).unwrap()
    }

    fn closure(q: &SurfaceQuadrature) -> f64 {
        surface_moment(q, Vector3::zeros(), |n| n.normal).norm() / q.total_area
    }

    #[test]
    fn sphere_area_and_closure() {
        let r = 75e-9;
        let q = build_quadrature(&sphere(r), DEFAULT_ANALYTIC_RESOLUTION).unwrap();
        assert_eq!(q.len(), 64 * 128);
        assert_relative_eq!(q.total_area, 4.0 * PI * r * r, max_relative = 1e-9);
        assert_relative_eq!(q.total_area, 7.0686e-14, max_relative = 1e-4);
        assert!(closure(&q) < 1e-6);
        assert!(q.nodes.iter().all(|n| (n.normal.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn unit_cube_mesh_integrals() {
        let shape = parse_obj(UNIT_CUBE_OBJ).unwrap();
        let body = BodySpec::uniform(shape, 1.0).unwrap();
        assert_relative_eq!(body.center_of_mass, Vector3::new(0.5, 0.5, 0.5), epsilon = 1e-14);
        assert_relative_eq!(
            body.inertia_body,
            Matrix3::identity() / 6.0,
            epsilon = 1e-14
        );
        let q = build_quadrature(&body, 1).unwrap();
        assert_eq!(q.len(), 36);
        assert_relative_eq!(q.total_area, 6.0, epsilon = 1e-14);
        let flux = surface_moment(&q, 0.0, |n| n.position.dot(&n.normal));
        assert_relative_eq!(flux, 3.0, epsilon = 1e-14);
        assert!(closure(&q) < 1e-6);
    }

    #[test]
    fn mesh_subdivision_preserves_integrals() {
        let body = BodySpec::uniform(parse_obj(UNIT_CUBE_OBJ).unwrap(), 1.0).unwrap();
        let q = build_quadrature(&body, 3).unwrap();
        assert_eq!(q.len(), 12 * 9 * 3);
        assert_relative_eq!(q.total_area, 6.0, epsilon = 1e-13);
        // ∮ |s|² dA about the cube center: 6 faces × ∫∫ (1/4 + x² + y²) = 6 × (1/4 + 1/12 + 1/12)
        let m2 = surface_moment(&q, 0.0, |n| n.position.norm_squared());
        assert_relative_eq!(m2, 2.5, epsilon = 1e-13);
    }

    #[test]
    fn sphere_moments() {
        let r = 2.0;
        let q = build_quadrature(&sphere(r), 16).unwrap();
        let area = 4.0 * PI * r * r;
        assert_relative_eq!(surface_moment(&q, 0.0, |_| 1.0), area, max_relative = 1e-13);
        let first = surface_moment(&q, Vector3::zeros(), |n| n.position);
        assert!(first.norm() < 1e-6 * r * area);
        let nn = surface_moment(&q, Matrix3::zeros(), |n| n.normal * n.normal.transpose());
        assert_relative_eq!(nn, Matrix3::identity() * (area / 3.0), epsilon = 1e-12 * area);
    }

    #[test]
    fn cylinder_and_box_areas() {
        let (r, h) = (1.5, 2.0);
        let cyl = BodySpec::uniform(
            Shape::Cylinder {
                radius: r,
                half_length: h,
                capped: true,
            },
            1.0,
        )
        .unwrap();
        let q = build_quadrature(&cyl, 12).unwrap();
        assert_relative_eq!(q.total_area, 2.0 * PI * r * 2.0 * h + 2.0 * PI * r * r, max_relative = 1e-13);
        assert!(closure(&q) < 1e-12);
        let bx = BodySpec::uniform(
            Shape::Box {
                half_extents: Vector3::new(1.0, 2.0, 3.0),
            },
            1.0,
        )
        .unwrap();
        let q = build_quadrature(&bx, 4).unwrap();
        assert_relative_eq!(q.total_area, 8.0 * (2.0 + 3.0 + 6.0), max_relative = 1e-13);
        assert!(closure(&q) < 1e-12);
        // ∮ s·n dA = 3V
        let v = 48.0;
        assert_relative_eq!(surface_moment(&q, 0.0, |n| n.position.dot(&n.normal)), 3.0 * v, max_relative = 1e-13);
    }

    #[test]
    fn quadrature_converges_for_quartic_integrands() {
        let shapes = [
            Shape::Sphere { radius: 1.3 },
            Shape::Cylinder {
                radius: 0.7,
                half_length: 1.1,
                capped: true,
            },
            Shape::Box {
                half_extents: Vector3::new(0.5, 0.8, 1.2),
            },
        ];
        let f = |n: &SurfaceNode| {
            let s = n.position;
            s.x.powi(4) + s.x * s.y * s.z * n.normal.z + s.y.powi(2) * s.z.powi(2) + 0.3 * s.z
        };
        for shape in shapes {
            let body = BodySpec::uniform(shape, 1.0).unwrap();
            let a = surface_moment(&build_quadrature(&body, 8).unwrap(), 0.0, f);
            let b = surface_moment(&build_quadrature(&body, 16).unwrap(), 0.0, f);
            assert!(((a - b) / b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn rotated_body_integrates_to_rotated_moment() {
        let q_rot = Rotation::from_axis_angle(&Vector3::new(1.0, -2.0, 0.5), 0.9);
        let shape = Shape::Box {
            half_extents: Vector3::new(0.5, 0.8, 1.2),
        };
        let body = BodySpec::uniform(shape, 1.0)
            .unwrap()
            .with_center_of_mass(Vector3::new(0.1, 0.0, -0.2));
        let reference = build_quadrature(&body, 6).unwrap();
        let rotated = build_quadrature(&body.clone().with_orientation(q_rot), 6).unwrap();
        let tensor = |q: &SurfaceQuadrature| surface_moment(q, Matrix3::zeros(), |n| n.position * n.normal.transpose());
        let expect = q_rot.matrix() * tensor(&reference) * q_rot.matrix().transpose();
        assert_relative_eq!(tensor(&rotated), expect, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_meshes_are_rejected() {
        let flipped = UNIT_CUBE_OBJ.replace("f 1 3 2", "f 1 2 3");
        assert!(matches!(parse_obj(&flipped), Err(Error::DegenerateMesh(_))));
        let inverted: String = UNIT_CUBE_OBJ
            .lines()
            .map(|l| {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t[0] == "f" {
                    format!("f {} {} {}\n", t[1], t[3], t[2])
                } else {
                    format!("{l}\n")
                }
            })
            .collect();
        assert!(matches!(parse_obj(&inverted), Err(Error::DegenerateMesh(_))));
        let open: String = UNIT_CUBE_OBJ.lines().take(18).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_obj(&open), Err(Error::DegenerateMesh(_))));
        let zero = "v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\nf 1 4 2\nf 2 4 3\n";
        assert!(matches!(parse_obj(zero), Err(Error::DegenerateMesh(_))));
    }

    #[test]
    fn obj_parser_rejects_extra_content() {
        assert!(matches!(parse_obj("v 0 0 0 1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_obj("vn 0 0 1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_obj("v 0 0 0\nf 1/1 2 3\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        assert!(BodySpec::uniform(Shape::Sphere { radius: -1.0 }, 1.0).is_err());
        assert!(build_quadrature(&sphere(1.0), 0).is_err());
    }
}
