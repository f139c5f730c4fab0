use std::collections::HashMap;
use std::f64::consts::PI;

use crate::algebra::principal_angle;
use crate::error::{Error, Result};

/// Integrals of low-order monomials over the section.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    /// `∫x₂`, `∫x₃`.
    pub first: [f64; 2],
    /// `∫x₂x₃`.
    pub product: f64,
    /// `∫x₂²`.
    pub i2: f64,
    /// `∫x₃²`.
    pub i3: f64,
}

/// Geometry from which a cross-section mesh is built.
#[derive(Debug, Clone, PartialEq)]
pub enum SectionSpec {
    Disk { radius: f64 },
    Rectangle { width: f64, height: f64 },
    /// Already-parsed mesh; refined uniformly until edges meet the target.
    Imported(CrossSectionMesh),
}

/// Conforming, positively oriented triangulation of a planar section.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    area: f64,
    moments: Moments,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl CrossSectionMesh {
    /// Validates connectivity and orientation and fills in the moments.
    /// Negatively oriented triangles are reoriented.
    pub fn new(vertices: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if nv < 3 || triangles.is_empty() {
            return Err(Error::MalformedMesh("mesh needs at least one triangle".into()));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::MalformedMesh("non-finite vertex coordinate".into()));
        }
        let scale = bounding_diameter(&vertices);
        let mut used = vec![false; nv];
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::MalformedMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::MalformedMesh(format!("triangle {t} repeats a vertex")));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a.abs() <= 1e-14 * scale * scale {
                return Err(Error::MalformedMesh(format!("triangle {t} has zero area")));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
            for &i in tri.iter() {
                used[i] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::MalformedMesh(format!("vertex {v} is not used by any triangle")));
        }

        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut boundary = Vec::new();
        for (&(a, b), ts) in &edges {
            match ts.len() {
                1 => boundary.push((a, b)),
                2 => {}
                _ => {
                    return Err(Error::MalformedMesh(format!(
                        "edge ({a}, {b}) is shared by {} triangles",
                        ts.len()
                    )))
                }
            }
        }
        boundary.sort_unstable();

        // Connectivity through shared edges.
        let mut parent: Vec<usize> = (0..triangles.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for ts in edges.values() {
            if ts.len() == 2 {
                let (ra, rb) = (find(&mut parent, ts[0]), find(&mut parent, ts[1]));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let root = find(&mut parent, 0);
        if (0..triangles.len()).any(|t| find(&mut parent, t) != root) {
            return Err(Error::MalformedMesh("triangulation is not connected".into()));
        }

        // A vertex strictly inside a boundary edge is a hanging node.
        for &(a, b) in &boundary {
            let (pa, pb) = (vertices[a], vertices[b]);
            let len2 = (pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2);
            for (v, &p) in vertices.iter().enumerate() {
                if v == a || v == b {
                    continue;
                }
                let t = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1])) / len2;
                if t <= 1e-12 || t >= 1.0 - 1e-12 {
                    continue;
                }
                let d = signed_area(pa, pb, p).abs() * 2.0 / len2.sqrt();
                if d <= 1e-12 * scale {
                    return Err(Error::MalformedMesh(format!(
                        "vertex {v} hangs on edge ({a}, {b})"
                    )));
                }
            }
        }

        let mut mesh = Self { vertices, triangles, area: 0.0, moments: Moments::default() };
        mesh.recompute_moments();
        Ok(mesh)
    }

    /// Parses the ASCII format: a header `nv nt`, `nv` lines `x2 x3`, then
    /// `nt` lines `i j k` with 0-based indices. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, message: String| Error::MeshParse { line, message };
        let (hline, header) = lines.next().ok_or_else(|| err(1, "empty mesh file".into()))?;
        let counts = parse_fields::<usize>(header, 2).map_err(|m| err(hline, m))?;
        let (nv, nt) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        for k in 0..nv {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| err(hline + k + 1, format!("expected {nv} vertex lines, found {k}")))?;
            let c = parse_fields::<f64>(l, 2).map_err(|m| err(ln, m))?;
            if !c.iter().all(|x| x.is_finite()) {
                return Err(err(ln, "non-finite coordinate".into()));
            }
            vertices.push([c[0], c[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        let mut last = hline + nv;
        for k in 0..nt {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| err(last + 1, format!("expected {nt} triangle lines, found {k}")))?;
            let idx = parse_fields::<usize>(l, 3).map_err(|m| err(ln, m))?;
            if let Some(&bad) = idx.iter().find(|&&i| i >= nv) {
                return Err(err(ln, format!("vertex index {bad} out of range (nv = {nv})")));
            }
            triangles.push([idx[0], idx[1], idx[2]]);
            last = ln;
        }
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln, "unexpected trailing content".into()));
        }
        Self::new(vertices, triangles)
    }

    /// Serializes in the format read by [`CrossSectionMesh::parse`].
    pub fn to_ascii(&self) -> String {
        let mut s = format!("{} {}\n", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            s.push_str(&format!("{:.17e} {:.17e}\n", v[0], v[1]));
        }
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        s
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn moments(&self) -> Moments {
        self.moments
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Gradients `(∂₂λ_k, ∂₃λ_k)` of the three barycentric coordinates.
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let two_area = 2.0 * signed_area(a, b, c);
        let grad = |p: [f64; 2], q: [f64; 2]| [(p[1] - q[1]) / two_area, (q[0] - p[0]) / two_area];
        [grad(b, c), grad(c, a), grad(a, b)]
    }

    pub fn max_edge(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    fn recompute_moments(&mut self) {
        let mut area = 0.0;
        let mut m = Moments::default();
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
            let ar = signed_area(a, b, c);
            let s2 = a[0] + b[0] + c[0];
            let s3 = a[1] + b[1] + c[1];
            area += ar;
            m.first[0] += ar * s2 / 3.0;
            m.first[1] += ar * s3 / 3.0;
            m.i2 += ar / 12.0 * (a[0] * a[0] + b[0] * b[0] + c[0] * c[0] + s2 * s2);
            m.i3 += ar / 12.0 * (a[1] * a[1] + b[1] * b[1] + c[1] * c[1] + s3 * s3);
            m.product += ar / 12.0 * (a[0] * a[1] + b[0] * b[1] + c[0] * c[1] + s2 * s3);
        }
        self.area = area;
        self.moments = m;
    }

    /// Translates the centroid to the origin, rotates onto principal axes and
    /// rescales to unit area.
    pub fn center_and_normalize(&self) -> Self {
        let c = [self.moments.first[0] / self.area, self.moments.first[1] / self.area];
        let mut verts: Vec<[f64; 2]> =
            self.vertices.iter().map(|v| [v[0] - c[0], v[1] - c[1]]).collect();
        // Central second moments.
        let i2 = self.moments.i2 - self.area * c[0] * c[0];
        let i3 = self.moments.i3 - self.area * c[1] * c[1];
        let i23 = self.moments.product - self.area * c[0] * c[1];
        if i23.abs() > 1e-14 * (i2 + i3) {
            let theta = principal_angle(i2, i3, i23);
            let (s, co) = theta.sin_cos();
            for v in &mut verts {
                *v = [co * v[0] + s * v[1], -s * v[0] + co * v[1]];
            }
        }
        let k = 1.0 / self.area.sqrt();
        for v in &mut verts {
            v[0] *= k;
            v[1] *= k;
        }
        let mut mesh = Self {
            vertices: verts,
            triangles: self.triangles.clone(),
            area: 0.0,
            moments: Moments::default(),
        };
        mesh.recompute_moments();
        mesh
    }

    /// Splits every triangle into four through its edge midpoints.
    pub fn refine_uniform(&self) -> Self {
        let mut verts = self.vertices.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut tris = Vec::with_capacity(4 * self.triangles.len());
        for tri in &self.triangles {
            let mut m = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    let (p, q) = (verts[a], verts[b]);
                    verts.push([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]);
                    verts.len() - 1
                });
            }
            tris.push([tri[0], m[0], m[2]]);
            tris.push([m[0], tri[1], m[1]]);
            tris.push([m[2], m[1], tri[2]]);
            tris.push([m[0], m[1], m[2]]);
        }
        let mut mesh =
            Self { vertices: verts, triangles: tris, area: 0.0, moments: Moments::default() };
        mesh.recompute_moments();
        mesh
    }
}

fn bounding_diameter(v: &[[f64; 2]]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in v {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
}

fn parse_fields<T: std::str::FromStr>(line: &str, n: usize) -> std::result::Result<Vec<T>, String> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != n {
        return Err(format!("expected {n} fields, found {}", parts.len()));
    }
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| format!("cannot parse {p:?}")))
        .collect()
}

/// Builds a raw (not yet normalized) mesh for `spec`.
pub fn generate_mesh(spec: &SectionSpec, target_edge: f64) -> Result<CrossSectionMesh> {
    if !(target_edge > 0.0 && target_edge.is_finite()) {
        return Err(Error::InvalidMeshSpec(format!("target_edge = {target_edge} must be positive")));
    }
    match spec {
        SectionSpec::Disk { radius } => {
            if !(*radius > 0.0 && radius.is_finite()) {
                return Err(Error::InvalidMeshSpec(format!("disk radius = {radius} must be positive")));
            }
            let rings = (radius / target_edge).ceil().max(1.0) as usize;
            disk_mesh(*radius, rings)
        }
        SectionSpec::Rectangle { width, height } => {
            if !(*width > 0.0 && *height > 0.0 && width.is_finite() && height.is_finite()) {
                return Err(Error::InvalidMeshSpec(format!(
                    "rectangle sides {width} × {height} must be positive"
                )));
            }
            let nx = (width / target_edge).ceil().max(1.0) as usize;
            let ny = (height / target_edge).ceil().max(1.0) as usize;
            rectangle_mesh(*width, *height, nx, ny)
        }
        SectionSpec::Imported(mesh) => {
            let mut m = mesh.clone();
            while m.max_edge() > 2.0 * target_edge {
                m = m.refine_uniform();
            }
            Ok(m)
        }
    }
}

/// Concentric-ring disk mesh: a center node and `6k` nodes on ring `k`.
pub fn disk_mesh(radius: f64, rings: usize) -> Result<CrossSectionMesh> {
    if rings == 0 {
        return Err(Error::InvalidMeshSpec("disk needs at least one ring".into()));
    }
    let mut verts = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(verts.len());
        let r = radius * k as f64 / rings as f64;
        let m = 6 * k;
        for j in 0..m {
            let phi = 2.0 * PI * j as f64 / m as f64;
            verts.push([r * phi.cos(), r * phi.sin()]);
        }
    }
    let mut tris = Vec::new();
    for j in 0..6 {
        tris.push([0, ring_start[1] + j, ring_start[1] + (j + 1) % 6]);
    }
    for k in 2..=rings {
        let (m_in, m_out) = (6 * (k - 1), 6 * k);
        let (s_in, s_out) = (ring_start[k - 1], ring_start[k]);
        let (mut ci, mut co) = (0usize, 0usize);
        while ci < m_in || co < m_out {
            let advance_outer = co < m_out && (ci == m_in || (co + 1) * m_in <= (ci + 1) * m_out);
            let inner = s_in + ci % m_in;
            let outer = s_out + co % m_out;
            if advance_outer {
                tris.push([inner, outer, s_out + (co + 1) % m_out]);
                co += 1;
            } else {
                tris.push([inner, outer, s_in + (ci + 1) % m_in]);
                ci += 1;
            }
        }
    }
    CrossSectionMesh::new(verts, tris)
}

/// `nx × ny` grid on `[0, width] × [0, height]` with alternating diagonals.
pub fn rectangle_mesh(width: f64, height: f64, nx: usize, ny: usize) -> Result<CrossSectionMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMeshSpec("rectangle needs at least one cell per side".into()));
    }
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    CrossSectionMesh::new(verts, tris)
}
