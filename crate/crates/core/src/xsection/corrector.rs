//! Cross-sectional warping problem: minimize
//! `∫_ω Q(x₁, x′, ι(B𝔭 + b e₁) + (0 | ∂₂w | ∂₃w))` over P1 fields `w`
//! subject to `∫w = 0` and `∫(x₂w₃ − x₃w₂) = 0`.

use crate::algebra::{axl, hat, iota, section_point, sym, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::linalg::{dot, pcg, CsrMatrix, LinearOperator};
use crate::material::{ElasticMaterialField, IsotropicTensor};

use super::mesh::CrossSectionMesh;

pub const SOLVER_TOLERANCE: f64 = 1e-10;

/// Nodal corrector displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpingField {
    pub w: Vec<[f64; 3]>,
}

impl WarpingField {
    pub fn zeros(nv: usize) -> Self {
        Self { w: vec![[0.0; 3]; nv] }
    }

    fn from_flat(x: &[f64]) -> Self {
        Self { w: x.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect() }
    }

    fn flat(&self) -> Vec<f64> {
        self.w.iter().flatten().copied().collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            w: self
                .w
                .iter()
                .zip(&other.w)
                .map(|(p, q)| [p[0] + q[0], p[1] + q[1], p[2] + q[2]])
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { w: self.w.iter().map(|p| [p[0] * s, p[1] * s, p[2] * s]).collect() }
    }

    /// `(∫w₁, ∫w₂, ∫w₃, ∫(x₂w₃ − x₃w₂))`, integrated exactly.
    pub fn gauge_values(&self, mesh: &CrossSectionMesh) -> [f64; 4] {
        let rows = gauge_rows(mesh);
        let x = self.flat();
        [dot(&rows[0], &x), dot(&rows[1], &x), dot(&rows[2], &x), dot(&rows[3], &x)]
    }
}

/// Exact integrals of the four gauge functionals against the P1 basis.
fn gauge_rows(mesh: &CrossSectionMesh) -> [Vec<f64>; 4] {
    let n = 3 * mesh.num_vertices();
    let mut rows = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let verts = mesh.vertices();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        let s2: f64 = tri.iter().map(|&i| verts[i][0]).sum();
        let s3: f64 = tri.iter().map(|&i| verts[i][1]).sum();
        for &v in tri {
            for (c, row) in rows.iter_mut().take(3).enumerate() {
                row[3 * v + c] += area / 3.0;
            }
            // ∫_T x λ_v = |T|/12 (Σ x_i + x_v).
            rows[3][3 * v + 2] += area / 12.0 * (s2 + verts[v][0]);
            rows[3][3 * v + 1] -= area / 12.0 * (s3 + verts[v][1]);
        }
    }
    rows
}

/// Strain of a unit nodal value of component `c` with barycentric gradient `g`.
fn unit_strain(c: usize, g: [f64; 2]) -> Mat3 {
    let mut d = Mat3::zeros();
    d[(c, 1)] = g[0];
    d[(c, 2)] = g[1];
    sym(&d)
}

fn datum(a: &Vec3, b: f64, x2: f64, x3: f64) -> Mat3 {
    iota(&(hat(a) * section_point(x2, x3) + Vec3::new(b, 0.0, 0.0)))
}

/// Assembled warping problem for one axial position, reusable for any datum.
#[derive(Debug, Clone)]
pub struct CorrectorSystem<'m> {
    mesh: &'m CrossSectionMesh,
    tensors: Vec<IsotropicTensor>,
    grads: Vec<[[f64; 2]; 3]>,
    stiffness: CsrMatrix,
    gauge: [Vec<f64>; 4],
    penalty: f64,
    diag: Vec<f64>,
}

struct Regularized<'a, 'm>(&'a CorrectorSystem<'m>);

impl LinearOperator for Regularized<'_, '_> {
    fn dim(&self) -> usize {
        self.0.stiffness.dim()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let sys = self.0;
        sys.stiffness.mul_vec(x, out);
        for row in &sys.gauge {
            let c = sys.penalty * dot(row, x);
            for (o, r) in out.iter_mut().zip(row) {
                *o += c * r;
            }
        }
    }
}

impl<'m> CorrectorSystem<'m> {
    pub fn new(mat: &ElasticMaterialField, x1: f64, mesh: &'m CrossSectionMesh) -> Result<Self> {
        let mo = mesh.moments();
        let scale = mo.i2 + mo.i3;
        if (mesh.area() - 1.0).abs() > 1e-8
            || mo.first[0].abs() > 1e-8
            || mo.first[1].abs() > 1e-8
            || mo.product.abs() > 1e-8 * scale
        {
            return Err(Error::InvalidArgument(
                "corrector problems need a centered, unit-area section mesh".into(),
            ));
        }
        let nt = mesh.num_triangles();
        let mut tensors = Vec::with_capacity(nt);
        let mut grads = Vec::with_capacity(nt);
        let mut trip = Vec::with_capacity(81 * nt);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let c = mesh.centroid(t);
            let tensor = mat.tensor_at(&Vec3::new(x1, c[0], c[1]));
            let g = mesh.barycentric_gradients(t);
            let area = mesh.triangle_area(t);
            let strains: Vec<(usize, Mat3)> = (0..3)
                .flat_map(|k| (0..3).map(move |comp| (k, comp)))
                .map(|(k, comp)| (3 * tri[k] + comp, unit_strain(comp, g[k])))
                .collect();
            for (i, si) in &strains {
                for (j, sj) in &strains {
                    trip.push((*i, *j, area * tensor.bilinear(si, sj)));
                }
            }
            tensors.push(tensor);
            grads.push(g);
        }
        let n = 3 * mesh.num_vertices();
        let stiffness = CsrMatrix::from_triplets(n, &trip);
        let kdiag = stiffness.diagonal();
        let penalty = kdiag.iter().sum::<f64>() / n as f64;
        let mut gauge = gauge_rows(mesh);
        for row in &mut gauge {
            let nr = dot(row, row).sqrt();
            row.iter_mut().for_each(|v| *v /= nr);
        }
        let diag = (0..n)
            .map(|i| kdiag[i] + penalty * gauge.iter().map(|r| r[i] * r[i]).sum::<f64>())
            .collect();
        Ok(Self { mesh, tensors, grads, stiffness, gauge, penalty, diag })
    }

    pub fn mesh(&self) -> &CrossSectionMesh {
        self.mesh
    }

    /// Right-hand side `f_k = ∫ 𝔸 sym ι(m) : S_k` (integrand linear in x′,
    /// so the centroid value is exact).
    fn load(&self, a: &Vec3, b: f64) -> Vec<f64> {
        let mut f = vec![0.0; self.stiffness.dim()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let c = self.mesh.centroid(t);
            let area = self.mesh.triangle_area(t);
            let stress = self.tensors[t].apply(&sym(&datum(a, b, c[0], c[1])));
            for k in 0..3 {
                for comp in 0..3 {
                    let s = unit_strain(comp, self.grads[t][k]);
                    f[3 * tri[k] + comp] += area * crate::algebra::ddot(&stress, &s);
                }
            }
        }
        f
    }

    /// Gauge-constrained minimizer for the datum `m = â𝔭 + b e₁`.
    pub fn solve(&self, a: &Vec3, b: f64) -> Result<WarpingField> {
        let f = self.load(a, b);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let n = rhs.len();
        let out = pcg(&Regularized(self), &self.diag, &rhs, SOLVER_TOLERANCE, 20 * n + 200)?;
        Ok(WarpingField::from_flat(&out.x))
    }

    /// `∫ Q(ι(m) + D(w))`, evaluated by the edge-midpoint rule (exact for the
    /// quadratic integrand on each triangle).
    pub fn energy(&self, a: &Vec3, b: f64, w: &WarpingField) -> f64 {
        let verts = self.mesh.vertices();
        let mut total = 0.0;
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let mut d = Mat3::zeros();
            for k in 0..3 {
                let wk = w.w[tri[k]];
                let g = self.grads[t][k];
                for comp in 0..3 {
                    d[(comp, 1)] += wk[comp] * g[0];
                    d[(comp, 2)] += wk[comp] * g[1];
                }
            }
            let area = self.mesh.triangle_area(t);
            let mut acc = 0.0;
            for k in 0..3 {
                let (p, q) = (verts[tri[k]], verts[tri[(k + 1) % 3]]);
                let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
                acc += self.tensors[t].quadratic(&(datum(a, b, mid[0], mid[1]) + d));
            }
            total += area * acc / 3.0;
        }
        total
    }
}

/// Solves the warping problem for skew `B` and stretch `b`, returning the
/// minimizer and the minimal energy.
pub fn corrector_solve(
    mat: &ElasticMaterialField,
    x1: f64,
    bmat: &Mat3,
    b: f64,
    mesh: &CrossSectionMesh,
) -> Result<(WarpingField, f64)> {
    if sym(bmat).norm() > 1e-12 * (1.0 + bmat.norm()) {
        return Err(Error::InvalidArgument("B must be skew-symmetric".into()));
    }
    let sys = CorrectorSystem::new(mat, x1, mesh)?;
    let a = axl(bmat);
    let w = sys.solve(&a, b)?;
    let e = sys.energy(&a, b, &w);
    Ok((w, e))
}
