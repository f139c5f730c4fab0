//! Thin-rod energy on the fixed domain `Ω = (0, L) × ω` with the scaled
//! gradient `∇_h = (∂₁, h⁻¹∂₂, h⁻¹∂₃)`, discretized by P1 tetrahedra.

use rayon::prelude::*;

use crate::algebra::{Mat3, Vec3};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, EnvelopeCholesky};
use crate::material::ElasticMaterialField;
use crate::optim::{minimize, LbfgsSettings, OptimOutcome};
use crate::rod1d::{centerline_at, frame_at, frame_integrate, CurvatureField, LoadSpec};
use crate::xsection::CrossSectionMesh;

/// Tensor product of a uniform partition of `(0, L)` with a section mesh,
/// each prism split into three tetrahedra. Node `k·nv + v` sits at
/// `(x₁ = kΔ, section vertex v)`.
#[derive(Debug, Clone)]
pub struct PrismMesh {
    section: CrossSectionMesh,
    length: f64,
    layers: usize,
    nodes: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    volumes: Vec<f64>,
    gradients: Vec<[Vec3; 4]>,
    tet_layer: Vec<usize>,
}

impl PrismMesh {
    pub fn new(section: CrossSectionMesh, length: f64, layers: usize) -> Result<Self> {
        if !(length > 0.0) || layers == 0 {
            return Err(Error::InvalidArgument("prism mesh needs L > 0 and at least one layer".into()));
        }
        let nv = section.num_vertices();
        let d = length / layers as f64;
        let mut nodes = Vec::with_capacity(nv * (layers + 1));
        for k in 0..=layers {
            for v in section.vertices() {
                nodes.push(Vec3::new(k as f64 * d, v[0], v[1]));
            }
        }
        let mut tets = Vec::with_capacity(3 * layers * section.num_triangles());
        let mut tet_layer = Vec::with_capacity(tets.capacity());
        for k in 0..layers {
            for tri in section.triangles() {
                let mut s = *tri;
                s.sort_unstable();
                let lo = |v: usize| k * nv + v;
                let hi = |v: usize| (k + 1) * nv + v;
                let [a, b, c] = s;
                // Quad-face diagonals always join the lower-index bottom vertex
                // to the higher-index top vertex, so neighbours agree.
                for t in [
                    [lo(a), lo(b), lo(c), hi(c)],
                    [lo(a), lo(b), hi(b), hi(c)],
                    [lo(a), hi(a), hi(b), hi(c)],
                ] {
                    tets.push(t);
                    tet_layer.push(k);
                }
            }
        }
        let mut volumes = Vec::with_capacity(tets.len());
        let mut gradients = Vec::with_capacity(tets.len());
        for t in &mut tets {
            let mut vol = signed_volume(&nodes, t);
            if vol < 0.0 {
                t.swap(2, 3);
                vol = -vol;
            }
            if vol <= 0.0 {
                return Err(Error::MalformedMesh("degenerate tetrahedron".into()));
            }
            volumes.push(vol);
            gradients.push(shape_gradients(&nodes, t));
        }
        Ok(Self { section, length, layers, nodes, tets, volumes, gradients, tet_layer })
    }

    pub fn section(&self) -> &CrossSectionMesh {
        &self.section
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn delta(&self) -> f64 {
        self.length / self.layers as f64
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn volume(&self, t: usize) -> f64 {
        self.volumes[t]
    }

    pub fn shape_gradients(&self, t: usize) -> &[Vec3; 4] {
        &self.gradients[t]
    }

    pub fn layer(&self, t: usize) -> usize {
        self.tet_layer[t]
    }

    pub fn centroid(&self, t: usize) -> Vec3 {
        self.tets[t].iter().map(|&i| self.nodes[i]).sum::<Vec3>() / 4.0
    }

    /// Node indices of the slice `x₁ = kΔ`.
    pub fn slice_nodes(&self, k: usize) -> std::ops::Range<usize> {
        let nv = self.section.num_vertices();
        k * nv..(k + 1) * nv
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        node < self.section.num_vertices()
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

fn signed_volume(nodes: &[Vec3], t: &[usize; 4]) -> f64 {
    let [a, b, c, d] = t.map(|i| nodes[i]);
    (b - a).dot(&(c - a).cross(&(d - a))) / 6.0
}

/// Gradients of the four P1 basis functions.
fn shape_gradients(nodes: &[Vec3], t: &[usize; 4]) -> [Vec3; 4] {
    let p = t.map(|i| nodes[i]);
    let j = Mat3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let jinv_t = j.try_inverse().expect("non-degenerate tetrahedron").transpose();
    let g1 = jinv_t.column(0).into_owned();
    let g2 = jinv_t.column(1).into_owned();
    let g3 = jinv_t.column(2).into_owned();
    [-(g1 + g2 + g3), g1, g2, g3]
}

/// Nodal deformation `yʰ` together with its thickness parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub y: Vec<Vec3>,
    pub h: f64,
}

impl DeformationField {
    /// `y(x) = (x₁, h x₂, h x₃)`.
    pub fn rest(mesh: &PrismMesh, h: f64) -> Result<Self> {
        check_h(h)?;
        Ok(Self { y: mesh.nodes().iter().map(|x| Vec3::new(x.x, h * x.y, h * x.z)).collect(), h })
    }

    /// Largest violation of the clamp `y(0, x′) = (0, h x′)`.
    pub fn dirichlet_defect(&self, mesh: &PrismMesh) -> f64 {
        mesh.slice_nodes(0)
            .map(|i| {
                let x = mesh.nodes()[i];
                (self.y[i] - Vec3::new(0.0, self.h * x.y, self.h * x.z)).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("thickness h = {h} must be positive")));
    }
    Ok(())
}

/// `∇_h y` on tetrahedron `t`.
pub fn scaled_gradient(mesh: &PrismMesh, def: &DeformationField, t: usize) -> Mat3 {
    let g = mesh.shape_gradients(t);
    let mut f = Mat3::zeros();
    for (k, &node) in mesh.tets()[t].iter().enumerate() {
        f += def.y[node] * g[k].transpose();
    }
    let s = 1.0 / def.h;
    f.column_mut(1).scale_mut(s);
    f.column_mut(2).scale_mut(s);
    f
}

/// Scaled basis gradient `D ∇N` with `D = diag(1, 1/h, 1/h)`.
fn scaled_basis(g: &Vec3, h: f64) -> Vec3 {
    Vec3::new(g.x, g.y / h, g.z / h)
}

/// Energy split into its elastic part `h⁻²∫W` and the load part `∫g·y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub elastic: f64,
    pub load: f64,
    pub inverted_elements: usize,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.elastic - self.load
    }
}

pub fn energy_parts(mesh: &PrismMesh, def: &DeformationField, mat: &ElasticMaterialField, load: &LoadSpec) -> EnergyParts {
    let h2 = def.h * def.h;
    let per_tet: Vec<(f64, f64, bool)> = (0..mesh.tets().len())
        .into_par_iter()
        .map(|t| {
            let xc = mesh.centroid(t);
            let d = mat.density(&xc, &scaled_gradient(mesh, def, t));
            let ymean = mesh.tets()[t].iter().map(|&i| def.y[i]).sum::<Vec3>() / 4.0;
            let vol = mesh.volume(t);
            (vol * d.value / h2, vol * load.g(xc.x).dot(&ymean), d.inverted)
        })
        .collect();
    let mut parts = EnergyParts { elastic: 0.0, load: 0.0, inverted_elements: 0 };
    for (e, l, inv) in per_tet {
        parts.elastic += e;
        parts.load += l;
        parts.inverted_elements += inv as usize;
    }
    parts
}

/// Discrete `ℰʰ(y) = h⁻²∫W(x, ∇_h y) − ∫g·y` with one-point quadrature.
pub fn energy_3d(mesh: &PrismMesh, def: &DeformationField, mat: &ElasticMaterialField, load: &LoadSpec) -> f64 {
    energy_parts(mesh, def, mat, load).total()
}

/// Energy and its nodal gradient. Per-element work runs in parallel; the
/// scatter into nodes is sequential in element order.
pub fn energy_and_gradient_3d(
    mesh: &PrismMesh,
    def: &DeformationField,
    mat: &ElasticMaterialField,
    load: &LoadSpec,
) -> (f64, Vec<Vec3>) {
    let h = def.h;
    let h2 = h * h;
    let per_tet: Vec<(f64, [Vec3; 4])> = (0..mesh.tets().len())
        .into_par_iter()
        .map(|t| {
            let xc = mesh.centroid(t);
            let vol = mesh.volume(t);
            let (d, dw) = mat.density_and_gradient(&xc, &scaled_gradient(mesh, def, t));
            let g = load.g(xc.x);
            let ymean = mesh.tets()[t].iter().map(|&i| def.y[i]).sum::<Vec3>() / 4.0;
            let grads = mesh.shape_gradients(t);
            let mut local = [Vec3::zeros(); 4];
            for k in 0..4 {
                local[k] = dw * scaled_basis(&grads[k], h) * (vol / h2) - g * (vol / 4.0);
            }
            (vol * d.value / h2 - vol * g.dot(&ymean), local)
        })
        .collect();
    let mut energy = 0.0;
    let mut grad = vec![Vec3::zeros(); mesh.num_nodes()];
    for (t, (e, local)) in per_tet.into_iter().enumerate() {
        energy += e;
        for (k, &node) in mesh.tets()[t].iter().enumerate() {
            grad[node] += local[k];
        }
    }
    (energy, grad)
}

/// `Dℰʰ(y)[ψ]` for a nodal test field vanishing on the clamped slice.
pub fn first_variation_3d(
    mesh: &PrismMesh,
    def: &DeformationField,
    mat: &ElasticMaterialField,
    load: &LoadSpec,
    test: &[Vec3],
) -> Result<f64> {
    if test.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument("test field has the wrong number of nodes".into()));
    }
    if mesh.slice_nodes(0).any(|i| test[i] != Vec3::zeros()) {
        return Err(Error::InvalidArgument("test field must vanish at x1 = 0".into()));
    }
    let (_, grad) = energy_and_gradient_3d(mesh, def, mat, load);
    Ok(grad.iter().zip(test).map(|(g, p)| g.dot(p)).sum())
}

/// `min det ∇_h y` over all elements.
pub fn min_det(mesh: &PrismMesh, def: &DeformationField) -> f64 {
    (0..mesh.tets().len())
        .into_par_iter()
        .map(|t| scaled_gradient(mesh, def, t).determinant())
        .reduce(|| f64::INFINITY, f64::min)
}

/// Linearized stiffness `h⁻²∫𝔸 sym(D∇ψ):sym(D∇φ)` on the free degrees of
/// freedom (all nodes past the clamped slice, three components each).
pub fn linearized_stiffness(mesh: &PrismMesh, mat: &ElasticMaterialField, h: f64) -> CsrMatrix {
    let nv = mesh.section().num_vertices();
    let nfree = 3 * (mesh.num_nodes() - nv);
    let h2 = h * h;
    let mut trip = Vec::with_capacity(mesh.tets().len() * 144);
    for (t, tet) in mesh.tets().iter().enumerate() {
        let tensor = mat.tensor_at(&mesh.centroid(t));
        let vol = mesh.volume(t);
        let grads = mesh.shape_gradients(t);
        let mut strains = Vec::with_capacity(12);
        for (k, &node) in tet.iter().enumerate() {
            if node < nv {
                continue;
            }
            let b = scaled_basis(&grads[k], h);
            for c in 0..3 {
                let mut m = Mat3::zeros();
                m.set_row(c, &b.transpose());
                strains.push((3 * (node - nv) + c, crate::algebra::sym(&m)));
            }
        }
        for (i, si) in &strains {
            for (j, sj) in &strains {
                trip.push((*i, *j, vol / h2 * tensor.bilinear(si, sj)));
            }
        }
    }
    CsrMatrix::from_triplets(nfree, &trip)
}

#[derive(Debug, Clone)]
pub struct Solution3d {
    pub def: DeformationField,
    pub energy: f64,
    pub parts: EnergyParts,
    pub min_det: f64,
    pub optim: OptimOutcome,
}

/// Minimizes `ℰʰ` over the free nodes with preconditioned L-BFGS.
pub fn minimize_3d(
    mesh: &PrismMesh,
    init: &DeformationField,
    mat: &ElasticMaterialField,
    load: &LoadSpec,
    settings: &LbfgsSettings,
) -> Result<Solution3d> {
    check_h(init.h)?;
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let defect = init.dirichlet_defect(mesh);
    if defect > 1e-14 * (1.0 + init.h) {
        return Err(Error::InvalidArgument(format!("initial state violates the clamp by {defect:.3e}")));
    }
    let nv = mesh.section().num_vertices();
    let h = init.h;
    let chol = EnvelopeCholesky::factor(&linearized_stiffness(mesh, mat, h))?;
    let precond = |v: &[f64]| {
        let mut x = v.to_vec();
        chol.solve_in_place(&mut x);
        x
    };
    let assemble = |x: &[f64]| -> DeformationField {
        let mut y = init.y.clone();
        for (i, c) in x.chunks_exact(3).enumerate() {
            y[nv + i] = Vec3::new(c[0], c[1], c[2]);
        }
        DeformationField { y, h }
    };
    let objective = |x: &[f64]| {
        let def = assemble(x);
        let (e, g) = energy_and_gradient_3d(mesh, &def, mat, load);
        (e, g[nv..].iter().flat_map(|v| [v.x, v.y, v.z]).collect())
    };
    let x0: Vec<f64> = init.y[nv..].iter().flat_map(|v| [v.x, v.y, v.z]).collect();
    match minimize(objective, x0, settings, Some(&precond)) {
        Ok(out) => {
            let def = assemble(&out.x);
            let parts = energy_parts(mesh, &def, mat, load);
            Ok(Solution3d { min_det: min_det(mesh, &def), energy: out.value, parts, def, optim: out })
        }
        Err(e) => {
            let best = assemble(&e.best.x);
            Err(Error::Solve3d { min_det: min_det(mesh, &best), source: e })
        }
    }
}

/// Lifts a limit configuration: `y = ∫₀^{x₁}R e₁ + h x₂ R e₂ + h x₃ R e₃`.
pub fn lift_rod_state(mesh: &PrismMesh, curvature: &CurvatureField, h: f64) -> Result<DeformationField> {
    check_h(h)?;
    if (curvature.length - mesh.length()).abs() > 1e-12 * mesh.length() {
        return Err(Error::InvalidArgument("rod and prism mesh lengths differ".into()));
    }
    let state = frame_integrate(curvature);
    let mut y = vec![Vec3::zeros(); mesh.num_nodes()];
    for k in 0..=mesh.layers() {
        let x1 = k as f64 * mesh.delta();
        let (r, c) = if k == 0 {
            (Mat3::identity(), Vec3::zeros())
        } else {
            (frame_at(curvature, &state, x1), centerline_at(curvature, &state, x1))
        };
        for i in mesh.slice_nodes(k) {
            let x = mesh.nodes()[i];
            y[i] = c + r.column(1) * (h * x.y) + r.column(2) * (h * x.z);
        }
    }
    Ok(DeformationField { y, h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::so3_exp;
    use crate::material::IsotropicTensor;
    use crate::xsection::disk_mesh;

    fn mesh() -> PrismMesh {
        PrismMesh::new(disk_mesh(1.0, 2).unwrap().center_and_normalize(), 1.0, 4).unwrap()
    }

    #[test]
    fn prisms_fill_the_domain() {
        let m = mesh();
        assert!((m.total_volume() - 1.0).abs() < 1e-12);
        assert_eq!(m.tets().len(), 3 * 4 * m.section().num_triangles());
    }

    #[test]
    fn scaled_gradient_of_affine_maps() {
        let m = mesh();
        let h = 0.1;
        let rest = DeformationField::rest(&m, h).unwrap();
        let a = Mat3::new(1.0, 0.2, -0.3, 0.5, 2.0, 0.1, -0.4, 0.3, 1.5);
        let affine = DeformationField { y: m.nodes().iter().map(|x| a * x).collect(), h };
        let expect = a * Mat3::from_diagonal(&Vec3::new(1.0, 1.0 / h, 1.0 / h));
        for t in 0..m.tets().len() {
            assert!((scaled_gradient(&m, &rest, t) - Mat3::identity()).norm() < 1e-12);
            assert!((scaled_gradient(&m, &affine, t) - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn rest_state_is_stress_free() {
        let m = mesh();
        let mat = ElasticMaterialField::homogeneous(IsotropicTensor::new(1.0, 1.0).unwrap()).unwrap();
        let zero = LoadSpec::uniform(1.0, Vec3::zeros()).unwrap();
        let rest = DeformationField::rest(&m, 0.2).unwrap();
        assert!(energy_3d(&m, &rest, &mat, &zero).abs() < 1e-25);
        let (_, g) = energy_and_gradient_3d(&m, &rest, &mat, &zero);
        assert!(g.iter().all(|v| v.norm() < 1e-12));
        assert!(rest.dirichlet_defect(&m) == 0.0);
    }

    #[test]
    fn lift_of_straight_rod_is_rest_state() {
        let m = mesh();
        let c = CurvatureField::zeros(1.0, 3).unwrap();
        let lift = lift_rod_state(&m, &c, 0.1).unwrap();
        let rest = DeformationField::rest(&m, 0.1).unwrap();
        for (p, q) in lift.y.iter().zip(&rest.y) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn lifted_twist_has_expected_gradient() {
        // Constant twist τ: the lift has ∇_h y = R(x₁)(I + h ι(A𝔭)), which the
        // P1 interpolant reproduces up to O(Δ) plus O(h) times the section mesh size.
        let tau = 0.8;
        let h = 0.1;
        let c = CurvatureField::new(1.0, vec![Vec3::new(tau, 0.0, 0.0); 5]).unwrap();
        let err = |layers: usize| {
            let m = PrismMesh::new(disk_mesh(1.0, 2).unwrap().center_and_normalize(), 1.0, layers).unwrap();
            let lift = lift_rod_state(&m, &c, h).unwrap();
            (0..m.tets().len())
                .map(|t| {
                    let x = m.centroid(t);
                    let r = so3_exp(&Vec3::new(tau * x.x, 0.0, 0.0));
                    let col1 = r * Vec3::new(1.0, -h * tau * x.z, h * tau * x.y);
                    let expect =
                        Mat3::from_columns(&[col1, r.column(1).into_owned(), r.column(2).into_owned()]);
                    (scaled_gradient(&m, &lift, t) - expect).norm()
                })
                .fold(0.0, f64::max)
        };
        let errs = [err(25), err(50), err(100)];
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] < 0.025, "{errs:?}");
    }
}
