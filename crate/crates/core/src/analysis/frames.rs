use crate::algebra::{so3_exp, so3_log, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::material::polar_rotation;
use crate::rod1d::{segment_centerline_increment, CurvatureField};
use crate::rod3d::{scaled_gradient, DeformationField, PrismMesh};

/// Rotations `Rʰ` at the axial nodes and `Aʰ = (Rʰ)ᵀ(Rʰ)′` per layer.
///
/// Between nodes the frame follows the geodesic
/// `R(x₁) = R_k exp((x₁ − x_k) Âʰ_k)`, so `Aʰ_k = log(R_kᵀ R_{k+1}) / Δ`
/// is exactly skew.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceFrameField {
    pub length: f64,
    pub frames: Vec<Mat3>,
    pub curvature: Vec<Vec3>,
}

impl SliceFrameField {
    pub fn from_frames(length: f64, frames: Vec<Mat3>) -> Result<Self> {
        if frames.len() < 2 || !(length > 0.0) {
            return Err(Error::InvalidArgument("a frame field needs two nodes and a positive length".into()));
        }
        let d = length / (frames.len() - 1) as f64;
        let curvature = frames.windows(2).map(|w| so3_log(&(w[0].transpose() * w[1])) / d).collect();
        Ok(Self { length, frames, curvature })
    }

    pub fn layers(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn delta(&self) -> f64 {
        self.length / self.layers() as f64
    }

    fn locate(&self, x1: f64) -> (usize, f64) {
        let d = self.delta();
        let k = ((x1 / d).floor().max(0.0) as usize).min(self.layers() - 1);
        (k, x1 - k as f64 * d)
    }

    pub fn frame_at(&self, x1: f64) -> Mat3 {
        let (k, s) = self.locate(x1);
        self.frames[k] * so3_exp(&(self.curvature[k] * s))
    }

    /// `∫₀^{x_k} R e₁` at every node.
    pub fn centerline(&self) -> Vec<Vec3> {
        let d = self.delta();
        let mut out = Vec::with_capacity(self.frames.len());
        let mut acc = Vec3::zeros();
        out.push(acc);
        for (r, a) in self.frames.iter().zip(&self.curvature) {
            acc += segment_centerline_increment(r, a, d);
            out.push(acc);
        }
        out
    }

    /// The curvature as a limit-model unknown (frames rebased to `R(0) = I`).
    pub fn curvature_field(&self) -> Result<CurvatureField> {
        CurvatureField::new(self.length, self.curvature.clone())
    }

    /// Largest `|RᵀR − I|` and `|det R − 1|` over the nodes.
    pub fn max_rotation_defect(&self) -> f64 {
        self.frames
            .iter()
            .map(|r| ((r.transpose() * r) - Mat3::identity()).norm().max((r.determinant() - 1.0).abs()))
            .fold(0.0, f64::max)
    }
}

/// Volume-weighted mean of `∇_h y` over the elements touching each axial node.
pub fn slice_mean_gradients(mesh: &PrismMesh, def: &DeformationField) -> Vec<Mat3> {
    let n = mesh.layers();
    let mut layer_sum = vec![Mat3::zeros(); n];
    let mut layer_vol = vec![0.0; n];
    for t in 0..mesh.tets().len() {
        let k = mesh.layer(t);
        let v = mesh.volume(t);
        layer_sum[k] += scaled_gradient(mesh, def, t) * v;
        layer_vol[k] += v;
    }
    (0..=n)
        .map(|k| {
            let adj: Vec<usize> = [k.checked_sub(1), (k < n).then_some(k)].into_iter().flatten().collect();
            let s: Mat3 = adj.iter().map(|&j| layer_sum[j]).sum();
            let v: f64 = adj.iter().map(|&j| layer_vol[j]).sum();
            s / v
        })
        .collect()
}

/// Area-weighted mean of `y` over each axial slice.
pub fn slice_mean_positions(mesh: &PrismMesh, def: &DeformationField) -> Vec<Vec3> {
    let sec = mesh.section();
    let nv = sec.num_vertices();
    let mut w = vec![0.0; nv];
    for (t, tri) in sec.triangles().iter().enumerate() {
        for &v in tri {
            w[v] += sec.triangle_area(t) / 3.0;
        }
    }
    let total: f64 = w.iter().sum();
    (0..=mesh.layers())
        .map(|k| mesh.slice_nodes(k).zip(&w).map(|(i, wi)| def.y[i] * *wi).sum::<Vec3>() / total)
        .collect()
}

/// `Rʰ(x_k) = polar(F̄_k)` with `F̄_k` the slice mean of `∇_h y`.
pub fn fit_slice_rotations(mesh: &PrismMesh, def: &DeformationField) -> Result<SliceFrameField> {
    let d = mesh.delta();
    let frames = slice_mean_gradients(mesh, def)
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let det = f.determinant();
            if !(det > 0.0) {
                return Err(Error::DegenerateSlice { slice: k, x1: k as f64 * d, det });
            }
            polar_rotation(f)
        })
        .collect::<Result<Vec<_>>>()?;
    SliceFrameField::from_frames(mesh.length(), frames)
}

/// `zʰ` at the nodes and the layer means `p₁` of `(Rʰ)ᵀ∂₁zʰ · e₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzFields {
    pub z: Vec<Vec3>,
    pub p1: Vec<f64>,
}

/// Inverts `y = ∫₀^{x₁}R e₁ + h x₂ R e₂ + h x₃ R e₃ + h z`.
pub fn extract_ansatz_fields(mesh: &PrismMesh, def: &DeformationField, frames: &SliceFrameField) -> Result<AnsatzFields> {
    if frames.layers() != mesh.layers() {
        return Err(Error::InvalidArgument("frame field and mesh have different layer counts".into()));
    }
    let h = def.h;
    let base = frames.centerline();
    let mut z = vec![Vec3::zeros(); mesh.num_nodes()];
    for (k, (r, c)) in frames.frames.iter().zip(&base).enumerate() {
        for i in mesh.slice_nodes(k) {
            let x = mesh.nodes()[i];
            let rigid = c + r.column(1) * (h * x.y) + r.column(2) * (h * x.z);
            z[i] = (def.y[i] - rigid) / h;
        }
    }
    let mut p1 = vec![0.0; mesh.layers()];
    for (t, tet) in mesh.tets().iter().enumerate() {
        let g = mesh.shape_gradients(t);
        let dz1: Vec3 = tet.iter().zip(g).map(|(&i, gi)| z[i] * gi.x).sum();
        let r = frames.frame_at(mesh.centroid(t).x);
        p1[mesh.layer(t)] += mesh.volume(t) * (r.transpose() * dz1).x;
    }
    let d = mesh.delta();
    p1.iter_mut().for_each(|p| *p /= d);
    Ok(AnsatzFields { z, p1 })
}
