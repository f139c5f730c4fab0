use rayon::prelude::*;

use crate::algebra::{skew, Mat3};
use crate::error::{Error, Result};
use crate::material::ElasticMaterialField;
use crate::rod1d::LoadSpec;
use crate::rod3d::{scaled_gradient, DeformationField, PrismMesh};

use super::frames::SliceFrameField;

/// Linearized strain `Gʰ = h⁻¹((Rʰ)ᵀ∇_h y − I)` and stress
/// `Eʰ = h⁻¹DW(x, I + hGʰ)` per element, with layer means `Ē` and first
/// moments `Ẽ = ∫x₂E`, `Ê = ∫x₃E` (the section has unit area).
#[derive(Debug, Clone, PartialEq)]
pub struct StrainStressFields {
    pub h: f64,
    pub delta: f64,
    pub strain: Vec<Mat3>,
    pub stress: Vec<Mat3>,
    pub mean: Vec<Mat3>,
    pub moment_x2: Vec<Mat3>,
    pub moment_x3: Vec<Mat3>,
    pub inverted_elements: usize,
}

pub fn compute_strain_stress(
    mesh: &PrismMesh,
    def: &DeformationField,
    mat: &ElasticMaterialField,
    frames: &SliceFrameField,
) -> Result<StrainStressFields> {
    let h = def.h;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("thickness h = {h} must be positive")));
    }
    if frames.layers() != mesh.layers() {
        return Err(Error::InvalidArgument("frame field and mesh have different layer counts".into()));
    }
    let per_tet: Vec<(Mat3, Mat3, bool)> = (0..mesh.tets().len())
        .into_par_iter()
        .map(|t| {
            let xc = mesh.centroid(t);
            let local = frames.frame_at(xc.x).transpose() * scaled_gradient(mesh, def, t);
            let (d, dw) = mat.density_and_gradient(&xc, &local);
            ((local - Mat3::identity()) / h, dw / h, d.inverted)
        })
        .collect();
    let n = mesh.layers();
    let d = mesh.delta();
    let mut out = StrainStressFields {
        h,
        delta: d,
        strain: Vec::with_capacity(per_tet.len()),
        stress: Vec::with_capacity(per_tet.len()),
        mean: vec![Mat3::zeros(); n],
        moment_x2: vec![Mat3::zeros(); n],
        moment_x3: vec![Mat3::zeros(); n],
        inverted_elements: 0,
    };
    for (t, (g, e, inv)) in per_tet.into_iter().enumerate() {
        let k = mesh.layer(t);
        let w = mesh.volume(t) / d;
        let xc = mesh.centroid(t);
        out.mean[k] += e * w;
        out.moment_x2[k] += e * (w * xc.y);
        out.moment_x3[k] += e * (w * xc.z);
        out.strain.push(g);
        out.stress.push(e);
        out.inverted_elements += inv as usize;
    }
    Ok(out)
}

impl StrainStressFields {
    /// `max |skew Eʰ − h skew(Gʰ(Eʰ)ᵀ)|` over the elements.
    pub fn skew_identity_residual(&self) -> f64 {
        self.strain
            .iter()
            .zip(&self.stress)
            .map(|(g, e)| (skew(e) - skew(&(g * e.transpose())) * self.h).norm())
            .fold(0.0, f64::max)
    }

    /// `‖Ē e₁‖_{L²(0,L)}`.
    pub fn mean_first_column_norm(&self) -> f64 {
        (self.mean.iter().map(|m| m.column(0).norm_squared()).sum::<f64>() * self.delta).sqrt()
    }

    /// `‖Ē e₁ − h (Rʰ)ᵀ ĝ‖_{L²(0,L)}` with both sides at layer midpoints.
    pub fn equilibrium_defect(&self, frames: &SliceFrameField, load: &LoadSpec) -> f64 {
        let s: f64 = self
            .mean
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let xm = (k as f64 + 0.5) * self.delta;
                let target = frames.frame_at(xm).transpose() * load.ghat(xm) * self.h;
                (m.column(0) - target).norm_squared()
            })
            .sum();
        (s * self.delta).sqrt()
    }

    /// `‖Gʰ‖_{L²(Ω)}` given element volumes.
    pub fn strain_norm(&self, mesh: &PrismMesh) -> f64 {
        self.strain.iter().enumerate().map(|(t, g)| mesh.volume(t) * g.norm_squared()).sum::<f64>().sqrt()
    }
}
