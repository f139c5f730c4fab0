use std::collections::HashMap;

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::algebra::{axl, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::material::ElasticMaterialField;

use super::corrector::{CorrectorSystem, WarpingField};
use super::mesh::CrossSectionMesh;

/// Measured constants of the coercivity and continuity bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// `C⁻¹(|B|²+b²) ≤ Q⁰ ≤ Cβ(|B|²+b²)`.
    pub c: f64,
    /// `|b_min(B)| ≤ C′|B|`.
    pub c_prime: f64,
    /// `(C″)⁻¹|B|² ≤ Q⁰₁ ≤ C″|B|²`.
    pub c_double_prime: f64,
}

/// Effective density `Q⁰(B, b) = ½ (axl B, b)ᵀ gram (axl B, b)` at one axial
/// position, together with the stretch-eliminated bending–torsion form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveStiffness {
    pub gram: Matrix4<f64>,
    pub reduced: Matrix3<f64>,
    pub bmin_row: Vector3<f64>,
    pub bounds: BoundConstants,
}

impl EffectiveStiffness {
    /// Builds the reduced form and bound constants from a Gram matrix.
    pub fn from_gram(gram: Matrix4<f64>, beta: f64) -> Result<Self> {
        let gram = (gram + gram.transpose()) * 0.5;
        if gram.cholesky().is_none() {
            return Err(Error::Consistency(format!("effective Gram matrix is not SPD: {gram}")));
        }
        let gbb = gram[(3, 3)];
        let gb = Vector3::new(gram[(0, 3)], gram[(1, 3)], gram[(2, 3)]);
        let reduced = gram.fixed_view::<3, 3>(0, 0).into_owned() - gb * gb.transpose() / gbb;
        let bmin_row = -gb / gbb;

        // Generalized eigenvalues of ½ gram against |B|² + b² = 2|a|² + b².
        let d_inv_sqrt = Matrix4::from_diagonal(&nalgebra::Vector4::new(
            1.0 / 2f64.sqrt(),
            1.0 / 2f64.sqrt(),
            1.0 / 2f64.sqrt(),
            1.0,
        ));
        let scaled = d_inv_sqrt * gram * d_inv_sqrt * 0.5;
        let ev = SymmetricEigen::new(scaled).eigenvalues;
        let (lo, hi) = (ev.min(), ev.max());
        let c = (1.0 / lo).max(hi / beta);
        // ½ aᵀ reduced a against 2|a|².
        let ev1 = SymmetricEigen::new(reduced / 4.0).eigenvalues;
        let c_double_prime = (1.0 / ev1.min()).max(ev1.max());
        let c_prime = bmin_row.norm() / 2f64.sqrt();
        Ok(Self { gram, reduced, bmin_row, bounds: BoundConstants { c, c_prime, c_double_prime } })
    }

    /// `Q⁰(B, b)` with `B` given through its axial vector.
    pub fn q0(&self, a: &Vec3, b: f64) -> f64 {
        let x = nalgebra::Vector4::new(a.x, a.y, a.z, b);
        0.5 * x.dot(&(self.gram * x))
    }

    /// `Q⁰₁(B) = Q⁰(B, b_min(B))`.
    pub fn q0_reduced(&self, a: &Vec3) -> f64 {
        0.5 * a.dot(&(self.reduced * a))
    }

    pub fn bmin_axl(&self, a: &Vec3) -> f64 {
        self.bmin_row.dot(a)
    }

    /// `∂_b Q⁰(B, b)`.
    pub fn dq0_db(&self, a: &Vec3, b: f64) -> f64 {
        self.gram[(3, 0)] * a.x + self.gram[(3, 1)] * a.y + self.gram[(3, 2)] * a.z + self.gram[(3, 3)] * b
    }

    /// The 10 upper-triangular Gram entries in row-major order.
    pub fn gram_upper(&self) -> [f64; 10] {
        let mut out = [0.0; 10];
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                out[k] = self.gram[(i, j)];
                k += 1;
            }
        }
        out
    }

    /// The 6 upper-triangular entries of the reduced form.
    pub fn reduced_upper(&self) -> [f64; 6] {
        let r = &self.reduced;
        [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 1)], r[(1, 2)], r[(2, 2)]]
    }
}

/// Minimizing stretch for skew `B`, with the first-order condition checked.
pub fn bmin(eff: &EffectiveStiffness, bmat: &Mat3) -> Result<f64> {
    let a = axl(bmat);
    let b = eff.bmin_axl(&a);
    let residual = eff.dq0_db(&a, b);
    let scale = eff.gram[(3, 3)] * (b.abs() + a.norm()) + f64::MIN_POSITIVE;
    if residual.abs() > 1e-10 * scale.max(1.0) {
        return Err(Error::Consistency(format!("∂_b Q⁰ = {residual:.3e} at b_min")));
    }
    Ok(b)
}

const BASIS: [([f64; 3], f64); 4] =
    [([1.0, 0.0, 0.0], 0.0), ([0.0, 1.0, 0.0], 0.0), ([0.0, 0.0, 1.0], 0.0), ([0.0, 0.0, 0.0], 1.0)];

/// Effective stiffness at `x1` from four corrector solves, with the
/// off-diagonal Gram entries obtained by polarization of superposed correctors.
pub fn effective_stiffness(
    mat: &ElasticMaterialField,
    x1: f64,
    mesh: &CrossSectionMesh,
) -> Result<EffectiveStiffness> {
    let sys = CorrectorSystem::new(mat, x1, mesh)?;
    let sols: Vec<WarpingField> = BASIS
        .iter()
        .map(|(a, b)| sys.solve(&Vec3::from(*a), *b))
        .collect::<Result<_>>()?;
    let energies: Vec<f64> = BASIS
        .iter()
        .zip(&sols)
        .map(|((a, b), w)| sys.energy(&Vec3::from(*a), *b, w))
        .collect();
    let mut gram = Matrix4::zeros();
    for i in 0..4 {
        gram[(i, i)] = 2.0 * energies[i];
        for j in i + 1..4 {
            let a = Vec3::from(BASIS[i].0) + Vec3::from(BASIS[j].0);
            let b = BASIS[i].1 + BASIS[j].1;
            let e = sys.energy(&a, b, &sols[i].add(&sols[j]));
            gram[(i, j)] = e - energies[i] - energies[j];
            gram[(j, i)] = gram[(i, j)];
        }
    }
    EffectiveStiffness::from_gram(gram, mat.beta())
}

/// Effective stiffness at each requested axial position. Positions whose
/// cross-sections see the same sequence of material regions share one solve.
pub fn stiffness_profile(
    mat: &ElasticMaterialField,
    mesh: &CrossSectionMesh,
    x1s: &[f64],
) -> Result<Vec<EffectiveStiffness>> {
    let signature = |x1: f64| -> Vec<usize> {
        (0..mesh.num_triangles())
            .map(|t| {
                let c = mesh.centroid(t);
                mat.region_index(&Vec3::new(x1, c[0], c[1]))
            })
            .collect()
    };
    let mut keys: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut representatives = Vec::new();
    let mut slot = Vec::with_capacity(x1s.len());
    for &x1 in x1s {
        let sig = signature(x1);
        let next = representatives.len();
        let id = *keys.entry(sig).or_insert(next);
        if id == next {
            representatives.push(x1);
        }
        slot.push(id);
    }
    let computed: Vec<EffectiveStiffness> = representatives
        .par_iter()
        .map(|&x1| effective_stiffness(mat, x1, mesh))
        .collect::<Result<_>>()?;
    Ok(slot.into_iter().map(|i| computed[i]).collect())
}
