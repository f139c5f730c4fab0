//! Frame-indifferent elastic energy densities built from piecewise isotropic
//! elasticity tensors.
//!
//! On the orientation-preserving branch the density is
//! `W(x, F) = ½ 𝔸(x) E : E` with `E = sym(R(F)ᵀ F − I)`, where `R(F)` is the
//! polar rotation of `F`. Its Hessian at the identity is exactly `𝔸(x)`, and
//! `α dist²(F, SO(3)) ≤ W ≤ β dist²(F, SO(3))` holds with the eigenvalue
//! bounds of the isotropic tensors. For `det F ≤ 0` the density falls back to
//! `β dist²(F, SO(3))` and the evaluation is flagged as inverted.

use nalgebra::SVD;

use crate::algebra::{ddot, sym, Mat3, Vec3};
use crate::error::{Error, Result};

/// Isotropic elasticity tensor `𝔸E = 2μE + λ tr(E) I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicTensor {
    pub lambda: f64,
    pub mu: f64,
}

impl IsotropicTensor {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let t = Self { lambda, mu };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.lambda.is_finite()) {
            return Err(Error::InvalidMaterial("Lamé parameters must be finite".into()));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidMaterial(format!("mu = {} must be positive", self.mu)));
        }
        if 3.0 * self.lambda + 2.0 * self.mu <= 0.0 {
            return Err(Error::InvalidMaterial(format!(
                "3 lambda + 2 mu = {} must be positive",
                3.0 * self.lambda + 2.0 * self.mu
            )));
        }
        Ok(())
    }

    pub fn apply(&self, e: &Mat3) -> Mat3 {
        e * (2.0 * self.mu) + Mat3::identity() * (self.lambda * e.trace())
    }

    /// `½ 𝔸 sym(G) : sym(G)`.
    pub fn quadratic(&self, g: &Mat3) -> f64 {
        let e = sym(g);
        let tr = e.trace();
        self.mu * e.norm_squared() + 0.5 * self.lambda * tr * tr
    }

    /// Bilinear form `𝔸 a : b` for symmetric arguments.
    pub fn bilinear(&self, a: &Mat3, b: &Mat3) -> f64 {
        2.0 * self.mu * ddot(a, b) + self.lambda * a.trace() * b.trace()
    }

    /// Extreme values of `½ 𝔸E:E / |E|²` over symmetric `E`: the deviatoric
    /// eigenvalue `μ` and the spherical one `μ + 3λ/2`.
    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        let dev = self.mu;
        let sph = self.mu + 1.5 * self.lambda;
        (dev.min(sph), dev.max(sph))
    }

    pub fn young(&self) -> f64 {
        self.mu * (3.0 * self.lambda + 2.0 * self.mu) / (self.lambda + self.mu)
    }

    pub fn poisson(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { lambda: self.lambda * s, mu: self.mu * s }
    }
}

/// Spatial predicate on Ω = (0, L) × ω, points given as `(x₁, x₂, x₃)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionShape {
    All,
    /// `normal · x ≥ offset`.
    HalfSpace { normal: Vec3, offset: f64 },
    /// Closed axis-aligned box.
    Box { min: Vec3, max: Vec3 },
    /// Cylinder along x₁ with a circular cross-section.
    Cylinder { center: [f64; 2], radius: f64, x1_range: Option<(f64, f64)> },
}

impl RegionShape {
    pub fn contains(&self, x: &Vec3) -> bool {
        match self {
            RegionShape::All => true,
            RegionShape::HalfSpace { normal, offset } => normal.dot(x) >= *offset,
            RegionShape::Box { min, max } => (0..3).all(|i| x[i] >= min[i] && x[i] <= max[i]),
            RegionShape::Cylinder { center, radius, x1_range } => {
                let d2 = (x.y - center[0]).powi(2) + (x.z - center[1]).powi(2);
                let in_range = x1_range.is_none_or(|(a, b)| x.x >= a && x.x <= b);
                d2 <= radius * radius && in_range
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            RegionShape::All => Ok(()),
            RegionShape::HalfSpace { normal, .. } => {
                if normal.norm() == 0.0 {
                    Err(Error::InvalidMaterial("half-space normal must be nonzero".into()))
                } else {
                    Ok(())
                }
            }
            RegionShape::Box { min, max } => {
                if (0..3).any(|i| min[i] > max[i]) {
                    Err(Error::InvalidMaterial("box min must not exceed max".into()))
                } else {
                    Ok(())
                }
            }
            RegionShape::Cylinder { radius, x1_range, .. } => {
                if *radius <= 0.0 {
                    return Err(Error::InvalidMaterial("cylinder radius must be positive".into()));
                }
                if let Some((a, b)) = x1_range {
                    if a > b {
                        return Err(Error::InvalidMaterial("cylinder x1 range is empty".into()));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub shape: RegionShape,
    pub tensor: IsotropicTensor,
}

/// Piecewise isotropic material; the first region containing a point wins.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticMaterialField {
    regions: Vec<Region>,
    alpha: f64,
    beta: f64,
}

/// Value of the density together with the inverted-branch flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub value: f64,
    pub inverted: bool,
}

impl ElasticMaterialField {
    /// Builds the field. At least one region must be `All` so that every point
    /// of Ω is covered.
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::InvalidMaterial("no regions given".into()));
        }
        for (i, r) in regions.iter().enumerate() {
            r.tensor
                .validate()
                .map_err(|e| Error::InvalidMaterial(format!("region {i}: {e}")))?;
            r.shape.validate().map_err(|e| Error::InvalidMaterial(format!("region {i}: {e}")))?;
        }
        if !regions.iter().any(|r| r.shape == RegionShape::All) {
            return Err(Error::InvalidMaterial(
                "regions must include an \"all\" region so that they cover the domain".into(),
            ));
        }
        let (alpha, beta) = regions.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| {
            let (a, b) = r.tensor.ellipticity_bounds();
            (lo.min(a), hi.max(b))
        });
        Ok(Self { regions, alpha, beta })
    }

    pub fn homogeneous(tensor: IsotropicTensor) -> Result<Self> {
        Self::new(vec![Region { shape: RegionShape::All, tensor }])
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn region_index(&self, x: &Vec3) -> usize {
        self.regions
            .iter()
            .position(|r| r.shape.contains(x))
            .expect("an `All` region is always present")
    }

    pub fn tensor_at(&self, x: &Vec3) -> IsotropicTensor {
        self.regions[self.region_index(x)].tensor
    }

    /// Same field with every modulus multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(
            self.regions
                .iter()
                .map(|r| Region { shape: r.shape.clone(), tensor: r.tensor.scaled(s) })
                .collect(),
        )
    }

    pub fn density(&self, x: &Vec3, f: &Mat3) -> DensityValue {
        let tensor = self.tensor_at(x);
        match strain_and_rotation(f) {
            Some((_, e)) => DensityValue { value: tensor.quadratic(&e), inverted: false },
            None => DensityValue { value: self.beta * dist2_to_so3(f), inverted: true },
        }
    }

    pub fn density_value(&self, x: &Vec3, f: &Mat3) -> f64 {
        self.density(x, f).value
    }

    /// `DW(x, F)`. On the inverted branch this is `2β(F − R̂)` with `R̂` the
    /// closest rotation.
    pub fn density_gradient(&self, x: &Vec3, f: &Mat3) -> Mat3 {
        self.density_and_gradient(x, f).1
    }

    pub fn density_and_gradient(&self, x: &Vec3, f: &Mat3) -> (DensityValue, Mat3) {
        let tensor = self.tensor_at(x);
        match strain_and_rotation(f) {
            // Isotropic 𝔸E commutes with the stretch, so DW = R 𝔸E.
            Some((r, e)) => (
                DensityValue { value: tensor.quadratic(&e), inverted: false },
                r * tensor.apply(&e),
            ),
            None => {
                let r = closest_rotation(f);
                let value = self.beta * (f - r).norm_squared();
                (DensityValue { value, inverted: true }, (f - r) * (2.0 * self.beta))
            }
        }
    }

    /// `Q(x, G) = ½ 𝔸(x) sym G : sym G`.
    pub fn quadratic_form_value(&self, x: &Vec3, g: &Mat3) -> f64 {
        self.tensor_at(x).quadratic(g)
    }

    /// `|W(x, I + sG) − s² Q(x, G)| / (s² |G|²)`, zero for `G = 0`.
    pub fn taylor_residual(&self, x: &Vec3, g: &Mat3, h_scale: f64) -> Result<f64> {
        if h_scale <= 0.0 {
            return Err(Error::InvalidArgument(format!("h_scale = {h_scale} must be positive")));
        }
        let g2 = g.norm_squared();
        if g2 == 0.0 {
            return Ok(0.0);
        }
        let s2 = h_scale * h_scale;
        let w = self.density_value(x, &(Mat3::identity() + g * h_scale));
        Ok((w - s2 * self.quadratic_form_value(x, g)).abs() / (s2 * g2))
    }
}

/// Polar rotation of `F` (closest rotation in the Frobenius norm).
pub fn polar_rotation(f: &Mat3) -> Result<Mat3> {
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(Error::SingularInput { det });
    }
    let svd = SVD::new(*f, true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    Ok(u * v_t)
}

/// `(R, sym(RᵀF) − I)` on the orientation-preserving branch.
fn strain_and_rotation(f: &Mat3) -> Option<(Mat3, Mat3)> {
    let r = polar_rotation(f).ok()?;
    Some((r, sym(&(r.transpose() * f)) - Mat3::identity()))
}

/// Closest rotation to `F` for any sign of `det F`.
fn closest_rotation(f: &Mat3) -> Mat3 {
    let svd = SVD::new(*f, true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let mut d = Vec3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        // Flip the direction of the smallest singular value.
        d[svd.singular_values.argmin().0] = -1.0;
    }
    u * Mat3::from_diagonal(&d) * v_t
}

/// Squared distance of `F` to SO(3), valid for any sign of `det F`.
pub fn dist2_to_so3(f: &Mat3) -> f64 {
    (f - closest_rotation(f)).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{hat, so3_exp};

    fn steel_like() -> ElasticMaterialField {
        ElasticMaterialField::homogeneous(IsotropicTensor::new(1.5, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn polar_rotation_examples() {
        let i = Mat3::identity();
        assert!((polar_rotation(&i).unwrap() - i).norm() < 1e-15);
        let r = so3_exp(&Vec3::new(0.3, -1.1, 0.7));
        assert!((polar_rotation(&r).unwrap() - r).norm() < 1e-14);
        let d = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0));
        assert!((polar_rotation(&d).unwrap() - i).norm() < 1e-14);
        assert!(matches!(
            polar_rotation(&Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))),
            Err(Error::SingularInput { .. })
        ));
        assert!(polar_rotation(&Mat3::zeros()).is_err());
    }

    #[test]
    fn density_vanishes_on_rotations() {
        let mat = steel_like();
        let x = Vec3::zeros();
        assert_eq!(mat.density_value(&x, &Mat3::identity()), 0.0);
        let r = so3_exp(&Vec3::new(1.0, 2.0, -0.5));
        assert!(mat.density_value(&x, &r) < 1e-28);
        assert!(mat.density_gradient(&x, &Mat3::identity()).norm() < 1e-15);
        assert!(mat.density_gradient(&x, &r).norm() < 1e-14);
    }

    #[test]
    fn quadratic_form_examples() {
        let mat = steel_like();
        let x = Vec3::zeros();
        let (lambda, mu) = (1.5, 1.0);
        assert!(mat.quadratic_form_value(&x, &hat(&Vec3::new(1.0, 2.0, 3.0))).abs() < 1e-15);
        let qi = mat.quadratic_form_value(&x, &Mat3::identity());
        assert!((qi - (3.0 * mu + 4.5 * lambda)).abs() < 1e-14);
        let mut e12 = Mat3::zeros();
        e12[(0, 1)] = 1.0;
        assert!((mat.quadratic_form_value(&x, &e12) - mu / 2.0).abs() < 1e-15);
    }

    #[test]
    fn inverted_branch_is_flagged_and_finite() {
        let mat = steel_like();
        let f = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -0.5));
        let d = mat.density(&Vec3::zeros(), &f);
        assert!(d.inverted);
        // Closest rotation is I: distance (−0.5 − 1)².
        assert!((d.value - mat.beta() * 2.25).abs() < 1e-12);
        assert!(mat.density_gradient(&Vec3::zeros(), &f).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn inverted_branch_gradient_is_exact_and_objective() {
        let mat = steel_like();
        let x = Vec3::zeros();
        let f = Mat3::new(0.9, 0.3, -0.2, 0.1, 1.2, 0.4, 0.2, -0.1, -0.6);
        assert!(f.determinant() < 0.0);
        let dw = mat.density_gradient(&x, &f);
        let step = 1e-6;
        let fd = Mat3::from_fn(|i, j| {
            let (mut fp, mut fm) = (f, f);
            fp[(i, j)] += step;
            fm[(i, j)] -= step;
            (mat.density_value(&x, &fp) - mat.density_value(&x, &fm)) / (2.0 * step)
        });
        assert!((dw - fd).norm() < 1e-6 * dw.norm());
        let p = dw * f.transpose();
        assert!((p - p.transpose()).norm() < 1e-12 * p.norm());
    }

    #[test]
    fn taylor_residual_conventions() {
        let mat = steel_like();
        assert_eq!(mat.taylor_residual(&Vec3::zeros(), &Mat3::zeros(), 0.1).unwrap(), 0.0);
        assert!(mat.taylor_residual(&Vec3::zeros(), &Mat3::identity(), 0.0).is_err());
        // Symmetric perturbations of I are pure stretches: residual exactly zero.
        let g = Mat3::new(0.2, 0.1, 0.0, 0.1, -0.3, 0.05, 0.0, 0.05, 0.4);
        assert!(mat.taylor_residual(&Vec3::zeros(), &g, 1e-2).unwrap() < 1e-12);
    }

    #[test]
    fn region_lookup_is_first_match() {
        let soft = IsotropicTensor::new(1.0, 1.0).unwrap();
        let stiff = IsotropicTensor::new(10.0, 10.0).unwrap();
        let mat = ElasticMaterialField::new(vec![
            Region {
                shape: RegionShape::HalfSpace { normal: Vec3::new(0.0, 0.0, 1.0), offset: 0.0 },
                tensor: stiff,
            },
            Region { shape: RegionShape::All, tensor: soft },
        ])
        .unwrap();
        assert_eq!(mat.tensor_at(&Vec3::new(0.5, 0.0, 0.2)), stiff);
        assert_eq!(mat.tensor_at(&Vec3::new(0.5, 0.0, -0.2)), soft);
        assert_eq!(mat.alpha(), 1.0);
        assert_eq!(mat.beta(), 25.0);
    }

    #[test]
    fn rejects_invalid_moduli_and_uncovered_domains() {
        assert!(IsotropicTensor::new(1.0, -1.0).is_err());
        assert!(IsotropicTensor::new(-1.0, 1.0).is_err());
        let t = IsotropicTensor::new(1.0, 1.0).unwrap();
        let only_box = vec![Region {
            shape: RegionShape::Box { min: Vec3::zeros(), max: Vec3::new(1.0, 1.0, 1.0) },
            tensor: t,
        }];
        assert!(ElasticMaterialField::new(only_box).is_err());
    }
}
