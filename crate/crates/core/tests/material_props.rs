use proptest::prelude::*;
use rodlimit::algebra::{so3_exp, sym, Mat3, Vec3};
use rodlimit::material::{ElasticMaterialField, IsotropicTensor, Region, RegionShape};

fn layered() -> ElasticMaterialField {
    ElasticMaterialField::new(vec![
        Region {
            shape: RegionShape::HalfSpace { normal: Vec3::new(0.0, 0.0, 1.0), offset: 0.0 },
            tensor: IsotropicTensor::new(3.0, 2.5).unwrap(),
        },
        Region { shape: RegionShape::All, tensor: IsotropicTensor::new(0.4, 0.7).unwrap() },
    ])
    .unwrap()
}

fn mat3(v: &[f64]) -> Mat3 {
    Mat3::from_row_slice(v)
}

fn entries() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 9)
}

fn axis() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-3.0..3.0f64).prop_map(Vec3::from)
}

fn point() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-0.6..0.6f64).prop_map(|p| Vec3::new(p[0].abs(), p[1], p[2]))
}

/// `I + 0.4 M`, which has positive determinant for `|M| ≤ 1` entries most of
/// the time; samples with `det ≤ 0.05` are discarded.
fn positive_f() -> impl Strategy<Value = Mat3> {
    entries().prop_map(|v| Mat3::identity() + mat3(&v) * 0.4).prop_filter("det F > 0", |f| f.determinant() > 0.05)
}

fn fd_gradient(mat: &ElasticMaterialField, x: &Vec3, f: &Mat3, step: f64) -> Mat3 {
    Mat3::from_fn(|i, j| {
        let mut fp = *f;
        let mut fm = *f;
        fp[(i, j)] += step;
        fm[(i, j)] -= step;
        (mat.density_value(x, &fp) - mat.density_value(x, &fm)) / (2.0 * step)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn frame_indifference(f in positive_f(), w in axis(), x in point()) {
        let mat = layered();
        let r = so3_exp(&w);
        let drift = (mat.density_value(&x, &(r * f)) - mat.density_value(&x, &f)).abs();
        prop_assert!(drift <= 1e-12 * (1.0 + f.norm_squared()), "drift {drift:e}");
    }

    #[test]
    fn quadratic_form_bounds(v in entries(), x in point()) {
        let mat = layered();
        let g = sym(&mat3(&v));
        let q = mat.quadratic_form_value(&x, &g);
        let n2 = g.norm_squared();
        prop_assert!(mat.alpha() * n2 <= q * (1.0 + 1e-12) && q <= mat.beta() * n2 * (1.0 + 1e-12));
    }

    #[test]
    fn quadratic_form_sees_only_the_symmetric_part(v in entries(), w in axis(), x in point()) {
        let mat = layered();
        let g = mat3(&v);
        let skewed = g + rodlimit::algebra::hat(&w);
        let a = mat.quadratic_form_value(&x, &g);
        let b = mat.quadratic_form_value(&x, &skewed);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn stress_times_ft_is_symmetric(f in positive_f(), x in point()) {
        let mat = layered();
        let p = mat.density_gradient(&x, &f) * f.transpose();
        prop_assert!((p - p.transpose()).norm() <= 1e-11 * (1.0 + p.norm()));
    }

    #[test]
    fn gradient_is_frame_covariant(f in positive_f(), w in axis(), x in point()) {
        let mat = layered();
        let r = so3_exp(&w);
        let lhs = mat.density_gradient(&x, &(r * f));
        let rhs = r * mat.density_gradient(&x, &f);
        prop_assert!((lhs - rhs).norm() <= 1e-11 * (1.0 + rhs.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_differences(f in positive_f(), x in point()) {
        let mat = layered();
        let dw = mat.density_gradient(&x, &f);
        let fd = fd_gradient(&mat, &x, &f, 1e-5);
        let rel = (dw - fd).norm() / dw.norm().max(1e-8);
        prop_assert!(rel <= 1e-5, "relative error {rel:e}");
    }

    #[test]
    fn hessian_at_identity_is_the_tensor(v in entries(), x in point()) {
        let mat = layered();
        let g = mat3(&v);
        let t = 1e-4;
        let w = |s: f64| mat.density_value(&x, &(Mat3::identity() + g * s));
        let second = (w(t) - 2.0 * w(0.0) + w(-t)) / (t * t);
        let exact = 2.0 * mat.quadratic_form_value(&x, &g);
        prop_assume!(exact > 1e-6);
        prop_assert!(((second - exact) / exact).abs() <= 1e-4, "{second} vs {exact}");
    }
}

#[test]
fn taylor_residual_decays_on_a_scale_grid() {
    let mat = layered();
    let x = Vec3::new(0.5, 0.1, 0.2);
    let g = mat3(&[0.3, -0.7, 0.2, 0.5, 0.1, -0.4, 0.9, 0.6, -0.2]);
    let scales: Vec<f64> = (0..12).map(|k| 0.5f64.powi(k)).collect();
    let res: Vec<f64> = scales.iter().map(|&s| mat.taylor_residual(&x, &g, s / g.norm()).unwrap()).collect();
    for w in res.windows(4) {
        assert!(w[3] < w[0], "{res:?}");
    }
    let at_small = mat.taylor_residual(&x, &g, 1e-3 / g.norm()).unwrap();
    assert!(at_small < 1e-3, "{at_small}");
    assert_eq!(mat.taylor_residual(&x, &Mat3::zeros(), 0.1).unwrap(), 0.0);
}

#[test]
fn taylor_residual_along_rotations_decays_at_least_linearly() {
    let mat = layered();
    let x = Vec3::new(0.5, 0.1, -0.2);
    let g = rodlimit::algebra::hat(&Vec3::new(0.2, -0.5, 0.4));
    let r1 = mat.taylor_residual(&x, &g, 1e-2).unwrap();
    let r2 = mat.taylor_residual(&x, &g, 5e-3).unwrap();
    assert!(r1 < 1e-2 && r2 <= 0.55 * r1, "{r1} {r2}");
}

#[test]
fn closed_form_quadratic_values() {
    let t = IsotropicTensor::new(1.5, 0.8).unwrap();
    let mat = ElasticMaterialField::homogeneous(t).unwrap();
    let x = Vec3::zeros();
    let q = mat.quadratic_form_value(&x, &Mat3::identity());
    assert!((q - (3.0 * 0.8 + 4.5 * 1.5)).abs() < 1e-12);
    let mut e12 = Mat3::zeros();
    e12[(0, 1)] = 1.0;
    assert!((mat.quadratic_form_value(&x, &e12) - 0.4).abs() < 1e-12);
}
