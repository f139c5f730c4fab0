use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rodlimit::algebra::{Mat3, Vec3};
use rodlimit::material::{ElasticMaterialField, IsotropicTensor, Region, RegionShape};
use rodlimit::optim::LbfgsSettings;
use rodlimit::rod1d::{minimize_limit_energy, CurvatureField, LoadSpec};
use rodlimit::rod3d::{
    energy_3d, energy_and_gradient_3d, first_variation_3d, lift_rod_state, minimize_3d, scaled_gradient,
    DeformationField, PrismMesh,
};
use rodlimit::xsection::{disk_mesh, stiffness_profile};

fn mesh(rings: usize, layers: usize) -> PrismMesh {
    PrismMesh::new(disk_mesh(1.0, rings).unwrap().center_and_normalize(), 1.0, layers).unwrap()
}

fn graded() -> ElasticMaterialField {
    ElasticMaterialField::new(vec![
        Region {
            shape: RegionShape::Box { min: Vec3::new(0.5, -10.0, -10.0), max: Vec3::new(10.0, 10.0, 10.0) },
            tensor: IsotropicTensor::new(2.0, 3.0).unwrap(),
        },
        Region { shape: RegionShape::All, tensor: IsotropicTensor::new(1.0, 1.0).unwrap() },
    ])
    .unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
}

/// Rest state of thickness `h` moved by a smooth bend and nodal noise, clamp kept.
fn random_state(m: &PrismMesh, h: f64, rng: &mut ChaCha8Rng) -> DeformationField {
    let mut def = DeformationField::rest(m, h).unwrap();
    let bend = random_vec(rng, 0.5);
    let nv = m.section().num_vertices();
    for (i, (y, x)) in def.y.iter_mut().zip(m.nodes()).enumerate() {
        if i < nv {
            continue;
        }
        *y = rodlimit::algebra::so3_exp(&(bend * x.x)) * *y + random_vec(rng, 0.05 * h);
    }
    def
}

#[test]
fn scaled_gradient_of_rest_and_affine_maps() {
    let m = mesh(2, 3);
    let h = 0.2;
    let rest = DeformationField::rest(&m, h).unwrap();
    let mm = Mat3::new(1.1, 0.2, -0.3, 0.4, 0.9, 0.1, -0.2, 0.3, 1.2);
    let affine = DeformationField { y: m.nodes().iter().map(|x| mm * x).collect(), h };
    let scale = Mat3::from_diagonal(&Vec3::new(1.0, 1.0 / h, 1.0 / h));
    for t in 0..m.tets().len() {
        assert!((scaled_gradient(&m, &rest, t) - Mat3::identity()).norm() < 1e-12);
        assert!((scaled_gradient(&m, &affine, t) - mm * scale).norm() < 1e-11);
    }
}

#[test]
fn rest_state_is_a_stationary_zero_energy_state() {
    let m = mesh(2, 4);
    let load = LoadSpec::uniform(1.0, Vec3::zeros()).unwrap();
    let rest = DeformationField::rest(&m, 0.1).unwrap();
    assert!(energy_3d(&m, &rest, &graded(), &load).abs() < 1e-20);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let nv = m.section().num_vertices();
    let test: Vec<Vec3> = (0..m.num_nodes()).map(|i| if i < nv { Vec3::zeros() } else { random_vec(&mut rng, 1.0) }).collect();
    let v = first_variation_3d(&m, &rest, &graded(), &load, &test).unwrap();
    assert!(v.abs() < 1e-9, "{v}");
    let sol = minimize_3d(&m, &rest, &graded(), &load, &LbfgsSettings::default()).unwrap();
    assert!(sol.def.y.iter().zip(&rest.y).all(|(a, b)| (a - b).norm() < 1e-12));
}

#[test]
fn variation_rejects_tests_that_move_the_clamp() {
    let m = mesh(1, 2);
    let load = LoadSpec::uniform(1.0, Vec3::zeros()).unwrap();
    let rest = DeformationField::rest(&m, 0.1).unwrap();
    let mut test = vec![Vec3::zeros(); m.num_nodes()];
    test[0] = Vec3::new(1.0, 0.0, 0.0);
    assert!(first_variation_3d(&m, &rest, &graded(), &load, &test).is_err());
}

#[test]
fn minimizer_is_clamped_oriented_and_below_the_lift() {
    let m = mesh(2, 12);
    let mat = graded();
    let load = LoadSpec::uniform(1.0, Vec3::new(0.0, 0.03, -0.05)).unwrap();
    let eff = stiffness_profile(&mat, m.section(), &CurvatureField::zeros(1.0, 12).unwrap().midpoints()).unwrap();
    let rod = minimize_limit_energy(&CurvatureField::zeros(1.0, 12).unwrap(), &eff, &load, &LbfgsSettings::default()).unwrap();
    let h = 0.1;
    let lift = lift_rod_state(&m, &rod.curvature, h).unwrap();
    let settings = LbfgsSettings { tol: 1e-9, max_iterations: 2000, ..Default::default() };
    let sol = minimize_3d(&m, &lift, &mat, &load, &settings).unwrap();
    assert!(sol.def.dirichlet_defect(&m) <= 1e-14);
    assert!(sol.min_det > 0.0);
    assert!(sol.energy < energy_3d(&m, &lift, &mat, &load));
    let h_hist = &sol.optim.history;
    assert!(h_hist.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    assert!(sol.optim.grad_norm <= settings.tol * (1.0 + sol.optim.initial_grad_norm));
}

#[test]
fn elastic_energy_stays_bounded_along_the_thickness_ladder() {
    let m = mesh(2, 16);
    let mat = ElasticMaterialField::homogeneous(IsotropicTensor::new(1.0, 1.0).unwrap()).unwrap();
    let load = LoadSpec::uniform(1.0, Vec3::new(0.0, 0.0, -0.05)).unwrap();
    let init = CurvatureField::zeros(1.0, 16).unwrap();
    let eff = stiffness_profile(&mat, m.section(), &init.midpoints()).unwrap();
    let rod = minimize_limit_energy(&init, &eff, &load, &LbfgsSettings::default()).unwrap();
    let settings = LbfgsSettings { tol: 1e-9, max_iterations: 2000, ..Default::default() };
    let energies: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&h| {
            let lift = lift_rod_state(&m, &rod.curvature, h).unwrap();
            minimize_3d(&m, &lift, &mat, &load, &settings).unwrap().parts.elastic
        })
        .collect();
    assert!(energies.iter().all(|e| e.is_finite() && *e > 0.0));
    assert!(energies.windows(2).all(|w| w[1] <= 1.1 * w[0]), "{energies:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mesh(2, 3);
        let mat = graded();
        let h = rng.random_range(0.05..0.5);
        let load = LoadSpec::new(1.0, vec![random_vec(&mut rng, 1.0), random_vec(&mut rng, 1.0)]).unwrap();
        let def = random_state(&m, h, &mut rng);
        let (_, grad) = energy_and_gradient_3d(&m, &def, &mat, &load);
        let nv = m.section().num_vertices();
        let dir: Vec<Vec3> = (0..m.num_nodes()).map(|i| if i < nv { Vec3::zeros() } else { random_vec(&mut rng, 1.0) }).collect();
        let along = |s: f64| {
            let y = def.y.iter().zip(&dir).map(|(y, d)| y + d * s).collect();
            energy_3d(&m, &DeformationField { y, h }, &mat, &load)
        };
        let step = 1e-6 * h;
        let fd = (along(step) - along(-step)) / (2.0 * step);
        let an = first_variation_3d(&m, &def, &mat, &load, &dir).unwrap();
        let an2: f64 = grad.iter().zip(&dir).map(|(g, d)| g.dot(d)).sum();
        prop_assert!((an - an2).abs() <= 1e-12 * an.abs().max(1.0));
        prop_assert!((an - fd).abs() <= 1e-5 * an.abs().max(1e-8), "{an} vs {fd}");
    }
}
