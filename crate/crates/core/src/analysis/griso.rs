use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{hat, iota, section_point, sym, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::rod3d::PrismMesh;

/// Degree-2 rule on the reference tetrahedron: barycentric points
/// `(a, b, b, b)` and permutations, equal weights.
const TET_A: f64 = 0.585_410_196_624_968_5;
const TET_B: f64 = 0.138_196_601_125_010_5;

/// `u = Ψ𝔭 − h⁻¹(Ψ̂₁₂e₂ + Ψ̂₁₃e₃) + v` with `Ψ` piecewise linear between the
/// axial nodes and `Ψ̂ = ∫₀^{x₁}Ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrisoDecomposition {
    pub h: f64,
    pub length: f64,
    pub psi: Vec<Mat3>,
    pub psi_hat: Vec<Mat3>,
    /// Remainder `v = u − c` at the nodes.
    pub v: Vec<Vec3>,
    /// Largest `|sym ∇_h u − sym ι(Ψ′𝔭) − sym ∇_h v|` at the quadrature points.
    pub identity_residual: f64,
    pub bound: GrisoBound,
}

/// Norms entering `‖Ψ‖_{W¹²} + ‖v‖_{L²} + ‖∇_h v‖_{L²} ≤ C ‖sym ∇_h u‖_{L²}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrisoBound {
    pub psi_w12: f64,
    pub v_l2: f64,
    pub grad_v_l2: f64,
    pub sym_grad_u_l2: f64,
    pub constant: f64,
}

impl GrisoDecomposition {
    fn layer_of(&self, x1: f64) -> (usize, f64) {
        let n = self.psi.len() - 1;
        let d = self.length / n as f64;
        let k = ((x1 / d).floor().max(0.0) as usize).min(n - 1);
        (k, x1 - k as f64 * d)
    }

    /// `Ψ(x₁)`, `Ψ′(x₁)` and `Ψ̂(x₁)`.
    pub fn psi_at(&self, x1: f64) -> (Mat3, Mat3, Mat3) {
        let d = self.length / (self.psi.len() - 1) as f64;
        let (k, s) = self.layer_of(x1);
        let slope = (self.psi[k + 1] - self.psi[k]) / d;
        let psi = self.psi[k] + slope * s;
        let hat_v = self.psi_hat[k] + self.psi[k] * s + slope * (0.5 * s * s);
        (psi, slope, hat_v)
    }

    /// The rod-like part `c(x)` and its scaled gradient.
    pub fn corrector_at(&self, x: &Vec3) -> (Vec3, Mat3) {
        let (psi, dpsi, psi_hat) = self.psi_at(x.x);
        let p = section_point(x.y, x.z);
        let ih = 1.0 / self.h;
        let c = psi * p - Vec3::new(0.0, psi_hat[(0, 1)], psi_hat[(0, 2)]) * ih;
        let col1 = dpsi * p - Vec3::new(0.0, psi[(0, 1)], psi[(0, 2)]) * ih;
        let grad = Mat3::from_columns(&[col1, psi.column(1) * ih, psi.column(2) * ih]);
        (c, grad)
    }
}

/// Slice least-squares fit of `Ψ` against `𝔭`:
/// `Ψ₁₂ = ∫x₂u₁/I₂`, `Ψ₁₃ = ∫x₃u₁/I₃`, `Ψ₂₃ = ∫(x₃u₂ − x₂u₃)/(I₂ + I₃)`.
fn fit_psi(mesh: &PrismMesh, u: &[Vec3], k: usize) -> Mat3 {
    let sec = mesh.section();
    let nv = sec.num_vertices();
    let base = k * nv;
    let mom = sec.moments();
    let (mut s12, mut s13, mut s23) = (0.0, 0.0, 0.0);
    for (t, tri) in sec.triangles().iter().enumerate() {
        let w = sec.triangle_area(t) / 3.0;
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let (a, b) = (tri[i], tri[j]);
            let xa = sec.vertices()[a];
            let xb = sec.vertices()[b];
            let (x2, x3) = (0.5 * (xa[0] + xb[0]), 0.5 * (xa[1] + xb[1]));
            let um = (u[base + a] + u[base + b]) * 0.5;
            s12 += w * x2 * um.x;
            s13 += w * x3 * um.x;
            s23 += w * (x3 * um.y - x2 * um.z);
        }
    }
    let (p12, p13, p23) = (s12 / mom.i2, s13 / mom.i3, s23 / (mom.i2 + mom.i3));
    Mat3::new(0.0, p12, p13, -p12, 0.0, p23, -p13, -p23, 0.0)
}

/// Splits a nodal displacement `u` on the prism mesh and evaluates the
/// decomposition identity and the bound constant.
pub fn griso_decompose(mesh: &PrismMesh, u: &[Vec3], h: f64) -> Result<GrisoDecomposition> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("thickness h = {h} must be positive")));
    }
    if u.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument("displacement has the wrong number of nodes".into()));
    }
    let n = mesh.layers();
    let d = mesh.delta();
    let psi: Vec<Mat3> = (0..=n).map(|k| fit_psi(mesh, u, k)).collect();
    let mut psi_hat = Vec::with_capacity(n + 1);
    psi_hat.push(Mat3::zeros());
    for k in 0..n {
        psi_hat.push(psi_hat[k] + (psi[k] + psi[k + 1]) * (0.5 * d));
    }
    let mut out = GrisoDecomposition {
        h,
        length: mesh.length(),
        psi,
        psi_hat,
        v: Vec::new(),
        identity_residual: 0.0,
        bound: GrisoBound { psi_w12: 0.0, v_l2: 0.0, grad_v_l2: 0.0, sym_grad_u_l2: 0.0, constant: 0.0 },
    };
    out.v = mesh.nodes().iter().zip(u).map(|(x, ui)| ui - out.corrector_at(x).0).collect();

    let scale = Mat3::from_diagonal(&Vec3::new(1.0, 1.0 / h, 1.0 / h));
    let (mut v2, mut gv2, mut su2, mut resid) = (0.0, 0.0, 0.0, 0.0_f64);
    for (t, tet) in mesh.tets().iter().enumerate() {
        let g = mesh.shape_gradients(t);
        let grad_u: Mat3 = tet.iter().zip(g).map(|(&i, gi)| u[i] * gi.transpose()).sum::<Mat3>() * scale;
        let vol = mesh.volume(t);
        su2 += vol * sym(&grad_u).norm_squared();
        let pts = tet.map(|i| mesh.nodes()[i]);
        for q in 0..4 {
            let mut bary = [TET_B; 4];
            bary[q] = TET_A;
            let x: Vec3 = pts.iter().zip(&bary).map(|(p, b)| p * *b).sum();
            let uq: Vec3 = tet.iter().zip(&bary).map(|(&i, b)| u[i] * *b).sum();
            let (c, grad_c) = out.corrector_at(&x);
            let (_, dpsi, _) = out.psi_at(x.x);
            let grad_v = grad_u - grad_c;
            let r = sym(&grad_u) - sym(&iota(&(dpsi * section_point(x.y, x.z)))) - sym(&grad_v);
            resid = resid.max(r.norm());
            v2 += 0.25 * vol * (uq - c).norm_squared();
            gv2 += 0.25 * vol * grad_v.norm_squared();
        }
    }
    let (mut p2, mut dp2) = (0.0, 0.0);
    for w in out.psi.windows(2) {
        p2 += d / 3.0 * (w[0].norm_squared() + w[0].dot(&w[1]) + w[1].norm_squared());
        dp2 += (w[1] - w[0]).norm_squared() / d;
    }
    let psi_w12 = (p2 + dp2).sqrt();
    let (v_l2, grad_v_l2, sym_grad_u_l2) = (v2.sqrt(), gv2.sqrt(), su2.sqrt());
    let num = psi_w12 + v_l2 + grad_v_l2;
    let constant = if sym_grad_u_l2 > 0.0 {
        num / sym_grad_u_l2
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    out.identity_residual = resid;
    out.bound = GrisoBound { psi_w12, v_l2, grad_v_l2, sym_grad_u_l2, constant };
    Ok(out)
}

/// Smooth seeded test displacement vanishing at `x₁ = 0`: a rod-like part
/// built from a quadratic `Ψ` plus a polynomial remainder.
pub fn synthetic_displacement(mesh: &PrismMesh, h: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let lin = draw(3);
    let quad = draw(3);
    let rem = draw(18);
    let l = mesh.length();
    let psi = |x1: f64| hat(&Vec3::new(lin[0] * x1 + quad[0] * x1 * x1, lin[1] * x1 + quad[1] * x1 * x1, lin[2] * x1 + quad[2] * x1 * x1));
    let psi_hat = |x1: f64| {
        let (a, b) = (x1 * x1 / 2.0, x1 * x1 * x1 / 3.0);
        hat(&Vec3::new(lin[0] * a + quad[0] * b, lin[1] * a + quad[1] * b, lin[2] * a + quad[2] * b))
    };
    mesh.nodes()
        .iter()
        .map(|x| {
            let s = x.x / l;
            let c = psi(s) * section_point(x.y, x.z) - Vec3::new(0.0, psi_hat(s)[(0, 1)], psi_hat(s)[(0, 2)]) * (l / h);
            let v = Vec3::from_fn(|i, _| {
                let r = &rem[6 * i..6 * i + 6];
                s * (r[0] + r[1] * x.y + r[2] * x.z + r[3] * x.y * x.y + r[4] * x.z * x.z + r[5] * s * x.y)
            });
            c + v
        })
        .collect()
}

/// Seeded arbitrary nodal field vanishing on the clamped slice.
pub fn random_displacement(mesh: &PrismMesh, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = mesh.section().num_vertices();
    (0..mesh.num_nodes())
        .map(|i| {
            let r = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if i < nv {
                Vec3::zeros()
            } else {
                r
            }
        })
        .collect()
}
