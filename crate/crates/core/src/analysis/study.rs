use crate::algebra::{Mat3, Vec3};
use crate::error::{Error, Result};
use crate::material::ElasticMaterialField;
use crate::optim::LbfgsSettings;
use crate::rod1d::{
    frame_at, minimize_limit_energy, stationarity_residual_1d, CurvatureField, LimitSolution, LoadSpec,
};
use crate::rod3d::{lift_rod_state, minimize_3d, scaled_gradient, PrismMesh};
use crate::xsection::{stiffness_profile, CrossSectionMesh, EffectiveStiffness};

use super::frames::{extract_ansatz_fields, fit_slice_rotations, slice_mean_positions};
use super::stress::compute_strain_stress;

/// Physical setup shared by every rung of the thickness ladder. The prism
/// mesh is the same for all `h`; the limit model uses one segment per layer.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub length: f64,
    pub section: CrossSectionMesh,
    pub layers: usize,
    pub material: ElasticMaterialField,
    pub load: LoadSpec,
    pub rod_settings: LbfgsSettings,
    pub solid_settings: LbfgsSettings,
    pub residual_tests: usize,
}

/// Diagnostics of one thickness.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderMetrics {
    /// `‖∇_h yʰ − R̄‖_{L²(Ω)}` against the limit frames.
    pub err_grad: f64,
    /// `‖∇_h yʰ − Rʰ‖_{L²(Ω)}`.
    pub err_rot: f64,
    /// `|h⁻²∫W(∇_h yʰ) − ∫Q⁰₁(Ā)|`.
    pub energy_gap: f64,
    /// Limit stationarity residual of the curvature read off `Rʰ`.
    pub residual_1d: f64,
    /// `‖p₁ − b_min(Ā)‖_{L²(0,L)}`.
    pub ident_gap: f64,
    /// `‖Ē e₁‖_{L²(0,L)}`.
    pub stress_first_column: f64,
    /// `‖Ē e₁ − h Rᵀĝ‖_{L²(0,L)}`.
    pub equilibrium_defect: f64,
    pub skew_residual: f64,
    pub elastic_energy: f64,
    pub limit_elastic_energy: f64,
    pub total_energy: f64,
    pub tip: Vec3,
    pub limit_tip: Vec3,
    pub min_det: f64,
    pub iterations_3d: usize,
    pub iterations_1d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderEntry {
    pub h: f64,
    pub outcome: std::result::Result<LadderMetrics, String>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub reference: LimitSolution,
    pub entries: Vec<LadderEntry>,
}

/// Pass/fail thresholds for the ladder trends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Largest allowed `max/min` of `err_rot(h)/h`.
    pub rot_ratio_spread: f64,
    /// Smallest allowed `‖Ēe₁‖(h_first) / ‖Ēe₁‖(h_last)`.
    pub stress_decay: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { rot_ratio_spread: 3.0, stress_decay: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub all_solved: bool,
    pub err_grad_decreasing: bool,
    pub rot_ratio_spread: f64,
    pub rot_scaling_ok: bool,
    pub stress_decay: f64,
    pub stress_decay_ok: bool,
    pub ident_gap_decreasing: bool,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.all_solved && self.err_grad_decreasing && self.rot_scaling_ok && self.stress_decay_ok && self.ident_gap_decreasing
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl ConvergenceReport {
    pub fn metrics(&self) -> Option<Vec<&LadderMetrics>> {
        self.entries.iter().map(|e| e.outcome.as_ref().ok()).collect()
    }

    /// Empirical orders `log(e_i / e_{i+1}) / log(h_i / h_{i+1})`.
    pub fn rates(&self, f: impl Fn(&LadderMetrics) -> f64) -> Vec<Option<f64>> {
        self.entries
            .windows(2)
            .map(|w| match (&w[0].outcome, &w[1].outcome) {
                (Ok(a), Ok(b)) => {
                    let r = (f(a) / f(b)).ln() / (w[0].h / w[1].h).ln();
                    r.is_finite().then_some(r)
                }
                _ => None,
            })
            .collect()
    }

    pub fn verdict(&self, th: &Thresholds) -> Verdict {
        let Some(m) = self.metrics() else {
            return Verdict {
                all_solved: false,
                err_grad_decreasing: false,
                rot_ratio_spread: f64::NAN,
                rot_scaling_ok: false,
                stress_decay: f64::NAN,
                stress_decay_ok: false,
                ident_gap_decreasing: false,
            };
        };
        let col = |f: fn(&LadderMetrics) -> f64| m.iter().map(|x| f(x)).collect::<Vec<f64>>();
        let ratios: Vec<f64> = m.iter().zip(&self.entries).map(|(x, e)| x.err_rot / e.h).collect();
        let spread = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let stress = col(|x| x.stress_first_column);
        let decay = stress[0] / stress[stress.len() - 1];
        Verdict {
            all_solved: true,
            err_grad_decreasing: strictly_decreasing(&col(|x| x.err_grad)),
            rot_ratio_spread: spread,
            rot_scaling_ok: spread <= th.rot_ratio_spread,
            stress_decay: decay,
            stress_decay_ok: decay >= th.stress_decay,
            ident_gap_decreasing: strictly_decreasing(&col(|x| x.ident_gap)),
        }
    }
}

fn elastic_limit_energy(curv: &CurvatureField, eff: &[EffectiveStiffness]) -> f64 {
    curv.a.iter().zip(eff).map(|(a, e)| e.q0_reduced(a)).sum::<f64>() * curv.delta()
}

/// Solves the limit problem once, then for every `h`: the 3D problem from
/// the lifted limit state, the frame fit, the limit problem restarted from
/// the fitted curvature, and all comparison norms.
pub fn convergence_study(cfg: &StudyConfig, h_list: &[f64]) -> Result<ConvergenceReport> {
    if h_list.len() < 3 || !h_list.windows(2).all(|w| w[1] < w[0]) || h_list.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("h_list must hold at least three positive, strictly decreasing values".into()));
    }
    let mesh = PrismMesh::new(cfg.section.clone(), cfg.length, cfg.layers)?;
    let init = CurvatureField::zeros(cfg.length, cfg.layers)?;
    let eff = stiffness_profile(&cfg.material, &cfg.section, &init.midpoints())?;
    let reference = minimize_limit_energy(&init, &eff, &cfg.load, &cfg.rod_settings)?;
    let entries = h_list
        .iter()
        .map(|&h| LadderEntry { h, outcome: ladder_step(cfg, &mesh, &eff, &reference, h).map_err(|e| e.to_string()) })
        .collect();
    Ok(ConvergenceReport { reference, entries })
}

fn ladder_step(
    cfg: &StudyConfig,
    mesh: &PrismMesh,
    eff: &[EffectiveStiffness],
    reference: &LimitSolution,
    h: f64,
) -> Result<LadderMetrics> {
    let lift = lift_rod_state(mesh, &reference.curvature, h)?;
    let sol = minimize_3d(mesh, &lift, &cfg.material, &cfg.load, &cfg.solid_settings)?;
    let frames = fit_slice_rotations(mesh, &sol.def)?;
    let projected = frames.curvature_field()?;
    let limit = minimize_limit_energy(&projected, eff, &cfg.load, &cfg.rod_settings)?;
    let fields = compute_strain_stress(mesh, &sol.def, &cfg.material, &frames)?;
    let ansatz = extract_ansatz_fields(mesh, &sol.def, &frames)?;

    let (mut eg, mut er) = (0.0, 0.0);
    for t in 0..mesh.tets().len() {
        let x1 = mesh.centroid(t).x;
        let f = scaled_gradient(mesh, &sol.def, t);
        let rbar: Mat3 = frame_at(&limit.curvature, &limit.state, x1);
        eg += mesh.volume(t) * (f - rbar).norm_squared();
        er += mesh.volume(t) * (f - frames.frame_at(x1)).norm_squared();
    }
    let d = mesh.delta();
    let ident: f64 = ansatz
        .p1
        .iter()
        .zip(&limit.curvature.a)
        .zip(eff)
        .map(|((p, a), e)| (p - e.bmin_axl(a)).powi(2))
        .sum::<f64>()
        * d;
    let limit_elastic = elastic_limit_energy(&limit.curvature, eff);
    let tip = *slice_mean_positions(mesh, &sol.def).last().expect("at least one layer");
    Ok(LadderMetrics {
        err_grad: eg.sqrt(),
        err_rot: er.sqrt(),
        energy_gap: (sol.parts.elastic - limit_elastic).abs(),
        residual_1d: stationarity_residual_1d(&projected, eff, &cfg.load, cfg.residual_tests)?,
        ident_gap: ident.sqrt(),
        stress_first_column: fields.mean_first_column_norm(),
        equilibrium_defect: fields.equilibrium_defect(&frames, &cfg.load),
        skew_residual: fields.skew_identity_residual(),
        elastic_energy: sol.parts.elastic,
        limit_elastic_energy: limit_elastic,
        total_energy: sol.energy,
        tip,
        limit_tip: limit.state.tip(),
        min_det: sol.min_det,
        iterations_3d: sol.optim.iterations,
        iterations_1d: limit.optim.iterations,
    })
}
