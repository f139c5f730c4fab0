//! Subcommand orchestration: builds the model from a configuration, runs the
//! stages and emits CSV, JSON and ASCII outputs plus a manifest.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rodlimit::algebra::{hat, Vec3};
use rodlimit::analysis::{
    convergence_study, griso_decompose, random_displacement, synthetic_displacement, ConvergenceReport, LadderMetrics,
    StudyConfig, Thresholds,
};
use rodlimit::material::{ElasticMaterialField, IsotropicTensor, Region, RegionShape};
use rodlimit::optim::LbfgsSettings;
use rodlimit::rod1d::{centerline_at, minimize_limit_energy, stationarity_residual_1d, CurvatureField, LimitSolution, LoadSpec};
use rodlimit::rod3d::{lift_rod_state, minimize_3d, PrismMesh};
use rodlimit::xsection::{bmin, generate_mesh, stiffness_profile, CrossSectionMesh, EffectiveStiffness, SectionSpec};
use serde::Serialize;
use serde_json::json;

use crate::config::{parse_config, RunConfig, SectionConfig, ShapeConfig};
use crate::output::{fmt_f64, num, to_json_bytes, write_atomic, Csv, FailureKind, Manifest, Recorder, StageError, VERSIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Stiffness,
    Solve1d,
    Solve3d,
    Converge,
    GrisoCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Stiffness => "stiffness",
            Command::Solve1d => "solve1d",
            Command::Solve3d => "solve3d",
            Command::Converge => "converge",
            Command::GrisoCheck => "griso-check",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CRITERIA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Runs one subcommand and returns the process exit code.
pub fn execute(cmd: Command, opts: &RunOptions) -> i32 {
    let started = Instant::now();
    let text = match std::fs::read_to_string(&opts.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config file {}: {e}", opts.config.display());
            return EXIT_USAGE;
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", opts.config.display());
            return EXIT_USAGE;
        }
    };
    let threads = opts.threads.unwrap_or_else(rayon::current_num_threads);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return EXIT_USAGE;
        }
    };
    let seed = opts.seed.unwrap_or(cfg.solver.seed);
    let out_dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let config_dir = opts.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let ctx = Context { cfg: &cfg, config_dir, seed };
    let mut rec = Recorder::new(out_dir.clone());

    let criteria = pool.install(|| match cmd {
        Command::Stiffness => run_stiffness(&ctx, &mut rec),
        Command::Solve1d => run_solve1d(&ctx, &mut rec),
        Command::Solve3d => run_solve3d(&ctx, &mut rec),
        Command::Converge => run_converge(&ctx, &mut rec),
        Command::GrisoCheck => run_griso(&ctx, &mut rec),
    });
    let criteria_passed = criteria.unwrap_or(false);
    let mut code = match rec.failure() {
        Some(FailureKind::Io) => EXIT_USAGE,
        Some(FailureKind::Compute) => EXIT_CRITERIA,
        None if criteria_passed => EXIT_PASS,
        None => EXIT_CRITERIA,
    };
    let manifest = Manifest {
        subcommand: cmd.name(),
        config_path: opts.config.display().to_string(),
        config_sha256: cfg.hash(),
        versions: VERSIONS,
        threads,
        seed,
        started_unix_seconds: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
            .saturating_sub(started.elapsed().as_secs()),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        stages: &rec.stages,
        outputs: &rec.outputs,
        criteria_passed: criteria_passed && rec.failure().is_none(),
        exit_code: code,
    };
    let path = out_dir.join("manifest.json");
    if let Err(e) = write_atomic(&path, &to_json_bytes(&manifest)) {
        eprintln!("error: cannot write {}: {e}", path.display());
        code = EXIT_USAGE;
    }
    for s in rec.stages.iter().filter(|s| s.message.is_some()) {
        eprintln!("stage {} failed: {}", s.name, s.message.as_deref().unwrap_or(""));
    }
    let verdict = match code {
        EXIT_PASS => "passed",
        EXIT_CRITERIA => "criteria failed",
        _ => "input/output error",
    };
    println!("{}: {verdict} (outputs in {})", cmd.name(), out_dir.display());
    code
}

struct Context<'a> {
    cfg: &'a RunConfig,
    config_dir: PathBuf,
    seed: u64,
}

impl Context<'_> {
    fn section_spec(&self) -> Result<SectionSpec, StageError> {
        Ok(match &self.cfg.geometry.section {
            SectionConfig::Disk { radius } => SectionSpec::Disk { radius: *radius },
            SectionConfig::Rectangle { width, height } => SectionSpec::Rectangle { width: *width, height: *height },
            SectionConfig::Imported { path } => {
                let full = self.config_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| StageError::io(format!("cannot read mesh file {}: {e}", full.display())))?;
                let mesh = CrossSectionMesh::parse(&text).map_err(|e| StageError::io(format!("{}: {e}", full.display())))?;
                SectionSpec::Imported(mesh)
            }
        })
    }

    /// Centered, unit-area section at the given edge length.
    fn section(&self, target_edge: f64) -> Result<CrossSectionMesh, StageError> {
        Ok(generate_mesh(&self.section_spec()?, target_edge)?.center_and_normalize())
    }

    fn material(&self) -> Result<ElasticMaterialField, StageError> {
        let regions = self
            .cfg
            .material
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let shape = match &r.shape {
                    ShapeConfig::All => RegionShape::All,
                    ShapeConfig::Halfspace { normal, offset } => {
                        RegionShape::HalfSpace { normal: Vec3::from(*normal), offset: *offset }
                    }
                    ShapeConfig::Box { min, max } => RegionShape::Box { min: Vec3::from(*min), max: Vec3::from(*max) },
                    ShapeConfig::Cylinder { center, radius, x1_range } => {
                        RegionShape::Cylinder { center: *center, radius: *radius, x1_range: x1_range.map(|r| (r[0], r[1])) }
                    }
                };
                let tensor = IsotropicTensor::new(r.lambda, r.mu)
                    .map_err(|e| StageError::compute(format!("material region {i}: {e}")))?;
                Ok(Region { shape, tensor })
            })
            .collect::<Result<Vec<_>, StageError>>()?;
        Ok(ElasticMaterialField::new(regions)?)
    }

    fn load(&self) -> Result<LoadSpec, StageError> {
        Ok(LoadSpec::new(self.cfg.geometry.length, self.cfg.load.pieces.iter().map(|p| Vec3::from(*p)).collect())?)
    }

    fn rod_settings(&self) -> LbfgsSettings {
        let s = &self.cfg.solver;
        LbfgsSettings { memory: s.memory, max_iterations: s.max_iterations_1d, tol: s.tol_1d, ..LbfgsSettings::default() }
    }

    fn solid_settings(&self) -> LbfgsSettings {
        let s = &self.cfg.solver;
        LbfgsSettings { memory: s.memory, max_iterations: s.max_iterations_3d, tol: s.tol_3d, ..LbfgsSettings::default() }
    }
}

/// Section, material, load and the stiffness at the segment midpoints.
struct Model {
    section: CrossSectionMesh,
    material: ElasticMaterialField,
    load: LoadSpec,
    init: CurvatureField,
    eff: Vec<EffectiveStiffness>,
}

fn build_model(ctx: &Context, rec: &mut Recorder) -> Option<Model> {
    let section = rec.stage("mesh", || ctx.section(ctx.cfg.geometry.target_edge))?;
    let material = rec.stage("material", || ctx.material())?;
    let load = rec.stage("load", || ctx.load())?;
    let (init, eff) = rec.stage("stiffness", || {
        let init = CurvatureField::zeros(ctx.cfg.geometry.length, ctx.cfg.geometry.axial_elements)?;
        let eff = stiffness_profile(&material, &section, &init.midpoints())?;
        Ok((init, eff))
    })?;
    Some(Model { section, material, load, init, eff })
}

fn vec3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn run_stiffness(ctx: &Context, rec: &mut Recorder) -> Option<bool> {
    let m = build_model(ctx, rec)?;
    let mut header = vec!["x1".to_string()];
    for (i, j) in (0..4).flat_map(|i| (i..4).map(move |j| (i, j))) {
        header.push(format!("gram_{}{}", i + 1, j + 1));
    }
    for (i, j) in (0..3).flat_map(|i| (i..3).map(move |j| (i, j))) {
        header.push(format!("reduced_{}{}", i + 1, j + 1));
    }
    header.extend((1..=3).map(|i| format!("bmin_row_{i}")));
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (x1, e) in m.init.midpoints().iter().zip(&m.eff) {
        let mut row = vec![fmt_f64(Some(*x1))];
        row.extend(e.gram_upper().iter().map(|v| fmt_f64(Some(*v))));
        row.extend(e.reduced_upper().iter().map(|v| fmt_f64(Some(*v))));
        row.extend(e.bmin_row.iter().map(|v| fmt_f64(Some(*v))));
        csv.row(row);
    }
    let worst = |f: fn(&EffectiveStiffness) -> f64| m.eff.iter().map(f).fold(0.0, f64::max);
    let summary = json!({
        "rows": m.eff.len(),
        "section_vertices": m.section.num_vertices(),
        "section_triangles": m.section.num_triangles(),
        "alpha": m.material.alpha(),
        "beta": m.material.beta(),
        "bound_constants_max": {
            "c": worst(|e| e.bounds.c),
            "c_prime": worst(|e| e.bounds.c_prime),
            "c_double_prime": worst(|e| e.bounds.c_double_prime),
        },
    });
    rec.emit("stiffness.csv", &csv.into_bytes())?;
    rec.emit("stiffness.json", &to_json_bytes(&summary))?;
    rec.emit("section_mesh.txt", m.section.to_ascii().as_bytes())?;
    Some(true)
}

fn solve_limit(ctx: &Context, rec: &mut Recorder, m: &Model) -> Option<(LimitSolution, f64)> {
    let sol = rec.stage("solve1d", || Ok(minimize_limit_energy(&m.init, &m.eff, &m.load, &ctx.rod_settings())?))?;
    let residual = rec.stage("residual1d", || {
        Ok(stationarity_residual_1d(&sol.curvature, &m.eff, &m.load, ctx.cfg.solver.residual_tests)?)
    })?;
    Some((sol, residual))
}

fn run_solve1d(ctx: &Context, rec: &mut Recorder) -> Option<bool> {
    let m = build_model(ctx, rec)?;
    let (sol, residual) = solve_limit(ctx, rec, &m)?;
    let mut csv = Csv::new(&["x1", "y1", "y2", "y3", "a1", "a2", "a3", "bmin"]);
    for ((x1, a), e) in sol.curvature.midpoints().iter().zip(&sol.curvature.a).zip(&m.eff) {
        let y = centerline_at(&sol.curvature, &sol.state, *x1);
        let b = bmin(e, &hat(a)).unwrap_or(f64::NAN);
        csv.row([*x1, y.x, y.y, y.z, a.x, a.y, a.z, b].map(|v| fmt_f64(Some(v))));
    }
    let passed = residual <= ctx.cfg.thresholds.residual_1d;
    let summary = json!({
        "energy": sol.energy,
        "residual": residual,
        "residual_threshold": ctx.cfg.thresholds.residual_1d,
        "tip": vec3(&sol.state.tip()),
        "segments": sol.curvature.segments(),
        "iterations": sol.optim.iterations,
        "gradient_norm": sol.optim.grad_norm,
        "passed": passed,
    });
    rec.emit("rod1d.csv", &csv.into_bytes())?;
    rec.emit("solve1d.json", &to_json_bytes(&summary))?;
    Some(passed)
}

fn run_solve3d(ctx: &Context, rec: &mut Recorder) -> Option<bool> {
    let m = build_model(ctx, rec)?;
    let (limit, _) = solve_limit(ctx, rec, &m)?;
    let h = ctx.cfg.h;
    let (mesh, init) = rec.stage("lift", || {
        let mesh = PrismMesh::new(m.section.clone(), ctx.cfg.geometry.length, ctx.cfg.geometry.axial_elements)?;
        let init = lift_rod_state(&mesh, &limit.curvature, h)?;
        Ok((mesh, init))
    })?;
    let sol = rec.stage("solve3d", || Ok(minimize_3d(&mesh, &init, &m.material, &m.load, &ctx.solid_settings())?))?;
    let mut dump = String::new();
    for (x, y) in mesh.nodes().iter().zip(&sol.def.y) {
        let fields = [x.x, x.y, x.z, y.x, y.y, y.z].map(num);
        dump.push_str(&fields.join(" "));
        dump.push('\n');
    }
    let tip = mesh.slice_nodes(mesh.layers()).map(|i| sol.def.y[i]).sum::<Vec3>()
        / mesh.section().num_vertices() as f64;
    let passed = sol.min_det > 0.0;
    let summary = json!({
        "h": h,
        "energy": sol.energy,
        "elastic_energy": sol.parts.elastic,
        "load_work": sol.parts.load,
        "residual": sol.optim.grad_norm,
        "initial_residual": sol.optim.initial_grad_norm,
        "tolerance": ctx.cfg.solver.tol_3d,
        "iterations": sol.optim.iterations,
        "min_det": sol.min_det,
        "inverted_elements": sol.parts.inverted_elements,
        "clamp_defect": sol.def.dirichlet_defect(&mesh),
        "tip_mean_position": vec3(&tip),
        "limit_energy": limit.energy,
        "limit_tip": vec3(&limit.state.tip()),
        "nodes": mesh.num_nodes(),
        "elements": mesh.tets().len(),
        "passed": passed,
    });
    rec.emit("solve3d.json", &to_json_bytes(&summary))?;
    rec.emit("nodes.txt", dump.as_bytes())?;
    Some(passed)
}

#[derive(Serialize)]
struct Criterion {
    name: &'static str,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    measure: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    values: Vec<Option<f64>>,
}

fn column(report: &ConvergenceReport, f: impl Fn(&LadderMetrics) -> f64) -> Vec<Option<f64>> {
    report.entries.iter().map(|e| e.outcome.as_ref().ok().map(&f)).collect()
}

fn run_converge(ctx: &Context, rec: &mut Recorder) -> Option<bool> {
    let section = rec.stage("mesh", || ctx.section(ctx.cfg.geometry.target_edge))?;
    let material = rec.stage("material", || ctx.material())?;
    let load = rec.stage("load", || ctx.load())?;
    let study = StudyConfig {
        length: ctx.cfg.geometry.length,
        section,
        layers: ctx.cfg.geometry.axial_elements,
        material,
        load,
        rod_settings: ctx.rod_settings(),
        solid_settings: ctx.solid_settings(),
        residual_tests: ctx.cfg.solver.residual_tests,
    };
    let report = rec.stage("study", || Ok(convergence_study(&study, &ctx.cfg.h_list)?))?;
    for e in &report.entries {
        if let Err(msg) = &e.outcome {
            rec.fail(&format!("thickness h = {}", e.h), 0.0, StageError::compute(msg.clone()));
        }
    }

    type Col = fn(&LadderMetrics) -> f64;
    let metrics: [(&str, Col); 11] = [
        ("err_grad", |m| m.err_grad),
        ("err_rot", |m| m.err_rot),
        ("energy_gap", |m| m.energy_gap),
        ("residual_1d", |m| m.residual_1d),
        ("ident_gap", |m| m.ident_gap),
        ("stress_first_column", |m| m.stress_first_column),
        ("equilibrium_defect", |m| m.equilibrium_defect),
        ("skew_residual", |m| m.skew_residual),
        ("elastic_energy", |m| m.elastic_energy),
        ("limit_elastic_energy", |m| m.limit_elastic_energy),
        ("min_det", |m| m.min_det),
    ];
    let rated: [(&str, Col); 5] = [
        ("err_grad", |m| m.err_grad),
        ("err_rot", |m| m.err_rot),
        ("energy_gap", |m| m.energy_gap),
        ("ident_gap", |m| m.ident_gap),
        ("stress_first_column", |m| m.stress_first_column),
    ];
    let mut header = vec!["h".to_string()];
    header.extend(metrics.iter().map(|(n, _)| n.to_string()));
    header.extend(rated.iter().map(|(n, _)| format!("rate_{n}")));
    header.extend(["iterations_3d".to_string(), "iterations_1d".to_string(), "status".to_string()]);
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let rates: Vec<Vec<Option<f64>>> = rated.iter().map(|(_, f)| report.rates(f)).collect();
    for (i, e) in report.entries.iter().enumerate() {
        let ok = e.outcome.as_ref().ok();
        let mut row = vec![fmt_f64(Some(e.h))];
        row.extend(metrics.iter().map(|(_, f)| fmt_f64(ok.map(f))));
        row.extend(rates.iter().map(|r| fmt_f64(i.checked_sub(1).and_then(|j| r[j]))));
        row.push(ok.map(|m| m.iterations_3d.to_string()).unwrap_or_default());
        row.push(ok.map(|m| m.iterations_1d.to_string()).unwrap_or_default());
        row.push(if ok.is_some() { "ok".into() } else { "failed".into() });
        csv.row(row);
    }

    let th = Thresholds { rot_ratio_spread: ctx.cfg.thresholds.rot_ratio_spread, stress_decay: ctx.cfg.thresholds.stress_decay };
    let v = report.verdict(&th);
    let finite = |x: f64| x.is_finite().then_some(x);
    let criteria = vec![
        Criterion { name: "all_solved", passed: v.all_solved, measure: None, threshold: None, values: vec![] },
        Criterion {
            name: "err_grad_strictly_decreasing",
            passed: v.err_grad_decreasing,
            measure: None,
            threshold: None,
            values: column(&report, |m| m.err_grad),
        },
        Criterion {
            name: "err_rot_over_h_bounded",
            passed: v.rot_scaling_ok,
            measure: finite(v.rot_ratio_spread),
            threshold: Some(th.rot_ratio_spread),
            values: report.entries.iter().map(|e| e.outcome.as_ref().ok().map(|m| m.err_rot / e.h)).collect(),
        },
        Criterion {
            name: "stress_first_column_decay",
            passed: v.stress_decay_ok,
            measure: finite(v.stress_decay),
            threshold: Some(th.stress_decay),
            values: column(&report, |m| m.stress_first_column),
        },
        Criterion {
            name: "ident_gap_strictly_decreasing",
            passed: v.ident_gap_decreasing,
            measure: None,
            threshold: None,
            values: column(&report, |m| m.ident_gap),
        },
    ];
    let entries: Vec<_> = report
        .entries
        .iter()
        .map(|e| match &e.outcome {
            Ok(m) => json!({"h": e.h, "status": "ok", "tip": vec3(&m.tip), "limit_tip": vec3(&m.limit_tip), "total_energy": m.total_energy}),
            Err(msg) => json!({"h": e.h, "status": "failed", "error": msg}),
        })
        .collect();
    let verdict = json!({
        "passed": v.passed(),
        "criteria": criteria,
        "reference": {
            "energy": report.reference.energy,
            "tip": vec3(&report.reference.state.tip()),
            "iterations": report.reference.optim.iterations,
        },
        "entries": entries,
    });
    rec.emit("converge.csv", &csv.into_bytes())?;
    rec.emit("verdict.json", &to_json_bytes(&verdict))?;
    Some(v.passed())
}

fn run_griso(ctx: &Context, rec: &mut Recorder) -> Option<bool> {
    let g = &ctx.cfg.griso;
    let base = rec.stage("mesh", || ctx.section(g.target_edge))?;
    let mut csv = Csv::new(&[
        "h",
        "level",
        "section_vertices",
        "layers",
        "field",
        "seed",
        "identity_residual",
        "psi_w12",
        "v_l2",
        "grad_v_l2",
        "sym_grad_u_l2",
        "constant",
    ]);
    let mut per_h = Vec::new();
    let mut worst_identity: f64 = 0.0;
    let mut stable_all = true;
    for &h in &g.h_values {
        let mut section = base.clone();
        let mut constants = Vec::new();
        for level in 0..g.levels {
            if level > 0 {
                section = section.refine_uniform();
            }
            let layers = g.layers << level;
            let rows = rec.stage(&format!("griso h = {h} level {level}"), || {
                let mesh = PrismMesh::new(section.clone(), ctx.cfg.geometry.length, layers)?;
                let mut rows = Vec::new();
                let syn = griso_decompose(&mesh, &synthetic_displacement(&mesh, h, ctx.seed), h)?;
                rows.push(("synthetic".to_string(), ctx.seed, syn));
                for k in 1..=g.random_fields as u64 {
                    let s = ctx.seed.wrapping_add(k);
                    rows.push((format!("random{k}"), s, griso_decompose(&mesh, &random_displacement(&mesh, s), h)?));
                }
                Ok((mesh.section().num_vertices(), rows))
            })?;
            let (nv, rows) = rows;
            for (field, seed, d) in rows {
                let b = d.bound;
                worst_identity = worst_identity.max(d.identity_residual);
                if field == "synthetic" {
                    constants.push(b.constant);
                }
                let mut row = vec![fmt_f64(Some(h)), level.to_string(), nv.to_string(), layers.to_string(), field, seed.to_string()];
                row.extend(
                    [d.identity_residual, b.psi_w12, b.v_l2, b.grad_v_l2, b.sym_grad_u_l2, b.constant].map(|v| fmt_f64(Some(v))),
                );
                csv.row(row);
            }
        }
        let deviation = constants.iter().map(|c| (c / constants[0] - 1.0).abs()).fold(0.0, f64::max);
        let stable = constants.iter().all(|c| c.is_finite() && *c > 0.0) && deviation <= ctx.cfg.thresholds.griso_stability;
        stable_all &= stable;
        per_h.push(json!({"h": h, "constants": constants, "max_relative_deviation": deviation, "stable": stable}));
    }
    let identity_ok = worst_identity <= ctx.cfg.thresholds.griso_identity;
    let passed = identity_ok && stable_all;
    let summary = json!({
        "passed": passed,
        "identity_residual_max": worst_identity,
        "identity_threshold": ctx.cfg.thresholds.griso_identity,
        "identity_ok": identity_ok,
        "stability_threshold": ctx.cfg.thresholds.griso_stability,
        "bound_constants": per_h,
    });
    rec.emit("griso.csv", &csv.into_bytes())?;
    rec.emit("griso.json", &to_json_bytes(&summary))?;
    Some(passed)
}
