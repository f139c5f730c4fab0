//! Run configuration: JSON parsing with defaults, unknown-key rejection and
//! error collection with JSON-pointer paths.

use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum SectionConfig {
    Disk { radius: f64 },
    Rectangle { width: f64, height: f64 },
    /// Path to an ASCII mesh, relative to the configuration file.
    Imported { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Geometry {
    pub length: f64,
    pub section: SectionConfig,
    pub target_edge: f64,
    pub axial_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum ShapeConfig {
    All,
    Halfspace { normal: [f64; 3], offset: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
    Cylinder { center: [f64; 2], radius: f64, x1_range: Option<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionConfig {
    #[serde(flatten)]
    pub shape: ShapeConfig,
    pub lambda: f64,
    pub mu: f64,
}

/// Piecewise-constant force density on equal pieces of `(0, L)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadConfig {
    pub pieces: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub tol_1d: f64,
    pub tol_3d: f64,
    pub max_iterations_1d: usize,
    pub max_iterations_3d: usize,
    pub memory: usize,
    pub residual_tests: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdConfig {
    pub rot_ratio_spread: f64,
    pub stress_decay: f64,
    pub residual_1d: f64,
    pub griso_identity: f64,
    pub griso_stability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrisoConfig {
    pub target_edge: f64,
    pub layers: usize,
    pub levels: usize,
    pub h_values: Vec<f64>,
    pub random_fields: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub material: Vec<RegionConfig>,
    pub load: LoadConfig,
    pub solver: SolverConfig,
    pub h: f64,
    pub h_list: Vec<f64>,
    pub thresholds: ThresholdConfig,
    pub griso: GrisoConfig,
    pub output_dir: String,
}

impl RunConfig {
    /// SHA-256 of the canonical serialization (defaults filled, fixed key order).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// One semantic problem, located by a JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub pointer: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("JSON syntax error at byte {offset} (line {line}, column {column}): {message}")]
    Syntax { offset: usize, line: usize, column: usize, message: String },
    #[error("{}", format_issues(.0))]
    Invalid(Vec<Issue>),
}

fn format_issues(issues: &[Issue]) -> String {
    let lines: Vec<String> = issues.iter().map(|i| format!("{}: {}", display_pointer(&i.pointer), i.message)).collect();
    format!("invalid configuration:\n  {}", lines.join("\n  "))
}

fn display_pointer(p: &str) -> &str {
    if p.is_empty() {
        "/"
    } else {
        p
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", display_pointer(&self.pointer), self.message)
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Walks a JSON object, handing out typed fields and recording problems.
struct Fields<'a> {
    path: String,
    map: Option<&'a Map<String, Value>>,
    seen: Vec<&'static str>,
}

struct Sink(Vec<Issue>);

impl Sink {
    fn push(&mut self, pointer: &str, message: impl Into<String>) {
        self.0.push(Issue { pointer: pointer.to_string(), message: message.into() });
    }
}

fn child(path: &str, key: &str) -> String {
    format!("{path}/{}", key.replace('~', "~0").replace('/', "~1"))
}

impl<'a> Fields<'a> {
    fn new(path: String, value: Option<&'a Value>, sink: &mut Sink) -> Self {
        let map = match value {
            None => None,
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                sink.push(&path, "expected an object");
                None
            }
        };
        Self { path, map, seen: Vec::new() }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.map.and_then(|m| m.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.map.is_some_and(|m| m.contains_key(key))
    }

    fn path_of(&self, key: &str) -> String {
        child(&self.path, key)
    }

    fn number(&mut self, key: &'static str, default: Option<f64>, sink: &mut Sink) -> f64 {
        let p = self.path_of(key);
        match self.raw(key) {
            None => default.unwrap_or_else(|| {
                sink.push(&p, "missing required number");
                f64::NAN
            }),
            Some(v) => v.as_f64().unwrap_or_else(|| {
                sink.push(&p, "expected a number");
                f64::NAN
            }),
        }
    }

    fn count(&mut self, key: &'static str, default: usize, sink: &mut Sink) -> usize {
        let p = self.path_of(key);
        match self.raw(key) {
            None => default,
            Some(v) => match v.as_u64() {
                Some(n) => n as usize,
                None => {
                    sink.push(&p, "expected a non-negative integer");
                    default
                }
            },
        }
    }

    fn string(&mut self, key: &'static str, default: Option<&str>, sink: &mut Sink) -> String {
        let p = self.path_of(key);
        match self.raw(key) {
            None => default.map(str::to_string).unwrap_or_else(|| {
                sink.push(&p, "missing required string");
                String::new()
            }),
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                sink.push(&p, "expected a string");
                String::new()
            }
        }
    }

    fn numbers(&mut self, key: &'static str, default: Option<&[f64]>, sink: &mut Sink) -> Vec<f64> {
        let p = self.path_of(key);
        match self.raw(key) {
            None => default.map(<[f64]>::to_vec).unwrap_or_else(|| {
                sink.push(&p, "missing required array");
                Vec::new()
            }),
            Some(v) => number_array(v, &p, sink),
        }
    }

    fn vector<const N: usize>(&mut self, key: &'static str, default: Option<[f64; N]>, sink: &mut Sink) -> [f64; N] {
        let p = self.path_of(key);
        match self.raw(key) {
            None => default.unwrap_or_else(|| {
                sink.push(&p, format!("missing required array of {N} numbers"));
                [f64::NAN; N]
            }),
            Some(v) => fixed_array(v, &p, sink),
        }
    }

    fn object(&mut self, key: &'static str, sink: &mut Sink) -> Fields<'a> {
        let p = self.path_of(key);
        let v = self.raw(key);
        Fields::new(p, v, sink)
    }

    /// Reports keys that no accessor asked for.
    fn finish(self, sink: &mut Sink) {
        if let Some(m) = self.map {
            for k in m.keys() {
                if !self.seen.contains(&k.as_str()) {
                    sink.push(&child(&self.path, k), "unknown key");
                }
            }
        }
    }
}

fn number_array(v: &Value, p: &str, sink: &mut Sink) -> Vec<f64> {
    match v.as_array() {
        Some(a) => a
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_f64().unwrap_or_else(|| {
                    sink.push(&format!("{p}/{i}"), "expected a number");
                    f64::NAN
                })
            })
            .collect(),
        None => {
            sink.push(p, "expected an array of numbers");
            Vec::new()
        }
    }
}

fn fixed_array<const N: usize>(v: &Value, p: &str, sink: &mut Sink) -> [f64; N] {
    let xs = number_array(v, p, sink);
    if xs.len() != N {
        if v.is_array() {
            sink.push(p, format!("expected exactly {N} numbers, found {}", xs.len()));
        }
        return [f64::NAN; N];
    }
    std::array::from_fn(|i| xs[i])
}

fn positive(sink: &mut Sink, p: &str, x: f64, what: &str) {
    if !(x > 0.0 && x.is_finite()) && !x.is_nan() {
        sink.push(p, format!("{what} must be positive, got {x}"));
    }
}

fn tolerance(sink: &mut Sink, p: &str, x: f64) {
    if !(x > 0.0 && x < 1.0) && !x.is_nan() {
        sink.push(p, format!("tolerance must lie in (0, 1), got {x}"));
    }
}

fn at_least(sink: &mut Sink, p: &str, n: usize, min: usize) {
    if n < min {
        sink.push(p, format!("must be at least {min}, got {n}"));
    }
}

fn parse_section(f: &mut Fields, sink: &mut Sink) -> SectionConfig {
    let mut s = f.object("section", sink);
    let kind = s.string("shape", Some("disk"), sink);
    let out = match kind.as_str() {
        "disk" => {
            let radius = s.number("radius", Some(1.0), sink);
            positive(sink, &s.path_of("radius"), radius, "disk radius");
            SectionConfig::Disk { radius }
        }
        "rectangle" => {
            let width = s.number("width", None, sink);
            let height = s.number("height", None, sink);
            positive(sink, &s.path_of("width"), width, "rectangle width");
            positive(sink, &s.path_of("height"), height, "rectangle height");
            SectionConfig::Rectangle { width, height }
        }
        "imported" => SectionConfig::Imported { path: s.string("path", None, sink) },
        other => {
            sink.push(&s.path_of("shape"), format!("unknown section shape \"{other}\" (expected disk, rectangle or imported)"));
            SectionConfig::Disk { radius: 1.0 }
        }
    };
    s.finish(sink);
    out
}

fn parse_region(v: &Value, p: String, index: usize, sink: &mut Sink) -> RegionConfig {
    let mut f = Fields::new(p, Some(v), sink);
    let kind = f.string("shape", None, sink);
    let name = format!("region {index} ({kind})");
    let shape = match kind.as_str() {
        "all" => ShapeConfig::All,
        "halfspace" => {
            let normal = f.vector::<3>("normal", None, sink);
            let offset = f.number("offset", Some(0.0), sink);
            if normal.iter().all(|c| *c == 0.0) {
                sink.push(&f.path_of("normal"), format!("{name}: normal must be nonzero"));
            }
            ShapeConfig::Halfspace { normal, offset }
        }
        "box" => {
            let min = f.vector::<3>("min", None, sink);
            let max = f.vector::<3>("max", None, sink);
            if (0..3).any(|i| min[i] > max[i]) {
                sink.push(&f.path_of("max"), format!("{name}: max must not be below min"));
            }
            ShapeConfig::Box { min, max }
        }
        "cylinder" => {
            let center = f.vector::<2>("center", Some([0.0, 0.0]), sink);
            let radius = f.number("radius", None, sink);
            positive(sink, &f.path_of("radius"), radius, &format!("{name}: radius"));
            let x1_range = if f.has("x1_range") {
                let r = f.vector::<2>("x1_range", None, sink);
                if r[0] > r[1] {
                    sink.push(&f.path_of("x1_range"), format!("{name}: x1_range is empty"));
                }
                Some(r)
            } else {
                f.seen.push("x1_range");
                None
            };
            ShapeConfig::Cylinder { center, radius, x1_range }
        }
        "" => ShapeConfig::All,
        other => {
            sink.push(&f.path_of("shape"), format!("{name}: unknown shape \"{other}\" (expected all, halfspace, box or cylinder)"));
            ShapeConfig::All
        }
    };
    let lambda = f.number("lambda", None, sink);
    let mu = f.number("mu", None, sink);
    if !(mu > 0.0) && !mu.is_nan() {
        sink.push(&f.path_of("mu"), format!("{name}: mu must be positive, got {mu}"));
    }
    if !(3.0 * lambda + 2.0 * mu > 0.0) && !lambda.is_nan() && !mu.is_nan() {
        sink.push(&f.path_of("lambda"), format!("{name}: 3 lambda + 2 mu must be positive"));
    }
    f.finish(sink);
    RegionConfig { shape, lambda, mu }
}

fn parse_material(root: &mut Fields, sink: &mut Sink) -> Vec<RegionConfig> {
    let mut m = root.object("material", sink);
    let p = m.path_of("regions");
    let regions = match m.raw("regions") {
        None => vec![RegionConfig { shape: ShapeConfig::All, lambda: 1.0, mu: 1.0 }],
        Some(Value::Array(items)) => {
            items.iter().enumerate().map(|(i, v)| parse_region(v, format!("{p}/{i}"), i, sink)).collect()
        }
        Some(_) => {
            sink.push(&p, "expected an array of regions");
            Vec::new()
        }
    };
    if m.map.is_some() && !regions.iter().any(|r| r.shape == ShapeConfig::All) {
        sink.push(&p, "regions must include an \"all\" region so that they cover the domain");
    }
    m.finish(sink);
    regions
}

fn parse_load(root: &mut Fields, sink: &mut Sink) -> LoadConfig {
    let mut l = root.object("load", sink);
    let out = match (l.has("g"), l.has("pieces")) {
        (true, true) => {
            sink.push(&l.path, "give either \"g\" or \"pieces\", not both");
            l.seen.extend(["g", "pieces"]);
            LoadConfig { pieces: vec![[0.0; 3]] }
        }
        (_, true) => {
            let p = l.path_of("pieces");
            let pieces = match l.raw("pieces") {
                Some(Value::Array(items)) if !items.is_empty() => {
                    items.iter().enumerate().map(|(i, v)| fixed_array::<3>(v, &format!("{p}/{i}"), sink)).collect()
                }
                _ => {
                    sink.push(&p, "expected a non-empty array of 3-vectors");
                    vec![[0.0; 3]]
                }
            };
            LoadConfig { pieces }
        }
        _ => LoadConfig { pieces: vec![l.vector::<3>("g", Some([0.0, 0.0, -0.05]), sink)] },
    };
    l.finish(sink);
    out
}

fn strictly_decreasing_positive(sink: &mut Sink, p: &str, xs: &[f64], min_len: usize) {
    if xs.len() < min_len {
        sink.push(p, format!("needs at least {min_len} values"));
    }
    if xs.windows(2).any(|w| !(w[1] < w[0])) {
        sink.push(p, format!("{} must be strictly decreasing", p.rsplit('/').next().unwrap_or(p)));
    }
    for (i, x) in xs.iter().enumerate() {
        positive(sink, &format!("{p}/{i}"), *x, "thickness");
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        offset: byte_offset(text, e.line(), e.column()),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut sink = Sink(Vec::new());
    let mut root = Fields::new(String::new(), Some(&value), &mut sink);

    let mut g = root.object("geometry", &mut sink);
    let length = g.number("length", Some(1.0), &mut sink);
    positive(&mut sink, &g.path_of("length"), length, "length");
    let section = parse_section(&mut g, &mut sink);
    let target_edge = g.number("target_edge", Some(0.17), &mut sink);
    positive(&mut sink, &g.path_of("target_edge"), target_edge, "target_edge");
    let axial_elements = g.count("axial_elements", 64, &mut sink);
    at_least(&mut sink, &g.path_of("axial_elements"), axial_elements, 1);
    g.finish(&mut sink);

    let material = parse_material(&mut root, &mut sink);
    let load = parse_load(&mut root, &mut sink);

    let mut s = root.object("solver", &mut sink);
    let solver = SolverConfig {
        tol_1d: s.number("tol_1d", Some(1e-10), &mut sink),
        tol_3d: s.number("tol_3d", Some(1e-9), &mut sink),
        max_iterations_1d: s.count("max_iterations_1d", 5000, &mut sink),
        max_iterations_3d: s.count("max_iterations_3d", 2000, &mut sink),
        memory: s.count("memory", 12, &mut sink),
        residual_tests: s.count("residual_tests", 64, &mut sink),
        seed: s.count("seed", 0, &mut sink) as u64,
    };
    tolerance(&mut sink, &s.path_of("tol_1d"), solver.tol_1d);
    tolerance(&mut sink, &s.path_of("tol_3d"), solver.tol_3d);
    at_least(&mut sink, &s.path_of("max_iterations_1d"), solver.max_iterations_1d, 1);
    at_least(&mut sink, &s.path_of("max_iterations_3d"), solver.max_iterations_3d, 1);
    at_least(&mut sink, &s.path_of("memory"), solver.memory, 1);
    at_least(&mut sink, &s.path_of("residual_tests"), solver.residual_tests, 1);
    s.finish(&mut sink);

    let h = root.number("h", Some(0.1), &mut sink);
    positive(&mut sink, "/h", h, "thickness h");
    let h_list = root.numbers("h_list", Some(&[0.2, 0.1, 0.05]), &mut sink);
    strictly_decreasing_positive(&mut sink, "/h_list", &h_list, 3);

    let mut t = root.object("thresholds", &mut sink);
    let thresholds = ThresholdConfig {
        rot_ratio_spread: t.number("rot_ratio_spread", Some(3.0), &mut sink),
        stress_decay: t.number("stress_decay", Some(2.0), &mut sink),
        residual_1d: t.number("residual_1d", Some(1e-6), &mut sink),
        griso_identity: t.number("griso_identity", Some(1e-10), &mut sink),
        griso_stability: t.number("griso_stability", Some(0.2), &mut sink),
    };
    for (k, v) in [
        ("rot_ratio_spread", thresholds.rot_ratio_spread),
        ("stress_decay", thresholds.stress_decay),
        ("residual_1d", thresholds.residual_1d),
        ("griso_identity", thresholds.griso_identity),
        ("griso_stability", thresholds.griso_stability),
    ] {
        positive(&mut sink, &t.path_of(k), v, "threshold");
    }
    t.finish(&mut sink);

    let mut gr = root.object("griso", &mut sink);
    let griso = GrisoConfig {
        target_edge: gr.number("target_edge", Some(0.5), &mut sink),
        layers: gr.count("layers", 8, &mut sink),
        levels: gr.count("levels", 3, &mut sink),
        h_values: gr.numbers("h_values", Some(&[0.25, 0.1]), &mut sink),
        random_fields: gr.count("random_fields", 5, &mut sink),
    };
    positive(&mut sink, &gr.path_of("target_edge"), griso.target_edge, "target_edge");
    at_least(&mut sink, &gr.path_of("layers"), griso.layers, 1);
    at_least(&mut sink, &gr.path_of("levels"), griso.levels, 2);
    if griso.h_values.is_empty() {
        sink.push(&gr.path_of("h_values"), "needs at least one value");
    }
    for (i, x) in griso.h_values.iter().enumerate() {
        positive(&mut sink, &format!("{}/{i}", gr.path_of("h_values")), *x, "thickness");
    }
    gr.finish(&mut sink);

    let output_dir = root.string("output_dir", Some("out"), &mut sink);
    root.finish(&mut sink);

    if sink.0.is_empty() {
        Ok(RunConfig {
            geometry: Geometry { length, section, target_edge, axial_elements },
            material,
            load,
            solver,
            h,
            h_list,
            thresholds,
            griso,
            output_dir,
        })
    } else {
        Err(ConfigError::Invalid(sink.0))
    }
}
