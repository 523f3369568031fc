//! Simulation configuration files.
//!
//! The format is a flat list of `key = value` lines. `#` starts a comment.
//! Values are numbers (`0.25`, `64`, `1e-10`), bare or double-quoted
//! strings, `true`/`false`, or bracketed lists that may nest
//! (`[[10, 20], [30, 40]]`). Keys may appear at most once.
//!
//! | key | type | default |
//! |-----|------|---------|
//! | `epsilon` | float in (0, 1] | required |
//! | `mean_density` | float | required |
//! | `dim` | 1, 2 or 3 | length of the `length`/`elements` list; 2 if both are scalars |
//! | `length` | float or list | required |
//! | `elements` | int or list | required |
//! | `degree` | int ≥ 2 | 2 |
//! | `quad_points` | int | degree + 1 |
//! | `dt` | float > 0 | required |
//! | `final_time` | float ≥ 0 | required |
//! | `scheme` | `first_order` / `second_order` | `second_order` |
//! | `newton_tol` | float | 1e-10 |
//! | `newton_max_iter` | int | 25 |
//! | `linear_tol` | float | 1e-12 |
//! | `linear_solver` | `krylov` / `direct` | `krylov` |
//! | `ic` | `constant_noise` / `single_mode` / `hex_seeds` | required |
//! | `ic_amplitude` | float | 0 |
//! | `ic_seed` | int | 0 (noise RNG seed) |
//! | `ic_k` | int list | `[1, 0, …]` (single_mode) |
//! | `ic_centers` | list of coordinate lists | required for hex_seeds |
//! | `ic_angles` | float list (radians) | zeros |
//! | `ic_radius` | float | required for hex_seeds |
//! | `snapshot_stride` | int | 0 (initial and final only) |
//! | `output_dir` | string | `output` |
//! | `output_formats` | list of `vtk_structured` / `raw_binary` | `[vtk_structured]` |
//! | `mode` | `test` / `production` | `production` |

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::initial::{HexSeed, InitialCondition};
use crate::integrator::ViolationPolicy;
use crate::linsolve::LinearSolverKind;
use crate::model::{ModelParams, SchemeOrder};
use crate::output::SnapshotFormat;

/// Energy-violation handling: `test` aborts, `production` warns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    Test,
    Production,
}

impl RunMode {
    pub fn policy(self) -> ViolationPolicy {
        match self {
            RunMode::Test => ViolationPolicy::Abort,
            RunMode::Production => ViolationPolicy::Warn,
        }
    }

    fn name(self) -> &'static str {
        match self {
            RunMode::Test => "test",
            RunMode::Production => "production",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub params: ModelParams,
    pub initial: InitialCondition,
    pub snapshot_stride: usize,
    pub output_dir: String,
    pub output_formats: Vec<SnapshotFormat>,
    pub mode: RunMode,
}

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Number(f64, bool),
    Text(String),
    Bool(bool),
    List(Vec<Value>),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Number(_, true) => "integer",
            Value::Number(_, false) => "number",
            Value::Text(_) => "string",
            Value::Bool(_) => "boolean",
            Value::List(_) => "list",
        }
    }
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn value(&mut self) -> std::result::Result<Value, String> {
        self.skip_ws();
        match self.peek() {
            None => Err("missing value".into()),
            Some(b'[') => {
                self.pos += 1;
                let mut items = Vec::new();
                self.skip_ws();
                if self.peek() == Some(b']') {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                loop {
                    items.push(self.value()?);
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {
                            self.pos += 1;
                            return Ok(Value::List(items));
                        }
                        _ => return Err("expected ',' or ']' in list".into()),
                    }
                }
            }
            Some(b'"') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos] != b'"' {
                    self.pos += 1;
                }
                if self.pos >= self.s.len() {
                    return Err("unterminated string".into());
                }
                let text = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
                self.pos += 1;
                Ok(Value::Text(text))
            }
            Some(_) => {
                let start = self.pos;
                while self.pos < self.s.len() && !matches!(self.s[self.pos], b',' | b']' | b'[') {
                    self.pos += 1;
                }
                let token = String::from_utf8_lossy(&self.s[start..self.pos])
                    .trim()
                    .to_string();
                if token.is_empty() {
                    return Err("empty value".into());
                }
                if let Ok(i) = token.parse::<i64>() {
                    return Ok(Value::Number(i as f64, true));
                }
                if let Ok(x) = token.parse::<f64>() {
                    return Ok(Value::Number(x, false));
                }
                match token.as_str() {
                    "true" => Ok(Value::Bool(true)),
                    "false" => Ok(Value::Bool(false)),
                    _ if token
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || "_-./".contains(c)) =>
                    {
                        Ok(Value::Text(token))
                    }
                    _ => Err(format!("cannot parse value '{token}'")),
                }
            }
        }
    }
}

fn parse_value(text: &str) -> std::result::Result<Value, String> {
    let mut c = Cursor {
        s: text.as_bytes(),
        pos: 0,
    };
    let v = c.value()?;
    c.skip_ws();
    if c.pos != c.s.len() {
        return Err(format!("unexpected trailing text '{}'", &text[c.pos..]));
    }
    Ok(v)
}

const KEYS: &[&str] = &[
    "epsilon",
    "mean_density",
    "dim",
    "length",
    "elements",
    "degree",
    "quad_points",
    "dt",
    "final_time",
    "scheme",
    "newton_tol",
    "newton_max_iter",
    "linear_tol",
    "linear_solver",
    "ic",
    "ic_amplitude",
    "ic_seed",
    "ic_k",
    "ic_centers",
    "ic_angles",
    "ic_radius",
    "snapshot_stride",
    "output_dir",
    "output_formats",
    "mode",
];

struct Entries {
    map: HashMap<String, (usize, Value)>,
}

impl Entries {
    fn err(line: usize, message: impl Into<String>) -> Error {
        Error::Config {
            line,
            message: message.into(),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |(l, _)| *l)
    }

    fn get(&self, key: &str) -> Option<&(usize, Value)> {
        self.map.get(key)
    }

    fn required(&self, key: &str) -> Result<&(usize, Value)> {
        self.get(key)
            .ok_or_else(|| Error::ConfigMissing(format!("missing required key '{key}'")))
    }

    fn type_error(key: &str, line: usize, want: &str, got: &Value) -> Error {
        Self::err(line, format!("'{key}' must be {want}, found {}", got.describe()))
    }

    fn number(key: &str, entry: &(usize, Value)) -> Result<f64> {
        match &entry.1 {
            Value::Number(x, _) => Ok(*x),
            v => Err(Self::type_error(key, entry.0, "a number", v)),
        }
    }

    fn integer(key: &str, entry: &(usize, Value)) -> Result<i64> {
        match &entry.1 {
            Value::Number(x, true) => Ok(*x as i64),
            v => Err(Self::type_error(key, entry.0, "an integer", v)),
        }
    }

    fn count(key: &str, entry: &(usize, Value)) -> Result<usize> {
        let i = Self::integer(key, entry)?;
        usize::try_from(i).map_err(|_| Self::err(entry.0, format!("'{key}' must be non-negative")))
    }

    fn text<'v>(key: &str, entry: &'v (usize, Value)) -> Result<&'v str> {
        match &entry.1 {
            Value::Text(s) => Ok(s),
            v => Err(Self::type_error(key, entry.0, "a string", v)),
        }
    }

    fn list<'v>(key: &str, entry: &'v (usize, Value)) -> Result<&'v [Value]> {
        match &entry.1 {
            Value::List(items) => Ok(items),
            v => Err(Self::type_error(key, entry.0, "a list", v)),
        }
    }

    /// Scalar or list of numbers.
    fn numbers(key: &str, entry: &(usize, Value)) -> Result<Vec<f64>> {
        match &entry.1 {
            Value::Number(x, _) => Ok(vec![*x]),
            Value::List(items) => items
                .iter()
                .map(|v| match v {
                    Value::Number(x, _) => Ok(*x),
                    other => Err(Self::type_error(key, entry.0, "a list of numbers", other)),
                })
                .collect(),
            v => Err(Self::type_error(key, entry.0, "a number or list of numbers", v)),
        }
    }

    fn integers(key: &str, entry: &(usize, Value)) -> Result<Vec<i64>> {
        match &entry.1 {
            Value::Number(x, true) => Ok(vec![*x as i64]),
            Value::List(items) => items
                .iter()
                .map(|v| match v {
                    Value::Number(x, true) => Ok(*x as i64),
                    other => Err(Self::type_error(key, entry.0, "a list of integers", other)),
                })
                .collect(),
            v => Err(Self::type_error(
                key,
                entry.0,
                "an integer or list of integers",
                v,
            )),
        }
    }
}

fn broadcast<T: Clone>(values: Vec<T>, dim: usize, key: &str, line: usize) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); dim]),
        n if n == dim => Ok(values),
        n => Err(Entries::err(
            line,
            format!("'{key}' has {n} entries for dimension {dim}"),
        )),
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Entries::err(line, "expected 'key = value'"))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Entries::err(line, format!("unknown key '{key}'")));
        }
        let value = parse_value(value).map_err(|m| Entries::err(line, m))?;
        if map.insert(key.to_string(), (line, value)).is_some() {
            return Err(Entries::err(line, format!("duplicate key '{key}'")));
        }
    }
    let e = Entries { map };

    let epsilon_entry = e.required("epsilon")?;
    let epsilon = Entries::number("epsilon", epsilon_entry)?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Entries::err(epsilon_entry.0, "ε must lie in (0, 1]"));
    }
    let mean_density = Entries::number("mean_density", e.required("mean_density")?)?;

    let length_entry = e.required("length")?;
    let lengths = Entries::numbers("length", length_entry)?;
    let elements_entry = e.required("elements")?;
    let elements: Vec<usize> = Entries::integers("elements", elements_entry)?
        .into_iter()
        .map(|m| {
            usize::try_from(m).map_err(|_| Entries::err(elements_entry.0, "'elements' must be positive"))
        })
        .collect::<Result<_>>()?;
    let dim = match e.get("dim") {
        Some(entry) => {
            let d = Entries::count("dim", entry)?;
            if !(1..=3).contains(&d) {
                return Err(Entries::err(entry.0, "'dim' must be 1, 2 or 3"));
            }
            d
        }
        // a bracketed list states the dimension; two scalars mean 2D
        None => {
            let is_list = |v: &Value| matches!(v, Value::List(_));
            if is_list(&length_entry.1) || is_list(&elements_entry.1) {
                lengths.len().max(elements.len())
            } else {
                2
            }
        }
    };
    let lengths = broadcast(lengths, dim, "length", length_entry.0)?;
    let elements = broadcast(elements, dim, "elements", elements_entry.0)?;
    if lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Entries::err(length_entry.0, "lengths must be positive"));
    }

    let mut params = ModelParams::new(epsilon, mean_density, lengths, elements);
    if let Some(entry) = e.get("degree") {
        params.degree = Entries::count("degree", entry)?;
        if params.degree < 2 {
            return Err(Entries::err(entry.0, "'degree' must be at least 2"));
        }
    }
    params.quad_points = params.degree + 1;
    if let Some(entry) = e.get("quad_points") {
        params.quad_points = Entries::count("quad_points", entry)?;
        if !(1..=10).contains(&params.quad_points) {
            return Err(Entries::err(entry.0, "'quad_points' must be between 1 and 10"));
        }
    }
    if params.elements.iter().any(|&m| m <= params.degree) {
        return Err(Entries::err(
            elements_entry.0,
            "every direction needs more elements than the degree",
        ));
    }
    let dt_entry = e.required("dt")?;
    params.dt = Entries::number("dt", dt_entry)?;
    if !(params.dt > 0.0 && params.dt.is_finite()) {
        return Err(Entries::err(dt_entry.0, "'dt' must be positive"));
    }
    let t_entry = e.required("final_time")?;
    params.final_time = Entries::number("final_time", t_entry)?;
    if !(params.final_time >= 0.0 && params.final_time.is_finite()) {
        return Err(Entries::err(t_entry.0, "'final_time' must be non-negative"));
    }
    if let Some(entry) = e.get("scheme") {
        let s = Entries::text("scheme", entry)?;
        params.scheme =
            SchemeOrder::parse(s).ok_or_else(|| Entries::err(entry.0, format!("unknown scheme '{s}'")))?;
    }
    for (key, slot) in [
        ("newton_tol", &mut params.newton_tol),
        ("linear_tol", &mut params.linear_tol),
    ] {
        if let Some(entry) = e.get(key) {
            *slot = Entries::number(key, entry)?;
            if !(*slot > 0.0) {
                return Err(Entries::err(entry.0, format!("'{key}' must be positive")));
            }
        }
    }
    if let Some(entry) = e.get("newton_max_iter") {
        params.newton_max_iter = Entries::count("newton_max_iter", entry)?;
        if params.newton_max_iter == 0 {
            return Err(Entries::err(entry.0, "'newton_max_iter' must be positive"));
        }
    }
    if let Some(entry) = e.get("linear_solver") {
        let s = Entries::text("linear_solver", entry)?;
        params.linear_solver = LinearSolverKind::parse(s)
            .ok_or_else(|| Entries::err(entry.0, format!("unknown linear solver '{s}'")))?;
    }
    params
        .validate()
        .map_err(|err| Entries::err(e.line("epsilon"), err.to_string()))?;

    let initial = parse_initial(&e, &params)?;

    let snapshot_stride = match e.get("snapshot_stride") {
        Some(entry) => Entries::count("snapshot_stride", entry)?,
        None => 0,
    };
    let output_dir = match e.get("output_dir") {
        Some(entry) => Entries::text("output_dir", entry)?.to_string(),
        None => "output".to_string(),
    };
    let output_formats = match e.get("output_formats") {
        Some(entry) => {
            let items = match &entry.1 {
                Value::Text(_) => std::slice::from_ref(&entry.1),
                _ => Entries::list("output_formats", entry)?,
            };
            items
                .iter()
                .map(|v| match v {
                    Value::Text(s) => SnapshotFormat::parse(s)
                        .ok_or_else(|| Entries::err(entry.0, format!("unknown snapshot format '{s}'"))),
                    other => Err(Entries::type_error(
                        "output_formats",
                        entry.0,
                        "a list of strings",
                        other,
                    )),
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => vec![SnapshotFormat::VtkStructured],
    };
    let mode = match e.get("mode") {
        Some(entry) => match Entries::text("mode", entry)? {
            "test" => RunMode::Test,
            "production" => RunMode::Production,
            other => return Err(Entries::err(entry.0, format!("unknown mode '{other}'"))),
        },
        None => RunMode::Production,
    };

    Ok(SimulationConfig {
        params,
        initial,
        snapshot_stride,
        output_dir,
        output_formats,
        mode,
    })
}

fn parse_initial(e: &Entries, params: &ModelParams) -> Result<InitialCondition> {
    let entry = e.required("ic")?;
    let kind = Entries::text("ic", entry)?;
    let dim = params.dim();
    let mean = params.mean_density;
    let amplitude = match e.get("ic_amplitude") {
        Some(a) => Entries::number("ic_amplitude", a)?,
        None => 0.0,
    };
    match kind {
        "constant_noise" => {
            let seed = match e.get("ic_seed") {
                Some(s) => u64::try_from(Entries::integer("ic_seed", s)?)
                    .map_err(|_| Entries::err(s.0, "'ic_seed' must be non-negative"))?,
                None => 0,
            };
            Ok(InitialCondition::ConstantNoise {
                mean,
                amplitude,
                seed,
            })
        }
        "single_mode" => {
            let k_index = match e.get("ic_k") {
                Some(k) => {
                    let v = Entries::integers("ic_k", k)?;
                    if v.len() != dim {
                        return Err(Entries::err(k.0, format!("'ic_k' needs {dim} entries")));
                    }
                    v
                }
                None => {
                    let mut v = vec![0; dim];
                    v[0] = 1;
                    v
                }
            };
            Ok(InitialCondition::SingleMode {
                mean,
                k_index,
                amplitude,
            })
        }
        "hex_seeds" => {
            let centers_entry = e.required("ic_centers")?;
            let centers = Entries::list("ic_centers", centers_entry)?
                .iter()
                .map(|c| {
                    let coords = Entries::numbers("ic_centers", &(centers_entry.0, c.clone()))?;
                    if coords.len() != dim {
                        return Err(Entries::err(
                            centers_entry.0,
                            format!("each seed center needs {dim} coordinates"),
                        ));
                    }
                    Ok(coords)
                })
                .collect::<Result<Vec<_>>>()?;
            let angles = match e.get("ic_angles") {
                Some(a) => {
                    let v = Entries::numbers("ic_angles", a)?;
                    if v.len() != centers.len() {
                        return Err(Entries::err(a.0, "'ic_angles' needs one angle per seed"));
                    }
                    v
                }
                None => vec![0.0; centers.len()],
            };
            let r_entry = e.required("ic_radius")?;
            let radius = Entries::number("ic_radius", r_entry)?;
            if !(radius > 0.0) {
                return Err(Entries::err(r_entry.0, "'ic_radius' must be positive"));
            }
            let seeds = centers
                .into_iter()
                .zip(angles)
                .map(|(center, angle)| HexSeed { center, angle })
                .collect();
            Ok(InitialCondition::HexSeeds {
                mean,
                seeds,
                radius,
                amplitude,
            })
        }
        other => Err(Entries::err(
            entry.0,
            format!("unknown initial condition '{other}'"),
        )),
    }
}

pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn list<T: std::fmt::Debug>(items: &[T]) -> String {
    let parts: Vec<String> = items.iter().map(|v| format!("{v:?}")).collect();
    format!("[{}]", parts.join(", "))
}

impl SimulationConfig {
    /// Serializes to the configuration grammar; `parse_config` inverts it.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "epsilon = {:?}", p.epsilon);
        let _ = writeln!(s, "mean_density = {:?}", p.mean_density);
        let _ = writeln!(s, "dim = {}", p.dim());
        let _ = writeln!(s, "length = {}", list(&p.lengths));
        let _ = writeln!(s, "elements = {}", list(&p.elements));
        let _ = writeln!(s, "degree = {}", p.degree);
        let _ = writeln!(s, "quad_points = {}", p.quad_points);
        let _ = writeln!(s, "dt = {:?}", p.dt);
        let _ = writeln!(s, "final_time = {:?}", p.final_time);
        let _ = writeln!(s, "scheme = {}", p.scheme.name());
        let _ = writeln!(s, "newton_tol = {:?}", p.newton_tol);
        let _ = writeln!(s, "newton_max_iter = {}", p.newton_max_iter);
        let _ = writeln!(s, "linear_tol = {:?}", p.linear_tol);
        let _ = writeln!(s, "linear_solver = {}", p.linear_solver.name());
        match &self.initial {
            InitialCondition::ConstantNoise { amplitude, seed, .. } => {
                let _ = writeln!(s, "ic = constant_noise");
                let _ = writeln!(s, "ic_amplitude = {amplitude:?}");
                let _ = writeln!(s, "ic_seed = {seed}");
            }
            InitialCondition::SingleMode {
                k_index, amplitude, ..
            } => {
                let _ = writeln!(s, "ic = single_mode");
                let _ = writeln!(s, "ic_amplitude = {amplitude:?}");
                let _ = writeln!(s, "ic_k = {}", list(k_index));
            }
            InitialCondition::HexSeeds {
                seeds,
                radius,
                amplitude,
                ..
            } => {
                let _ = writeln!(s, "ic = hex_seeds");
                let _ = writeln!(s, "ic_amplitude = {amplitude:?}");
                let centers: Vec<String> = seeds.iter().map(|sd| list(&sd.center)).collect();
                let _ = writeln!(s, "ic_centers = [{}]", centers.join(", "));
                let angles: Vec<f64> = seeds.iter().map(|sd| sd.angle).collect();
                let _ = writeln!(s, "ic_angles = {}", list(&angles));
                let _ = writeln!(s, "ic_radius = {radius:?}");
            }
        }
        let _ = writeln!(s, "snapshot_stride = {}", self.snapshot_stride);
        let _ = writeln!(s, "output_dir = \"{}\"", self.output_dir);
        let formats: Vec<&str> = self.output_formats.iter().map(|f| f.name()).collect();
        let _ = writeln!(s, "output_formats = [{}]", formats.join(", "));
        let _ = writeln!(s, "mode = {}", self.mode.name());
        s
    }
}
