//! Strict JSON run configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stochwave::identities::random_closure_function;
use stochwave::{
    Axis, Grid, GridFunction, ProblemData, SchemeCoefficients, SourceMode, SpaceTag, TimeTag, WeightParams,
};

/// A configuration problem tied to a JSON-pointer location.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    pub fn at(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "config error at {at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
}

/// Weight parameters without `T`, which comes from the grid, plus `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSpec {
    pub s: f64,
    pub lambda: f64,
    pub beta: f64,
    pub xstar: f64,
    pub mconst: f64,
    pub epsilon: f64,
    pub dt_multiplier: f64,
    pub kappa: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec {
            s: 1.0,
            lambda: 1.0,
            beta: 0.5,
            xstar: 1.5,
            mconst: 1.0,
            epsilon: 1.0,
            dt_multiplier: 1.0,
            kappa: 0.0,
        }
    }
}

impl WeightSpec {
    pub fn params(&self, t_final: f64) -> WeightParams {
        WeightParams {
            s: self.s,
            lambda: self.lambda,
            beta: self.beta,
            xstar: self.xstar,
            mconst: self.mconst,
            t_final,
            epsilon: self.epsilon,
            dt_multiplier: self.dt_multiplier,
        }
    }

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "s" => &mut self.s,
            "lambda" => &mut self.lambda,
            "beta" => &mut self.beta,
            "xstar" => &mut self.xstar,
            "mconst" => &mut self.mconst,
            "epsilon" => &mut self.epsilon,
            "dt_multiplier" => &mut self.dt_multiplier,
            "kappa" => &mut self.kappa,
            _ => return None,
        })
    }

    /// Copy with one named scalar replaced.
    pub fn with(&self, name: &str, value: f64) -> Option<WeightSpec> {
        let mut w = self.clone();
        *w.slot(name)? = value;
        Some(w)
    }
}

/// Names accepted by `sweep.parameter`.
pub const SWEEP_PARAMETERS: [&str; 8] = [
    "s",
    "lambda",
    "beta",
    "xstar",
    "mconst",
    "epsilon",
    "dt_multiplier",
    "kappa",
];

/// Named coefficient fields.
pub const PRESETS: [&str; 4] = ["zero", "one", "sine_x", "decay_t"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant(f64),
    Preset(String),
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec::Constant(0.0)
    }
}

impl CoefficientSpec {
    fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            CoefficientSpec::Constant(c) => *c,
            CoefficientSpec::Preset(p) => match p.as_str() {
                "zero" => 0.0,
                "one" => 1.0,
                "sine_x" => (PI * x).sin(),
                "decay_t" => (-t).exp(),
                _ => unreachable!("presets are checked in validate"),
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientsSpec {
    pub a: CoefficientSpec,
    pub b: CoefficientSpec,
    pub c: CoefficientSpec,
    pub d: CoefficientSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sine {
    pub mode: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Random {
    pub seed: u64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    Sine(Sine),
    Random(Random),
}

impl FieldSpec {
    fn is_zero(&self) -> bool {
        matches!(self, FieldSpec::Zero)
    }

    /// Fills `target` node by node; values on the spatial boundary are zeroed.
    fn fill(&self, target: &mut GridFunction) {
        let grid = *target.grid();
        let (space, time) = (target.space(), target.time());
        let noise = match self {
            FieldSpec::Random(r) => Some(random_closure_function(&grid, r.seed)),
            _ => None,
        };
        let last = grid.m() as i64 + 1;
        for n in time.indices() {
            for j in space.indices() {
                let v = if j == 0 || j == last {
                    0.0
                } else {
                    match self {
                        FieldSpec::Zero => 0.0,
                        FieldSpec::Sine(s) => s.amplitude * (s.mode as f64 * PI * grid.x(j)).sin(),
                        FieldSpec::Random(r) => r.amplitude * noise.as_ref().expect("drawn above").at(j, n),
                    }
                };
                target.set(j, n, v);
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub y0: FieldSpec,
    pub y1: FieldSpec,
    pub g: FieldSpec,
    pub f: FieldSpec,
}

impl DataSpec {
    pub fn build(&self, grid: &Grid, mode: SourceMode) -> ProblemData {
        let mut d = ProblemData::zeros(grid, mode);
        self.y0.fill(&mut d.y0);
        self.y1.fill(&mut d.y1);
        self.g.fill(&mut d.g);
        if !self.f.is_zero() {
            let mut f = GridFunction::zeros(
                *grid,
                grid.space_axis(SpaceTag::Primal),
                grid.time_axis(TimeTag::Primal),
            );
            self.f.fill(&mut f);
            d.f = Some(f);
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub paths: usize,
    pub master_seed: u64,
}

impl Default for McSpec {
    fn default() -> Self {
        McSpec {
            paths: 1,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Second ensemble of a stability run. It shares grid, coefficients and
/// source mode; its seed defaults to the first ensemble's.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairSpec {
    pub data: DataSpec,
    pub master_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(default)]
    pub weight: WeightSpec,
    #[serde(default)]
    pub coefficients: CoefficientsSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub g_mode: SourceMode,
    #[serde(default)]
    pub mc: McSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub pair: Option<PairSpec>,
    /// Refinement levels for order estimates.
    #[serde(default = "default_levels")]
    pub order_levels: usize,
    /// Exit with the admissibility code when the weight regime is violated.
    #[serde(default)]
    pub strict_admissibility: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_levels() -> usize {
    4
}

fn default_output_dir() -> String {
    "out".into()
}

fn escape(seg: &str) -> String {
    seg.replace('~', "~0").replace('/', "~1")
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", escape(key))),
            Segment::Enum { variant } => out.push_str(&format!("/{}", escape(variant))),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

/// Name in backticks following `prefix`, as serde formats field errors.
fn quoted_after<'a>(msg: &'a str, prefix: &str) -> Option<&'a str> {
    let rest = msg.strip_prefix(prefix)?.strip_prefix('`')?;
    rest.split('`').next()
}

/// Parses and validates a configuration document.
pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut at = pointer(e.path());
        let inner = e.inner();
        let msg = inner.to_string();
        if inner.is_syntax() || inner.is_eof() {
            return ConfigError::at("", format!("malformed JSON: {msg}"));
        }
        // serde reports missing fields at the enclosing object
        if let Some(key) = quoted_after(&msg, "missing field ") {
            at.push('/');
            at.push_str(&escape(key));
        }
        let msg = match msg.rfind(" at line ") {
            Some(i) => msg[..i].to_string(),
            None => msg,
        };
        ConfigError::at(at, msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<(RunConfig, Vec<u8>), ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError::at("", format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| ConfigError::at("", format!("not UTF-8: {e}")))?;
    let cfg = parse_str(text)?;
    Ok((cfg, bytes))
}

fn weight_pointer(field: &str) -> String {
    match field {
        "T" => "/grid/T".into(),
        f => format!("/weight/{f}"),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let grid = self.grid()?;
        if self.mc.paths == 0 {
            return Err(ConfigError::at("/mc/paths", "must be at least 1"));
        }
        self.weight.params(grid.t_final()).validate().map_err(|e| match e {
            stochwave::Error::InvalidArgument { field, reason } => ConfigError::at(weight_pointer(&field), reason),
            e => ConfigError::at("/weight", e.to_string()),
        })?;
        if !self.weight.kappa.is_finite() {
            return Err(ConfigError::at("/weight/kappa", "must be finite"));
        }
        let coeffs = [
            ("a", &self.coefficients.a),
            ("b", &self.coefficients.b),
            ("c", &self.coefficients.c),
            ("d", &self.coefficients.d),
        ];
        for (name, spec) in coeffs {
            match spec {
                CoefficientSpec::Preset(p) if !PRESETS.contains(&p.as_str()) => {
                    return Err(ConfigError::at(
                        format!("/coefficients/{name}/preset"),
                        format!("unknown preset `{p}`, expected one of {}", PRESETS.join(", ")),
                    ));
                }
                CoefficientSpec::Constant(v) if !v.is_finite() => {
                    return Err(ConfigError::at(
                        format!("/coefficients/{name}/constant"),
                        "must be finite",
                    ));
                }
                _ => {}
            }
        }
        validate_data(&self.data, "/data")?;
        if let Some(p) = &self.pair {
            validate_data(&p.data, "/pair/data")?;
        }
        if let Some(sw) = &self.sweep {
            if !SWEEP_PARAMETERS.contains(&sw.parameter.as_str()) {
                return Err(ConfigError::at(
                    "/sweep/parameter",
                    format!(
                        "`{}` is not a configured scalar, expected one of {}",
                        sw.parameter,
                        SWEEP_PARAMETERS.join(", ")
                    ),
                ));
            }
            if sw.values.is_empty() {
                return Err(ConfigError::at("/sweep/values", "must not be empty"));
            }
            for (i, v) in sw.values.iter().enumerate() {
                let w = self.weight.with(&sw.parameter, *v).expect("name checked");
                if let Err(e) = w.params(grid.t_final()).validate() {
                    return Err(ConfigError::at(format!("/sweep/values/{i}"), e.to_string()));
                }
                if !v.is_finite() {
                    return Err(ConfigError::at(format!("/sweep/values/{i}"), "must be finite"));
                }
            }
        }
        if self.order_levels < 3 {
            return Err(ConfigError::at("/order_levels", "need at least 3 levels"));
        }
        if self.output_dir.is_empty() {
            return Err(ConfigError::at("/output_dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.grid.m, self.grid.n, self.grid.t).map_err(|e| match e {
            stochwave::Error::InvalidArgument { field, reason } => {
                let key = match field.as_str() {
                    "m" | "M" => "M",
                    "n" | "N" => "N",
                    _ => "T",
                };
                ConfigError::at(format!("/grid/{key}"), reason)
            }
            e => ConfigError::at("/grid", e.to_string()),
        })
    }

    pub fn params(&self) -> WeightParams {
        self.weight.params(self.grid.t)
    }

    pub fn coefficients(&self, grid: &Grid) -> SchemeCoefficients {
        let space = grid.space_axis(SpaceTag::Closure);
        let time = Axis::primal(0, grid.n() as i64);
        let field = |c: &CoefficientSpec| GridFunction::from_fn(*grid, space, time, |x, t| c.eval(x, t));
        SchemeCoefficients {
            a: field(&self.coefficients.a),
            b: field(&self.coefficients.b),
            c: field(&self.coefficients.c),
            d: field(&self.coefficients.d),
        }
    }

    /// Config fields overridden from the command line, in a fixed order.
    pub fn apply_overrides(
        &mut self,
        paths: Option<usize>,
        seed: Option<u64>,
        output_dir: Option<&str>,
    ) -> BTreeMap<&'static str, String> {
        let mut applied = BTreeMap::new();
        if let Some(p) = paths {
            self.mc.paths = p;
            applied.insert("paths", p.to_string());
        }
        if let Some(s) = seed {
            self.mc.master_seed = s;
            applied.insert("seed", s.to_string());
        }
        if let Some(d) = output_dir {
            self.output_dir = d.to_string();
        }
        applied
    }
}

fn validate_data(d: &DataSpec, base: &str) -> Result<(), ConfigError> {
    for (name, spec) in [("y0", &d.y0), ("y1", &d.y1), ("g", &d.g), ("f", &d.f)] {
        let bad = match spec {
            FieldSpec::Zero => None,
            FieldSpec::Sine(s) if !s.amplitude.is_finite() => Some("sine/amplitude"),
            FieldSpec::Random(r) if !r.amplitude.is_finite() => Some("random/amplitude"),
            _ => None,
        };
        if let Some(at) = bad {
            return Err(ConfigError::at(format!("{base}/{name}/{at}"), "must be finite"));
        }
    }
    Ok(())
}
