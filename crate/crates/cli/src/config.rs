//! Run configuration: `[section]` headers followed by `key = value` lines.
//!
//! Values are numbers (real or complex, e.g. `0.5`, `-2i`, `1e-3+0.2i`),
//! booleans, double-quoted strings, or bracketed lists of values; a matrix is
//! a list of rows. `#` starts a comment. `[environment]` may be repeated.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use adelim_core::instances::{decoupled_model, random_model, RandomModelSpec};
use adelim_core::lindblad::{Jump, Lindbladian};
use adelim_core::qops::{Operator, C64};
use adelim_core::reduce::{CompositeModel, FastSubsystem, Gauge};
use adelim_core::tlsbath::{self, SweepGrid, TlsBathParams};
use adelim_core::verify::DEFAULT_DIMENSION_CAP;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] unknown key `{key}`")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("[{section}] missing key `{key}`")]
    Missing { section: String, key: String },
    #[error("[{section}] `{key}`: {msg}")]
    Invalid { section: String, key: String, msg: String },
    #[error("{0}")]
    Model(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(C64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
}

#[derive(Debug, Clone, Default)]
struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, (usize, Value)>,
}

fn parse_scalar(text: &str, line: usize) -> Result<Value, ConfigError> {
    let t = text.trim();
    match t {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        _ => {}
    }
    if let Some(s) = t.strip_prefix('"') {
        return s
            .strip_suffix('"')
            .map(|s| Value::Str(s.to_string()))
            .ok_or_else(|| ConfigError::Syntax { line, msg: format!("unterminated string {t}") });
    }
    let compact: String = t.chars().filter(|c| !c.is_whitespace()).collect();
    C64::from_str(&compact)
        .map(Value::Number)
        .map_err(|_| ConfigError::Syntax { line, msg: format!("cannot parse value `{t}`") })
}

fn parse_value(text: &str, line: usize) -> Result<Value, ConfigError> {
    let t = text.trim();
    if !t.starts_with('[') {
        return parse_scalar(t, line);
    }
    let inner = t
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| ConfigError::Syntax { line, msg: format!("unbalanced brackets in `{t}`") })?;
    let mut items = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in inner.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth < 0 {
                    return Err(ConfigError::Syntax { line, msg: format!("unbalanced brackets in `{t}`") });
                }
            }
            ',' if depth == 0 => {
                items.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(ConfigError::Syntax { line, msg: format!("unbalanced brackets in `{t}`") });
    }
    items.push(&inner[start..]);
    // Allow `[]` and a trailing comma.
    if items.last().is_some_and(|s| s.trim().is_empty()) {
        items.pop();
    }
    items.into_iter().map(|s| parse_value(s, line)).collect::<Result<_, _>>().map(Value::List)
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    // Continuation lines let long matrices span several lines until brackets balance.
    let mut pending: Option<(usize, String, String)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw).trim();
        if let Some((l0, key, mut acc)) = pending.take() {
            acc.push(' ');
            acc.push_str(content);
            if brackets_balanced(&acc) {
                insert(&mut sections, l0, key, &acc)?;
            } else {
                pending = Some((l0, key, acc));
            }
            continue;
        }
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if name.is_empty() || name.contains(['[', ']']) {
                return Err(ConfigError::Syntax { line, msg: format!("bad section header `{content}`") });
            }
            sections.push(Section { name: name.to_string(), line, entries: BTreeMap::new() });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, msg: format!("expected `key = value`, got `{content}`") })?;
        let key = key.trim().to_string();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ConfigError::Syntax { line, msg: format!("bad key `{key}`") });
        }
        let value = value.trim().to_string();
        if brackets_balanced(&value) {
            insert(&mut sections, line, key, &value)?;
        } else {
            pending = Some((line, key, value));
        }
    }
    if let Some((line, key, _)) = pending {
        return Err(ConfigError::Syntax { line, msg: format!("unterminated list for `{key}`") });
    }
    Ok(sections)
}

fn brackets_balanced(s: &str) -> bool {
    s.chars().filter(|&c| c == '[').count() <= s.chars().filter(|&c| c == ']').count()
}

fn insert(sections: &mut [Section], line: usize, key: String, value: &str) -> Result<(), ConfigError> {
    let section = sections
        .last_mut()
        .ok_or_else(|| ConfigError::Syntax { line, msg: "key before any section header".into() })?;
    let v = parse_value(value, line)?;
    if section.entries.insert(key.clone(), (line, v)).is_some() {
        return Err(ConfigError::Syntax { line, msg: format!("duplicate key `{key}`") });
    }
    Ok(())
}

/// Typed access that records which keys were read, so leftovers can be rejected.
struct Reader<'a> {
    section: &'a Section,
    used: std::cell::RefCell<Vec<String>>,
}

impl<'a> Reader<'a> {
    fn new(section: &'a Section) -> Self {
        Self { section, used: Default::default() }
    }

    fn invalid(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { section: self.section.name.clone(), key: key.into(), msg: msg.into() }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.used.borrow_mut().push(key.to_string());
        self.section.entries.get(key).map(|(_, v)| v)
    }

    fn require(&self, key: &str) -> Result<&'a Value, ConfigError> {
        self.get(key)
            .ok_or_else(|| ConfigError::Missing { section: self.section.name.clone(), key: key.into() })
    }

    fn real_of(&self, key: &str, v: &Value) -> Result<f64, ConfigError> {
        match v {
            Value::Number(z) if z.im == 0.0 && z.re.is_finite() => Ok(z.re),
            _ => Err(self.invalid(key, "expected a real number")),
        }
    }

    fn real(&self, key: &str) -> Result<f64, ConfigError> {
        self.real_of(key, self.require(key)?)
    }

    fn real_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.get(key).map_or(Ok(default), |v| self.real_of(key, v))
    }

    fn uint_of(&self, key: &str, v: &Value) -> Result<u64, ConfigError> {
        let x = self.real_of(key, v)?;
        if x < 0.0 || x.fract() != 0.0 || x > u64::MAX as f64 {
            return Err(self.invalid(key, "expected a nonnegative integer"));
        }
        Ok(x as u64)
    }

    fn uint(&self, key: &str) -> Result<u64, ConfigError> {
        self.uint_of(key, self.require(key)?)
    }

    fn uint_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        self.get(key).map_or(Ok(default), |v| self.uint_of(key, v))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Bool(b)) => Ok(*b),
            Some(_) => Err(self.invalid(key, "expected true or false")),
        }
    }

    fn string_opt(&self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Str(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.invalid(key, "expected a quoted string")),
        }
    }

    fn reals_or(&self, key: &str, default: Vec<f64>) -> Result<Vec<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::List(items)) => items.iter().map(|v| self.real_of(key, v)).collect(),
            Some(v) => Ok(vec![self.real_of(key, v)?]),
        }
    }

    fn reals(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.require(key)?;
        self.reals_or(key, Vec::new())
    }

    fn matrix_of(&self, key: &str, v: &Value) -> Result<Operator, ConfigError> {
        let rows = match v {
            Value::List(rows) if !rows.is_empty() => rows,
            _ => return Err(self.invalid(key, "expected a matrix `[[..], ..]`")),
        };
        let n = rows.len();
        let mut m = Operator::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            let row = match row {
                Value::List(r) if r.len() == n => r,
                _ => return Err(self.invalid(key, format!("row {i} must have {n} entries (square matrix)"))),
            };
            for (j, x) in row.iter().enumerate() {
                m[(i, j)] = match x {
                    Value::Number(z) => *z,
                    _ => return Err(self.invalid(key, "matrix entries must be numbers")),
                };
            }
        }
        Ok(m)
    }

    fn matrix(&self, key: &str) -> Result<Operator, ConfigError> {
        self.matrix_of(key, self.require(key)?)
    }

    fn matrices_or_empty(&self, key: &str) -> Result<Vec<Operator>, ConfigError> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(Value::List(items)) => items.iter().map(|v| self.matrix_of(key, v)).collect(),
            Some(_) => Err(self.invalid(key, "expected a list of matrices")),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        for key in self.section.entries.keys() {
            if !used.iter().any(|u| u == key) {
                return Err(ConfigError::UnknownKey { section: self.section.name.clone(), key: key.clone() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub hamiltonian: Operator,
    pub coupling: Operator,
    pub jumps: Vec<Operator>,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub b: Operator,
    pub h_tilde: Operator,
    pub hamiltonian: Option<Operator>,
    pub jumps: Vec<Operator>,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Generic { epsilon: f64, environments: Vec<EnvironmentSpec>, target: TargetSpec },
    TlsBath(TlsBathParams),
    Random { spec: RandomModelSpec },
    Decoupled { dim_b: usize, epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub residual: [f64; 3],
    pub min_exponent: [f64; 2],
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { residual: [1e-13, 1e-10, 1e-9], min_exponent: [1.8, 2.7] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub grid: SweepGrid,
    /// Grid points `(i_Δc, i_ṽ)` re-evaluated with numeric solves.
    pub cross_check: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSpec {
    pub horizon: Option<f64>,
    pub steps: usize,
    pub initial_level: usize,
    pub off_manifold: bool,
    pub dimension_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    pub order: usize,
    pub gauge: Gauge,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub out: PathBuf,
    pub tolerances: Tolerances,
    pub sweep: Option<SweepSpec>,
    pub simulate: SimulateSpec,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub order: Option<usize>,
    pub gauge: Option<Gauge>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn environment(r: &Reader) -> Result<EnvironmentSpec, ConfigError> {
    let hamiltonian = r.matrix("hamiltonian")?;
    let coupling = r.matrix("coupling")?;
    let jumps = r.matrices_or_empty("jumps")?;
    let rates = r.reals_or("rates", vec![1.0; jumps.len()])?;
    if rates.len() != jumps.len() {
        return Err(r.invalid("rates", format!("{} rates for {} jumps", rates.len(), jumps.len())));
    }
    Ok(EnvironmentSpec { hamiltonian, coupling, jumps, rates })
}

fn target(r: &Reader) -> Result<TargetSpec, ConfigError> {
    let b = r.matrix("b")?;
    let h_tilde = r.matrix("h_tilde")?;
    let hamiltonian = match r.get("hamiltonian") {
        Some(v) => Some(r.matrix_of("hamiltonian", v)?),
        None => None,
    };
    let jumps = r.matrices_or_empty("jumps")?;
    let rates = r.reals_or("rates", vec![1.0; jumps.len()])?;
    if rates.len() != jumps.len() {
        return Err(r.invalid("rates", format!("{} rates for {} jumps", rates.len(), jumps.len())));
    }
    Ok(TargetSpec { b, h_tilde, hamiltonian, jumps, rates })
}

fn positive(r: &Reader, key: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(r.invalid(key, "must be positive"))
    }
}

fn model_section(r: &Reader, env: &[&Section], tgt: Option<&Section>) -> Result<ModelSpec, ConfigError> {
    let kind = r.string_opt("kind")?.ok_or_else(|| ConfigError::Missing { section: "model".into(), key: "kind".into() })?;
    let generic_only = |what: &str| ConfigError::Model(format!("[{what}] sections are only valid with kind = \"generic\""));
    if kind != "generic" {
        if !env.is_empty() {
            return Err(generic_only("environment"));
        }
        if tgt.is_some() {
            return Err(generic_only("target"));
        }
    }
    match kind.as_str() {
        "generic" => {
            let epsilon = r.real("epsilon")?;
            if env.is_empty() {
                return Err(ConfigError::Model("kind = \"generic\" needs at least one [environment] section".into()));
            }
            let environments = env
                .iter()
                .map(|s| {
                    let er = Reader::new(s);
                    let e = environment(&er)?;
                    er.finish()?;
                    Ok(e)
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            let ts = tgt.ok_or_else(|| ConfigError::Model("kind = \"generic\" needs a [target] section".into()))?;
            let tr = Reader::new(ts);
            let target = target(&tr)?;
            tr.finish()?;
            Ok(ModelSpec::Generic { epsilon, environments, target })
        }
        "tlsbath" => {
            let p = TlsBathParams {
                g: positive(r, "g", r.real("g")?)?,
                gamma_minus: positive(r, "gamma_minus", r.real("gamma_minus")?)?,
                delta_c: r.real("delta_c")?,
                delta_q: r.reals("delta_q")?,
                v_tilde: r.real_or("v_tilde", 0.0)?,
                fock_dim: r.uint_or("fock_dim", 3)? as usize,
            };
            p.validate().map_err(|e| ConfigError::Model(e.to_string()))?;
            Ok(ModelSpec::TlsBath(p))
        }
        "random" => {
            let d = RandomModelSpec::default();
            let spec = RandomModelSpec {
                num_fast: r.uint_or("num_fast", d.num_fast as u64)? as usize,
                dim_a: r.uint_or("dim_a", d.dim_a as u64)? as usize,
                dim_b: r.uint_or("dim_b", d.dim_b as u64)? as usize,
                target_generator: r.bool_or("target_generator", d.target_generator)?,
                epsilon: r.real_or("epsilon", d.epsilon)?,
            };
            if spec.num_fast == 0 || spec.dim_a < 2 || spec.dim_b < 2 {
                return Err(ConfigError::Model("random model needs num_fast >= 1, dim_a >= 2, dim_b >= 2".into()));
            }
            Ok(ModelSpec::Random { spec })
        }
        "decoupled" => Ok(ModelSpec::Decoupled {
            dim_b: r.uint_or("dim_b", 3)? as usize,
            epsilon: r.real_or("epsilon", 0.05)?,
        }),
        other => Err(r.invalid("kind", format!("unknown model kind `{other}` (generic, tlsbath, random, decoupled)"))),
    }
}

fn sweep_section(r: &Reader) -> Result<SweepSpec, ConfigError> {
    let axis = |prefix: &str| -> Result<Vec<f64>, ConfigError> {
        let lo = r.real(&format!("{prefix}_min"))?;
        let hi = r.real(&format!("{prefix}_max"))?;
        let n = r.uint(&format!("{prefix}_points"))? as usize;
        if n == 0 {
            return Err(r.invalid(&format!("{prefix}_points"), "must be at least 1"));
        }
        Ok(tlsbath::uniform_grid(lo, hi, n))
    };
    let delta_c = axis("delta_c")?;
    let v_tilde = axis("v_tilde")?;
    let num_tls = r.uint("num_tls")? as usize;
    if num_tls == 0 {
        return Err(r.invalid("num_tls", "must be at least 1"));
    }
    let delta_q = tlsbath::uniform_grid(r.real("delta_q_min")?, r.real("delta_q_max")?, num_tls);
    let grid = SweepGrid {
        g: positive(r, "g", r.real("g")?)?,
        gamma_minus: positive(r, "gamma_minus", r.real("gamma_minus")?)?,
        delta_c,
        v_tilde,
        delta_q,
    };
    if grid.delta_c.contains(&0.0) {
        return Err(r.invalid("delta_c_min", "the Δ_c grid contains 0, where the model is undefined"));
    }
    if grid.v_tilde.iter().any(|&v| v < 0.0) {
        return Err(r.invalid("v_tilde_min", "ṽ must be nonnegative"));
    }
    Ok(SweepSpec { grid, cross_check: r.uint_or("cross_check", 4)? as usize })
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, ConfigError> {
        let sections = parse_sections(text)?;
        let mut model = None;
        let mut run = None;
        let mut verify = None;
        let mut sweep = None;
        let mut simulate = None;
        let mut envs = Vec::new();
        let mut target = None;
        for s in &sections {
            let slot = match s.name.as_str() {
                "model" => &mut model,
                "run" => &mut run,
                "verify" => &mut verify,
                "sweep" => &mut sweep,
                "simulate" => &mut simulate,
                "target" => &mut target,
                "environment" => {
                    envs.push(s);
                    continue;
                }
                other => return Err(ConfigError::UnknownSection(other.to_string())),
            };
            if slot.replace(s).is_some() {
                return Err(ConfigError::Syntax { line: s.line, msg: format!("section [{}] given twice", s.name) });
            }
        }
        let empty = Section::default();

        let rr = Reader::new(run.unwrap_or(&empty));
        let order = overrides.order.unwrap_or(rr.uint_or("order", 1)? as usize);
        if order > 2 {
            return Err(ConfigError::Invalid { section: "run".into(), key: "order".into(), msg: "must be 0, 1 or 2".into() });
        }
        let gauge = match (overrides.gauge, rr.string_opt("gauge")?) {
            (Some(g), _) => g,
            (None, Some(s)) => s.parse().map_err(|e: String| rr.invalid("gauge", e))?,
            (None, None) => Gauge::CancelHs1,
        };
        let seed = overrides.seed.unwrap_or(rr.uint_or("seed", 0)?);
        let epsilons = rr.reals_or("epsilons", Vec::new())?;
        if epsilons.iter().any(|&e| !(e >= 0.0)) {
            return Err(rr.invalid("epsilons", "must be nonnegative"));
        }
        let out = match (&overrides.out, rr.string_opt("out")?) {
            (Some(p), _) => p.clone(),
            (None, Some(s)) => PathBuf::from(s),
            (None, None) => PathBuf::from("out"),
        };
        rr.finish()?;

        let vr = Reader::new(verify.unwrap_or(&empty));
        let d = Tolerances::default();
        let tolerances = Tolerances {
            residual: [
                vr.real_or("residual_order0", d.residual[0])?,
                vr.real_or("residual_order1", d.residual[1])?,
                vr.real_or("residual_order2", d.residual[2])?,
            ],
            min_exponent: [
                vr.real_or("min_exponent_order1", d.min_exponent[0])?,
                vr.real_or("min_exponent_order2", d.min_exponent[1])?,
            ],
        };
        vr.finish()?;

        let model = match model {
            Some(s) => {
                let mr = Reader::new(s);
                let m = model_section(&mr, &envs, target)?;
                mr.finish()?;
                Some(m)
            }
            None if !envs.is_empty() || target.is_some() => {
                return Err(ConfigError::Model("[environment]/[target] given without a [model] section".into()))
            }
            None => None,
        };

        let sweep = match sweep {
            Some(s) => {
                let sr = Reader::new(s);
                let spec = sweep_section(&sr)?;
                sr.finish()?;
                Some(spec)
            }
            None => None,
        };

        let sr = Reader::new(simulate.unwrap_or(&empty));
        let horizon = match sr.get("horizon") {
            Some(v) => Some(positive(&sr, "horizon", sr.real_of("horizon", v)?)?),
            None => None,
        };
        let simulate = SimulateSpec {
            horizon,
            steps: sr.uint_or("steps", 200)?.max(1) as usize,
            initial_level: sr.uint_or("initial_level", 0)? as usize,
            off_manifold: sr.bool_or("off_manifold", false)?,
            dimension_cap: sr.uint_or("dimension_cap", DEFAULT_DIMENSION_CAP as u64)? as usize,
        };
        sr.finish()?;

        Ok(RunConfig { model, order, gauge, seed, epsilons, out, tolerances, sweep, simulate })
    }
}

impl ModelSpec {
    /// Coupling strength the model was configured with.
    pub fn epsilon(&self) -> f64 {
        match self {
            ModelSpec::Generic { epsilon, .. } | ModelSpec::Decoupled { epsilon, .. } => *epsilon,
            ModelSpec::TlsBath(p) => p.g,
            ModelSpec::Random { spec } => spec.epsilon,
        }
    }

    pub fn build(&self, seed: u64) -> Result<CompositeModel, String> {
        match self {
            ModelSpec::Generic { epsilon, environments, target } => {
                let fast = environments
                    .iter()
                    .map(|e| {
                        let jumps = e.jumps.iter().zip(&e.rates).map(|(l, &r)| Jump::new(l.clone(), r)).collect();
                        let gen = Lindbladian::new(e.hamiltonian.clone(), jumps).map_err(|err| err.to_string())?;
                        Ok(FastSubsystem::new(gen, e.coupling.clone()))
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                let d = target.b.nrows();
                let h = target.hamiltonian.clone().unwrap_or_else(|| Operator::zeros(d, d));
                let jumps = target.jumps.iter().zip(&target.rates).map(|(l, &r)| Jump::new(l.clone(), r)).collect();
                let gen_b = Lindbladian::new(h, jumps).map_err(|e| e.to_string())?;
                CompositeModel::new(fast, target.b.clone(), target.h_tilde.clone(), gen_b, *epsilon).map_err(|e| e.to_string())
            }
            ModelSpec::TlsBath(p) => tlsbath::build_full_model(p).map_err(|e| e.to_string()),
            ModelSpec::Random { spec } => random_model(seed, *spec).map_err(|e| e.to_string()),
            ModelSpec::Decoupled { dim_b, epsilon } => decoupled_model(*dim_b, *epsilon).map_err(|e| e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(text, &Overrides::default())
    }

    #[test]
    fn values() {
        assert_eq!(parse_value("1+0i", 1).unwrap(), Value::Number(C64::new(1.0, 0.0)));
        assert_eq!(parse_value("-2.5e-1i", 1).unwrap(), Value::Number(C64::new(0.0, -0.25)));
        assert_eq!(parse_value("0.5 - 1i", 1).unwrap(), Value::Number(C64::new(0.5, -1.0)));
        assert_eq!(parse_value("\"a # b\"", 1).unwrap(), Value::Str("a # b".into()));
        let m = parse_value("[[1+0i, 0], [0, -1]]", 1).unwrap();
        assert_eq!(
            m,
            Value::List(vec![
                Value::List(vec![Value::Number(C64::new(1.0, 0.0)), Value::Number(C64::new(0.0, 0.0))]),
                Value::List(vec![Value::Number(C64::new(0.0, 0.0)), Value::Number(C64::new(-1.0, 0.0))]),
            ])
        );
        assert!(parse_value("[1, [2]", 1).is_err());
        assert!(parse_value("abc", 1).is_err());
    }

    #[test]
    fn generic_model_with_multiline_matrix() {
        let cfg = parse(
            r#"
            [model]
            kind = "generic"
            epsilon = 0.1
            [environment]   # damped qubit
            hamiltonian = [[0.5, 0],
                           [0, -0.5]]
            coupling = [[0, 0], [1, 0]]
            jumps = [[[0, 0], [1, 0]]]
            rates = [1.0]
            [target]
            b = [[0, 1], [0, 0]]
            h_tilde = [[0, 0], [0, 1]]
            "#,
        )
        .unwrap();
        let model = cfg.model.unwrap().build(0).unwrap();
        assert_eq!(model.num_fast(), 1);
        assert!((model.cb().value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        let err = parse("[run]\norder = 1\ncolour = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { ref key, .. } if key == "colour"), "{err}");
        assert!(matches!(parse("[nope]\n").unwrap_err(), ConfigError::UnknownSection(_)));
        let err = parse("[model]\nkind = \"decoupled\"\nfock_dim = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { .. }));
    }

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides { order: Some(2), gauge: Some(Gauge::Traceless), seed: Some(9), out: Some("x".into()) };
        let cfg = RunConfig::parse("[run]\norder = 0\ngauge = \"cancel-hs1\"\nseed = 1\n", &o).unwrap();
        assert_eq!((cfg.order, cfg.gauge, cfg.seed), (2, Gauge::Traceless, 9));
        assert_eq!(cfg.out, PathBuf::from("x"));
    }

    #[test]
    fn invalid_values() {
        assert!(parse("[run]\norder = 3\n").is_err());
        assert!(parse("[run]\norder = 1.5\n").is_err());
        assert!(parse("[model]\nkind = \"tlsbath\"\ng = 1\ngamma_minus = 1\ndelta_c = 0\ndelta_q = [0]\n").is_err());
        assert!(parse("order = 1\n").is_err());
        assert!(parse("[run]\norder = 1\norder = 2\n").is_err());
        assert!(parse("[model]\nkind = \"generic\"\nepsilon = 0.1\n[target]\nb = [[0, 1], [0]]\nh_tilde = [[0,0],[0,1]]\n").is_err());
    }
}
