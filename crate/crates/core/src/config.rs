//! Strict INI-style run configuration.
//!
//! ```text
//! [run]
//! command = basin
//! seed = 42
//!
//! [sequence]
//! kind = power_tower
//! a = 0.5
//! ```
//!
//! Sections are `[run]`, `[sequence]`, `[grid]` and `[params]`; which keys
//! are accepted depends on the command. Unknown keys, duplicates, type
//! mismatches and missing required keys are reported with line numbers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::basin::default_radius;
use crate::boundary::alpha0_for;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Basin,
    Potential,
    Green,
    Filtration,
    RegionTest,
    Prop12,
    Disjoint,
    AvoidVariety,
    FbInclusion,
    EtaCheck,
    Boundary,
    Stagewise,
    Levi,
}

impl Command {
    pub const ALL: [Command; 13] = [
        Command::Basin,
        Command::Potential,
        Command::Green,
        Command::Filtration,
        Command::RegionTest,
        Command::Prop12,
        Command::Disjoint,
        Command::AvoidVariety,
        Command::FbInclusion,
        Command::EtaCheck,
        Command::Boundary,
        Command::Stagewise,
        Command::Levi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Basin => "basin",
            Command::Potential => "potential",
            Command::Green => "green",
            Command::Filtration => "filtration",
            Command::RegionTest => "region-test",
            Command::Prop12 => "prop12",
            Command::Disjoint => "disjoint",
            Command::AvoidVariety => "avoid-variety",
            Command::FbInclusion => "fb-inclusion",
            Command::EtaCheck => "eta-check",
            Command::Boundary => "boundary",
            Command::Stagewise => "stagewise",
            Command::Levi => "levi",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    fn uses_sequence(self) -> bool {
        matches!(self, Command::Basin | Command::Potential | Command::Filtration)
    }

    fn uses_grid(self) -> bool {
        matches!(self, Command::Basin | Command::Potential)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Threads {
    Auto,
    Fixed(usize),
}

impl Threads {
    pub fn parse(s: &str) -> Option<Threads> {
        if s == "auto" {
            return Some(Threads::Auto);
        }
        s.parse::<usize>().ok().filter(|&n| n > 0).map(Threads::Fixed)
    }
}

impl fmt::Display for Threads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threads::Auto => write!(f, "auto"),
            Threads::Fixed(n) => write!(f, "{n}"),
        }
    }
}

/// A typed configuration value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    IntList(Vec<i64>),
    Str(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Bool,
    /// Non-negative integer.
    Int,
    /// 64-bit unsigned, kept as a string-free integer in the echo.
    Seed,
    Float,
    IntList,
    Str,
    Threads,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Kind::Bool => "a boolean (true/false)",
            Kind::Int => "a non-negative integer",
            Kind::Seed => "an unsigned 64-bit integer",
            Kind::Float => "a finite number",
            Kind::IntList => "a comma-separated list of non-negative integers",
            Kind::Str => "a string",
            Kind::Threads => "a positive integer or \"auto\"",
        }
    }
}

enum Default {
    Required,
    Fixed(Value),
    /// Filled in after parsing from other keys.
    Derived,
}

struct KeySpec {
    section: &'static str,
    key: &'static str,
    kind: Kind,
    default: Default,
}

fn key(section: &'static str, key: &'static str, kind: Kind, default: Default) -> KeySpec {
    KeySpec { section, key, kind, default }
}

fn f(x: f64) -> Default {
    Default::Fixed(Value::Float(x))
}

fn i(x: i64) -> Default {
    Default::Fixed(Value::Int(x))
}

fn b(x: bool) -> Default {
    Default::Fixed(Value::Bool(x))
}

fn s(x: &str) -> Default {
    Default::Fixed(Value::Str(x.into()))
}

fn schema(cmd: Command) -> Vec<KeySpec> {
    use Kind::*;
    let mut v = vec![
        key("run", "command", Str, Default::Required),
        key("run", "seed", Seed, s("0")),
        key("run", "threads", Threads, s("auto")),
        key("run", "out_dir", Str, s("out")),
    ];
    if cmd.uses_sequence() {
        v.extend([
            key("sequence", "kind", Str, s("power_tower")),
            key("sequence", "k", Int, i(3)),
            key("sequence", "d", Int, i(2)),
            key("sequence", "a", Float, Default::Required),
            key("sequence", "n_max", Int, i(60)),
        ]);
    }
    if cmd.uses_grid() {
        v.extend([
            key("grid", "width", Int, i(200)),
            key("grid", "height", Int, i(200)),
            key("grid", "u_min", Float, f(-2.0)),
            key("grid", "u_max", Float, f(2.0)),
            key("grid", "v_min", Float, f(-2.0)),
            key("grid", "v_max", Float, f(2.0)),
            key("grid", "axis_u", Int, i(2)),
            key("grid", "axis_v", Int, Default::Derived),
        ]);
    }
    let p = "params";
    match cmd {
        Command::Basin => v.extend([
            key(p, "c_in", Float, f(0.5)),
            key(p, "radius", Float, Default::Derived),
            key(p, "margin", Float, f(1e-3)),
            key(p, "psi", Bool, b(false)),
        ]),
        Command::Potential => v.extend([
            key(p, "c_in", Float, f(0.5)),
            key(p, "radius", Float, Default::Derived),
            key(p, "margin", Float, f(1e-3)),
            key(p, "min_coherence", Float, f(0.995)),
            key(p, "subaverage_points", Int, i(50)),
            key(p, "subaverage_radius", Float, f(0.05)),
            key(p, "circle_samples", Int, i(64)),
            key(p, "interior_radius", Float, f(1.0)),
            key(p, "subaverage_floor", Float, f(-1e-6)),
        ]),
        Command::Green => v.extend([
            key(p, "k", Int, i(3)),
            key(p, "nu", Int, i(2)),
            key(p, "d", Int, i(2)),
            key(p, "delta_re", Float, f(1.0)),
            key(p, "delta_im", Float, f(0.0)),
            key(p, "radius", Float, f(4.0)),
            key(p, "levels", Int, i(5)),
            key(p, "samples", Int, i(1000)),
            key(p, "block", Str, s("auto")),
        ]),
        Command::Filtration => v.extend([
            key(p, "radius", Float, Default::Derived),
            key(p, "samples", Int, i(10_000)),
            key(p, "steps", Int, i(20)),
        ]),
        Command::RegionTest => v.extend([
            key(p, "alpha", Float, f(0.5)),
            key(p, "beta", Float, f(1.0 / 9.0)),
            key(p, "r", Float, f(4.0)),
            key(p, "m", Int, i(4)),
            key(p, "p", IntList, Default::Fixed(Value::IntList(vec![1]))),
            key(p, "q", IntList, Default::Fixed(Value::IntList(vec![3]))),
            key(p, "length", Int, i(20)),
            key(p, "random_schedules", Int, i(0)),
        ]),
        Command::Prop12 => v.extend([
            key(p, "alpha", Float, f(0.5)),
            key(p, "beta", Float, f(0.2)),
            key(p, "kdeg", Int, i(3)),
            key(p, "depth", Int, i(60)),
            key(p, "steps", Int, i(10_000)),
            key(p, "schedules", Int, i(10)),
            key(p, "bound_factor", Float, f(2.0)),
        ]),
        Command::Disjoint => v.extend([
            key(p, "k", Int, i(3)),
            key(p, "a", Float, f(0.5)),
            key(p, "dominant_axis", Int, Default::Derived),
            key(p, "n_max", Int, i(200)),
            key(p, "samples", Int, i(100_000)),
            key(p, "max_undecided_fraction", Float, f(0.01)),
        ]),
        Command::AvoidVariety => v.extend([
            key(p, "k", Int, i(3)),
            key(p, "a", Float, f(0.5)),
            key(p, "radius", Float, Default::Derived),
            key(p, "eps_factor", Float, f(0.5)),
            key(p, "samples", Int, i(10_000)),
            key(p, "members", Int, i(1000)),
        ]),
        Command::FbInclusion => v.extend([
            key(p, "a", Float, f(0.5)),
            key(p, "k", Int, i(3)),
            key(p, "samples", Int, i(1000)),
            key(p, "tol", Float, f(1e-6)),
        ]),
        Command::EtaCheck => v.extend([
            key(p, "kind", Str, s("shifted_tower")),
            key(p, "a", Float, f(0.5)),
            key(p, "k", Int, i(3)),
            key(p, "m", Float, f(2.0)),
            key(p, "n_hi", Int, i(40)),
        ]),
        Command::Boundary => v.extend([
            key(p, "eps", Float, f(0.1)),
            key(p, "r", Float, f(5.0)),
            key(p, "alpha", Float, Default::Derived),
            key(p, "xi_samples", Int, i(64)),
            key(p, "w_samples", Int, i(32)),
        ]),
        Command::Stagewise | Command::Levi => {
            v.extend([
                key(p, "k", Int, i(3)),
                key(p, "r", Float, f(5.0)),
                key(p, "eps", Float, f(0.1)),
                key(p, "stages", Int, i(6)),
                key(p, "angular_samples", Int, i(16)),
                key(p, "transverse_rings", Int, i(2)),
                key(p, "derivatives", Bool, b(false)),
            ]);
            if cmd == Command::Stagewise {
                v.push(key(p, "samples", Int, i(10_000)));
            } else {
                v.push(key(p, "samples", Int, i(50)));
                v.push(key(p, "stage", Int, Default::Derived));
            }
        }
    }
    v
}

/// Parsed and fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub threads: Threads,
    pub out_dir: String,
    /// Every accepted key with its resolved value, by section.
    pub values: BTreeMap<String, BTreeMap<String, Value>>,
}

struct RawEntry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

fn parse_value(kind: Kind, raw: &str, line: usize, name: &str) -> Result<Value, ConfigError> {
    let mismatch = || err(line, format!("type mismatch for '{name}': expected {}", kind.describe()));
    match kind {
        Kind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => mismatch(),
        },
        Kind::Int => raw.parse::<u32>().map(|x| Value::Int(x as i64)).or_else(|_| mismatch()),
        Kind::Seed => match raw.parse::<u64>() {
            Ok(x) => Ok(Value::Str(x.to_string())),
            Err(_) => mismatch(),
        },
        Kind::Float => match raw.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::Float(x)),
            _ => mismatch(),
        },
        Kind::IntList => {
            let items: Result<Vec<i64>, _> = raw.split(',').map(|t| t.trim().parse::<u32>().map(|x| x as i64)).collect();
            match items {
                Ok(v) if !v.is_empty() => Ok(Value::IntList(v)),
                _ => mismatch(),
            }
        }
        Kind::Str => {
            let t = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(raw);
            if t.is_empty() {
                return mismatch();
            }
            Ok(Value::Str(t.to_string()))
        }
        Kind::Threads => match Threads::parse(raw) {
            Some(t) => Ok(Value::Str(t.to_string())),
            None => mismatch(),
        },
    }
}

fn tokenize(text: &str) -> Result<(Vec<RawEntry>, BTreeMap<String, usize>), ConfigError> {
    let mut entries: Vec<RawEntry> = Vec::new();
    let mut sections: BTreeMap<String, usize> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(line, "unterminated section header");
            };
            let name = name.trim();
            if !matches!(name, "run" | "sequence" | "grid" | "params") {
                return err(line, format!("unknown section '[{name}]'"));
            }
            if let Some(first) = sections.get(name) {
                return err(line, format!("duplicate section '[{name}]' (lines {first} and {line})"));
            }
            sections.insert(name.to_string(), line);
            current = Some(name.to_string());
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return err(line, "expected 'key = value'");
        };
        let Some(section) = current.clone() else {
            return err(line, "key outside of a section");
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return err(line, "empty key");
        }
        if let Some(prev) = entries.iter().find(|e| e.section == section && e.key == k) {
            return err(line, format!("duplicate key '{k}' (lines {} and {line})", prev.line));
        }
        entries.push(RawEntry { section, key: k.to_string(), value: v.to_string(), line });
    }
    Ok((entries, sections))
}

fn get<'a>(values: &'a BTreeMap<String, BTreeMap<String, Value>>, section: &str, key: &str) -> Option<&'a Value> {
    values.get(section).and_then(|m| m.get(key))
}

fn num(v: Option<&Value>) -> Option<f64> {
    match v {
        Some(Value::Float(x)) => Some(*x),
        Some(Value::Int(x)) => Some(*x as f64),
        _ => None,
    }
}

fn int(v: Option<&Value>) -> Option<i64> {
    match v {
        Some(Value::Int(x)) => Some(*x),
        _ => None,
    }
}

fn derive(cmd: Command, section: &str, key: &str, values: &BTreeMap<String, BTreeMap<String, Value>>) -> Value {
    match (section, key) {
        ("grid", "axis_v") => Value::Int(int(get(values, "sequence", "k")).unwrap_or(3)),
        ("params", "radius") if cmd.uses_sequence() => {
            let a = num(get(values, "sequence", "a")).unwrap_or(0.5);
            Value::Float(if cmd == Command::Filtration { 1.0 + a + 0.1 } else { default_radius(a) })
        }
        ("params", "radius") => Value::Float(default_radius(num(get(values, "params", "a")).unwrap_or(0.5))),
        ("params", "dominant_axis") => Value::Int(int(get(values, "params", "k")).unwrap_or(3)),
        ("params", "alpha") => {
            let eps = num(get(values, "params", "eps")).unwrap_or(0.1);
            let r = num(get(values, "params", "r")).unwrap_or(5.0);
            Value::Float(alpha0_for(eps, r).unwrap_or(f64::NAN))
        }
        ("params", "stage") => Value::Int(int(get(values, "params", "stages")).unwrap_or(1) - 1),
        _ => unreachable!("no derived default for {section}.{key}"),
    }
}

/// Checks ranges that only make sense across keys.
fn validate(cmd: Command, values: &BTreeMap<String, BTreeMap<String, Value>>, lines: &BTreeMap<(String, String), usize>, last: usize) -> Result<(), ConfigError> {
    let line_of = |s: &str, k: &str| lines.get(&(s.to_string(), k.to_string())).copied().unwrap_or(last);
    let check_a = |section: &str| -> Result<(), ConfigError> {
        if let Some(a) = num(get(values, section, "a")) {
            if !(a > 0.0 && a < 1.0) {
                return err(line_of(section, "a"), "a must lie in (0,1)");
            }
        }
        Ok(())
    };
    check_a("sequence")?;
    check_a("params")?;
    for (section, k) in [("sequence", "k"), ("params", "k")] {
        if let Some(kv) = int(get(values, section, k)) {
            if !(2..=8).contains(&kv) {
                return err(line_of(section, k), "k must lie in 2..=8");
            }
        }
    }
    if cmd.uses_sequence() {
        let kind = match get(values, "sequence", "kind") {
            Some(Value::Str(s)) => s.clone(),
            _ => String::new(),
        };
        if kind != "power_tower" && kind != "shifted_tower" {
            return err(line_of("sequence", "kind"), "kind must be power_tower or shifted_tower");
        }
        let d = int(get(values, "sequence", "d")).unwrap_or(2);
        if d < 2 {
            return err(line_of("sequence", "d"), "d must be at least 2");
        }
        if kind == "shifted_tower" && d != 2 {
            return err(line_of("sequence", "d"), "shifted_tower requires d = 2");
        }
    }
    if cmd.uses_grid() {
        let k = int(get(values, "sequence", "k")).unwrap_or(3);
        for a in ["axis_u", "axis_v"] {
            let v = int(get(values, "grid", a)).unwrap_or(1);
            if v < 1 || v > k {
                return err(line_of("grid", a), format!("{a} must lie in 1..=k"));
            }
        }
        for a in ["width", "height"] {
            if int(get(values, "grid", a)).unwrap_or(0) < 1 {
                return err(line_of("grid", a), format!("{a} must be positive"));
            }
        }
    }
    if cmd == Command::Green {
        if let Some(Value::Str(bl)) = get(values, "params", "block") {
            if bl != "auto" && bl.parse::<usize>().map_or(true, |x| x == 0) {
                return err(line_of("params", "block"), "block must be \"auto\" or a positive integer");
            }
        }
    }
    if cmd == Command::EtaCheck {
        if let Some(Value::Str(kind)) = get(values, "params", "kind") {
            if kind != "power_tower" && kind != "shifted_tower" {
                return err(line_of("params", "kind"), "kind must be power_tower or shifted_tower");
            }
        }
    }
    Ok(())
}

/// Parses configuration text and fills every default.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let (entries, sections) = tokenize(text)?;
    let last = text.lines().count().max(1);
    let Some(cmd_entry) = entries.iter().find(|e| e.section == "run" && e.key == "command") else {
        return err(sections.get("run").copied().unwrap_or(last), "missing required key 'command' in [run]");
    };
    let raw_cmd = cmd_entry.value.trim_matches('"');
    let Some(cmd) = Command::parse(raw_cmd) else {
        return err(cmd_entry.line, format!("unknown command '{raw_cmd}'"));
    };
    let spec = schema(cmd);
    let mut values: BTreeMap<String, BTreeMap<String, Value>> = BTreeMap::new();
    let mut lines: BTreeMap<(String, String), usize> = BTreeMap::new();
    for e in &entries {
        let Some(ks) = spec.iter().find(|k| k.section == e.section && k.key == e.key) else {
            return err(e.line, format!("unknown key '{}' in [{}] for command {}", e.key, e.section, cmd.name()));
        };
        let v = parse_value(ks.kind, &e.value, e.line, &e.key)?;
        values.entry(e.section.clone()).or_default().insert(e.key.clone(), v);
        lines.insert((e.section.clone(), e.key.clone()), e.line);
    }
    for ks in &spec {
        if get(&values, ks.section, ks.key).is_some() {
            continue;
        }
        match &ks.default {
            Default::Required => {
                let line = sections.get(ks.section).copied().unwrap_or(last);
                return err(line, format!("missing required key '{}' in [{}]", ks.key, ks.section));
            }
            Default::Fixed(v) => {
                values.entry(ks.section.to_string()).or_default().insert(ks.key.to_string(), v.clone());
            }
            Default::Derived => {}
        }
    }
    for ks in spec.iter().filter(|k| matches!(k.default, Default::Derived)) {
        if get(&values, ks.section, ks.key).is_none() {
            let v = derive(cmd, ks.section, ks.key, &values);
            values.entry(ks.section.to_string()).or_default().insert(ks.key.to_string(), v);
        }
    }
    validate(cmd, &values, &lines, last)?;
    if let Some(r) = values.get_mut("run") {
        r.insert("command".into(), Value::Str(cmd.name().into()));
    }
    let seed = match get(&values, "run", "seed") {
        Some(Value::Str(s)) => s.parse().expect("validated seed"),
        _ => 0,
    };
    let threads = match get(&values, "run", "threads") {
        Some(Value::Str(s)) => Threads::parse(s).expect("validated threads"),
        _ => Threads::Auto,
    };
    let out_dir = match get(&values, "run", "out_dir") {
        Some(Value::Str(s)) => s.clone(),
        _ => "out".into(),
    };
    Ok(RunConfig { command: cmd, seed, threads, out_dir, values })
}

impl RunConfig {
    fn value(&self, section: &str, key: &str) -> &Value {
        get(&self.values, section, key).unwrap_or_else(|| panic!("{section}.{key} is not part of the {} schema", self.command.name()))
    }

    pub fn f64(&self, section: &str, key: &str) -> f64 {
        num(Some(self.value(section, key))).unwrap_or_else(|| panic!("{section}.{key} is not numeric"))
    }

    pub fn usize(&self, section: &str, key: &str) -> usize {
        int(Some(self.value(section, key))).unwrap_or_else(|| panic!("{section}.{key} is not an integer")) as usize
    }

    pub fn bool(&self, section: &str, key: &str) -> bool {
        match self.value(section, key) {
            Value::Bool(b) => *b,
            _ => panic!("{section}.{key} is not a boolean"),
        }
    }

    pub fn str(&self, section: &str, key: &str) -> &str {
        match self.value(section, key) {
            Value::Str(s) => s,
            _ => panic!("{section}.{key} is not a string"),
        }
    }

    pub fn list(&self, section: &str, key: &str) -> Vec<u32> {
        match self.value(section, key) {
            Value::IntList(v) => v.iter().map(|&x| x as u32).collect(),
            _ => panic!("{section}.{key} is not a list"),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.values.entry("run".into()).or_default().insert("seed".into(), Value::Str(seed.to_string()));
    }

    pub fn set_threads(&mut self, t: Threads) {
        self.threads = t;
        self.values.entry("run".into()).or_default().insert("threads".into(), Value::Str(t.to_string()));
    }

    pub fn set_out_dir(&mut self, dir: &str) {
        self.out_dir = dir.to_string();
        self.values.entry("run".into()).or_default().insert("out_dir".into(), Value::Str(dir.to_string()));
    }

    /// The resolved configuration in INI form; parsing it gives back `self`.
    pub fn to_ini(&self) -> String {
        values_to_ini(&self.values)
    }
}

/// INI text for resolved values, e.g. the `config` echoed in a run manifest.
pub fn values_to_ini(values: &BTreeMap<String, BTreeMap<String, Value>>) -> String {
    let mut out = String::new();
    for section in ["run", "sequence", "grid", "params"] {
        let Some(m) = values.get(section) else { continue };
        out.push_str(&format!("[{section}]\n"));
        for (k, v) in m {
            let text = match v {
                Value::Bool(b) => b.to_string(),
                Value::Int(i) => i.to_string(),
                Value::Float(x) => format!("{x:?}"),
                Value::IntList(l) => l.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                Value::Str(s) => s.clone(),
            };
            out.push_str(&format!("{k} = {text}\n"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "[run]\ncommand = basin\n\n[sequence]\nkind = power_tower\na = 0.5\nk = 3\nd = 2\n";

    #[test]
    fn minimal_basin_config() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.command, Command::Basin);
        assert_eq!(c.seed, 0);
        assert_eq!(c.threads, Threads::Auto);
        assert_eq!(c.usize("grid", "width"), 200);
        assert_eq!(c.usize("grid", "axis_v"), 3);
        assert_eq!(c.f64("params", "radius"), 2.0);
    }

    #[test]
    fn a_out_of_range() {
        let e = parse_config(&MINIMAL.replace("a = 0.5", "a = 1.5")).unwrap_err();
        assert_eq!(e.line, 6);
        assert!(e.message.contains("a must lie in (0,1)"));
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let e = parse_config(&format!("{MINIMAL}a = 0.3\n")).unwrap_err();
        assert_eq!(e.line, 9);
        assert!(e.message.contains("lines 6 and 9"), "{}", e.message);
    }

    #[test]
    fn unknown_key_and_type_mismatch() {
        let e = parse_config(&format!("{MINIMAL}colour = red\n")).unwrap_err();
        assert_eq!(e.line, 9);
        assert!(e.message.contains("unknown key"));
        let e = parse_config(&MINIMAL.replace("k = 3", "k = three")).unwrap_err();
        assert_eq!(e.line, 7);
        assert!(e.message.contains("type mismatch"));
        let e = parse_config("[run]\ncommand = disjoint\n[grid]\nwidth = 3\n").unwrap_err();
        assert_eq!(e.line, 4);
    }

    #[test]
    fn missing_required() {
        let e = parse_config("[run]\ncommand = basin\n[sequence]\nk = 3\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("missing required key 'a'"));
        let e = parse_config("# nothing\n").unwrap_err();
        assert!(e.message.contains("command"));
    }

    #[test]
    fn comments_threads_and_overrides() {
        let text = "# top\n[run]\ncommand = region-test # inline\nthreads = 4\nseed = 18446744073709551615\n";
        let mut c = parse_config(text).unwrap();
        assert_eq!(c.threads, Threads::Fixed(4));
        assert_eq!(c.seed, u64::MAX);
        assert_eq!(c.list("params", "q"), vec![3]);
        c.set_seed(7);
        assert_eq!(parse_config(&c.to_ini()).unwrap(), c);
        assert!(parse_config("[run]\ncommand = basin\nthreads = 0\n").is_err());
    }

    #[test]
    fn every_command_has_defaults() {
        for cmd in Command::ALL {
            let mut text = format!("[run]\ncommand = {}\n", cmd.name());
            if cmd.uses_sequence() {
                text.push_str("[sequence]\na = 0.5\n");
            }
            let c = parse_config(&text).unwrap();
            assert_eq!(c.command, cmd);
            assert_eq!(parse_config(&c.to_ini()).unwrap(), c);
        }
    }

    proptest! {
        #[test]
        fn parser_never_panics(s in "\\PC{0,200}") {
            let _ = parse_config(&s);
        }

        #[test]
        fn resolved_config_roundtrips(a in 0.01..0.99f64, seed in any::<u64>(), w in 1u32..500) {
            let text = format!("[run]\ncommand = basin\nseed = {seed}\n[sequence]\na = {a}\n[grid]\nwidth = {w}\n");
            let c = parse_config(&text).unwrap();
            prop_assert_eq!(parse_config(&c.to_ini()).unwrap(), c);
        }
    }
}
