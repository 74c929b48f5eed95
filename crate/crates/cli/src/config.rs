//! INI run configuration: defaults, file values and `--section.key=value`
//! overrides, resolved and validated before any compute starts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cutoff_lab_core::estimators::Statistic;
use cutoff_lab_core::model::{Family, ModelSpec, RateRule};
use ini::Ini;

pub const OUT_ENV: &str = "CUTOFF_LAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Oracle,
    Support,
    Mixing,
    Gap,
    Verify,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Oracle => "oracle",
            Subcommand::Support => "support",
            Subcommand::Mixing => "mixing",
            Subcommand::Gap => "gap",
            Subcommand::Verify => "verify",
        }
    }
}

/// Every accepted key with its default value.
const SCHEMA: &[(&str, &[(&str, &str)])] = &[
    ("model", &[("family", "ising"), ("beta", "0.4"), ("h", "0"), ("rate_rule", "heat_bath")]),
    ("geometry", &[("d", "1"), ("sides", "8")]),
    (
        "method",
        &[
            ("replicas", "1000"),
            ("times", ""),
            ("eps", ""),
            ("t_step", "0.1"),
            ("t_max", ""),
            ("statistic", "magnetization"),
            ("blocks_per_axis", "1"),
            ("lambda", ""),
            ("support_method", "blocks"),
            ("maps", "1"),
            ("b", ""),
            ("w", ""),
            ("D", ""),
            ("S", ""),
            ("L", ""),
            ("log_sobolev", "false"),
            ("restarts", "8"),
            ("window", ""),
            ("synthetic", "false"),
            ("synthetic_rate", "0.5"),
        ],
    ),
    ("run", &[("seed", "1"), ("out", ""), ("threads", "0")]),
    ("verify", &[("quick", "false"), ("tolerance_scale", "1"), ("criteria", ""), ("seed", "20240601")]),
];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

/// Resolved `section -> key -> value` table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig(pub BTreeMap<String, BTreeMap<String, String>>);

impl RawConfig {
    pub fn defaults() -> Self {
        let mut map = BTreeMap::new();
        for (section, keys) in SCHEMA {
            map.insert(
                section.to_string(),
                keys.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            );
        }
        RawConfig(map)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let Some(table) = self.0.get_mut(section) else {
            return err(format!("unknown section [{section}]"));
        };
        let Some(slot) = table.get_mut(key) else {
            return err(format!("unknown key {section}.{key}"));
        };
        *slot = value.trim().to_string();
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> &str {
        &self.0[section][key]
    }

    pub fn merge_ini_str(&mut self, text: &str) -> Result<()> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError(format!("malformed config: {e}")))?;
        for (section, props) in ini.iter() {
            for (key, value) in props.iter() {
                match section {
                    Some(s) => self.set(s, key, value)?,
                    None => return err(format!("key `{key}` appears outside any section")),
                }
            }
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_ini_str(&text)
    }

    /// Applies one `--section.key=value` override.
    pub fn apply_override(&mut self, arg: &str) -> Result<()> {
        let body = arg.strip_prefix("--").unwrap_or(arg);
        let Some((path, value)) = body.split_once('=') else {
            return err(format!("override `{arg}` is not of the form --section.key=value"));
        };
        let Some((section, key)) = path.split_once('.') else {
            return err(format!("override `{arg}` lacks a section"));
        };
        self.set(section, key, value)
    }

    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        for (section, keys) in &self.0 {
            out.push_str(&format!("[{section}]\n"));
            for (k, v) in keys {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub replicas: usize,
    pub times: Option<Vec<f64>>,
    pub eps: Vec<f64>,
    pub t_step: f64,
    pub t_max: Option<f64>,
    pub statistic: Statistic,
    pub lambda: Option<f64>,
    pub support_method: String,
    pub maps: usize,
    pub b: Option<usize>,
    pub w: Option<usize>,
    pub diameter_cap: Option<usize>,
    pub separation: Option<usize>,
    pub component_cap: Option<usize>,
    pub log_sobolev: bool,
    pub restarts: usize,
    pub window: Option<(f64, f64)>,
    pub synthetic: bool,
    pub synthetic_rate: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub quick: bool,
    pub tolerance_scale: f64,
    pub criteria: Vec<u8>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub model: ModelSpec,
    pub d: usize,
    pub sides: Vec<usize>,
    pub method: MethodConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    pub verify: VerifyConfig,
    pub raw: RawConfig,
}

fn parse<T: std::str::FromStr>(raw: &RawConfig, section: &str, key: &str) -> Result<T> {
    let v = raw.get(section, key);
    v.parse().map_err(|_| ConfigError(format!("{section}.{key}: cannot parse `{v}`")))
}

fn parse_opt<T: std::str::FromStr>(raw: &RawConfig, section: &str, key: &str) -> Result<Option<T>> {
    if raw.get(section, key).is_empty() {
        Ok(None)
    } else {
        parse(raw, section, key).map(Some)
    }
}

fn parse_list<T: std::str::FromStr>(raw: &RawConfig, section: &str, key: &str) -> Result<Vec<T>> {
    let v = raw.get(section, key);
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|x| x.trim().parse().map_err(|_| ConfigError(format!("{section}.{key}: cannot parse `{x}`"))))
        .collect()
}

/// `a:b:step` ranges or comma lists.
fn parse_times(raw: &RawConfig) -> Result<Option<Vec<f64>>> {
    let v = raw.get("method", "times");
    if v.is_empty() {
        return Ok(None);
    }
    let parts: Vec<&str> = v.split(':').collect();
    let times = if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse().map_err(|_| ConfigError(format!("method.times: cannot parse `{p}`"))))
            .collect::<Result<_>>()?;
        let (a, b, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || b < a {
            return err("method.times range needs start ≤ stop and a positive step");
        }
        let count = ((b - a) / step + 1e-9).floor() as usize;
        (0..=count).map(|k| a + k as f64 * step).collect()
    } else {
        parse_list(raw, "method", "times")?
    };
    if times.iter().any(|t: &f64| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[0] >= w[1]) {
        return err("method.times must be nonnegative and strictly increasing");
    }
    Ok(Some(times))
}

fn parse_bool(raw: &RawConfig, section: &str, key: &str) -> Result<bool> {
    match raw.get(section, key) {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => err(format!("{section}.{key}: expected a boolean, got `{other}`")),
    }
}

pub fn resolve_out_dir(raw: &RawConfig, sub: Subcommand) -> PathBuf {
    let explicit = raw.get("run", "out");
    if !explicit.is_empty() {
        return PathBuf::from(explicit);
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("cutoff-lab-out"));
    root.join(sub.name())
}

impl RunConfig {
    pub fn from_raw(sub: Subcommand, raw: RawConfig) -> Result<Self> {
        let family = match raw.get("model", "family") {
            "ising" | "ising_ferro" | "ferro" => Family::IsingFerro,
            "antiferro" | "ising_antiferro" => Family::IsingAntiferro,
            "hardcore" | "hard_core" => Family::Hardcore,
            other => return err(format!("model.family: unknown family `{other}`")),
        };
        let rule = match raw.get("model", "rate_rule") {
            "heat_bath" | "heatbath" => RateRule::HeatBath,
            "metropolis" => RateRule::Metropolis,
            other => return err(format!("model.rate_rule: unknown rule `{other}`")),
        };
        let model = ModelSpec::new(family, parse(&raw, "model", "beta")?, parse(&raw, "model", "h")?, rule)
            .map_err(|e| ConfigError(e.to_string()))?;
        let d: usize = parse(&raw, "geometry", "d")?;
        if d == 0 {
            return err("geometry.d must be positive");
        }
        let sides: Vec<usize> = parse_list(&raw, "geometry", "sides")?;
        if sides.is_empty() {
            return err("geometry.sides is empty");
        }
        let statistic = match raw.get("method", "statistic") {
            "magnetization" => Statistic::Magnetization,
            "product_blocks" => Statistic::ProductBlocks { blocks_per_axis: parse(&raw, "method", "blocks_per_axis")? },
            other => return err(format!("method.statistic: unknown statistic `{other}`")),
        };
        let support_method = raw.get("method", "support_method").to_string();
        if !["blocks", "paths", "exact"].contains(&support_method.as_str()) {
            return err(format!("method.support_method: expected blocks, paths or exact, got `{support_method}`"));
        }
        let window: Vec<f64> = parse_list(&raw, "method", "window")?;
        let window = match window.len() {
            0 => None,
            2 if window[0] < window[1] => Some((window[0], window[1])),
            _ => return err("method.window must be `lo, hi` with lo < hi"),
        };
        let method = MethodConfig {
            replicas: parse(&raw, "method", "replicas")?,
            times: parse_times(&raw)?,
            eps: parse_list(&raw, "method", "eps")?,
            t_step: parse(&raw, "method", "t_step")?,
            t_max: parse_opt(&raw, "method", "t_max")?,
            statistic,
            lambda: parse_opt(&raw, "method", "lambda")?,
            support_method,
            maps: parse(&raw, "method", "maps")?,
            b: parse_opt(&raw, "method", "b")?,
            w: parse_opt(&raw, "method", "w")?,
            diameter_cap: parse_opt(&raw, "method", "D")?,
            separation: parse_opt(&raw, "method", "S")?,
            component_cap: parse_opt(&raw, "method", "L")?,
            log_sobolev: parse_bool(&raw, "method", "log_sobolev")?,
            restarts: parse(&raw, "method", "restarts")?,
            window,
            synthetic: parse_bool(&raw, "method", "synthetic")?,
            synthetic_rate: parse(&raw, "method", "synthetic_rate")?,
        };
        if method.replicas == 0 && sub != Subcommand::Oracle && sub != Subcommand::Verify && !method.synthetic {
            return err("method.replicas must be positive");
        }
        if sub == Subcommand::Mixing && method.eps.is_empty() {
            return err("mixing needs a nonempty method.eps list");
        }
        if method.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return err("method.eps values must lie in (0, 1)");
        }
        if !(method.t_step > 0.0) {
            return err("method.t_step must be positive");
        }
        let verify = VerifyConfig {
            quick: parse_bool(&raw, "verify", "quick")?,
            tolerance_scale: parse(&raw, "verify", "tolerance_scale")?,
            criteria: parse_list(&raw, "verify", "criteria")?,
            seed: parse(&raw, "verify", "seed")?,
        };
        if let Some(bad) = verify.criteria.iter().find(|c| !(1..=12).contains(*c)) {
            return err(format!("verify.criteria: no criterion {bad}"));
        }
        Ok(RunConfig {
            subcommand: sub,
            model,
            d,
            sides,
            method,
            seed: parse(&raw, "run", "seed")?,
            out: resolve_out_dir(&raw, sub),
            threads: parse(&raw, "run", "threads")?,
            verify,
            raw,
        })
    }

    /// Per-axis sides of the single geometry used by oracle and support.
    pub fn axis_sides(&self) -> Result<Vec<usize>> {
        match self.sides.len() {
            1 => Ok(vec![self.sides[0]; self.d]),
            n if n == self.d => Ok(self.sides.clone()),
            n => err(format!("geometry.sides has {n} entries for dimension {}", self.d)),
        }
    }
}
