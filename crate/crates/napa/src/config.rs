//! Experiment configuration files.
//!
//! The format is flat `key = value` text. `#` starts a comment, blank lines
//! are ignored, and `box` may repeat:
//!
//! ```text
//! preset = 1d
//! mu = 3/sqrt(20)
//! box = 1:1001..1200 @ 0.8
//! methods = napa, laws, bh
//! sweep = region_pi
//! ```
//!
//! Real values accept plain decimals and the forms `a/b` and `a/sqrt(b)`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use napa_core::grid::SpatialGrid;
use napa_core::simulate::{Beta1Mode, ExperimentConfig, Sweep, SweepParam};
use napa_core::{Method, RegionBox, RegionSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "line {}: {}: {}", self.line, self.key, self.message)
        }
    }
}

/// A parsed simulation file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub experiment: ExperimentConfig,
    /// Write one decisions CSV per sweep point (first replication).
    pub write_decisions: bool,
}

pub const KEYS: &[&str] = &[
    "preset",
    "extents",
    "baseline",
    "box",
    "mu",
    "beta1",
    "var1",
    "var2",
    "n1",
    "n2",
    "alpha",
    "replications",
    "seed",
    "methods",
    "sweep",
    "sweep_values",
    "xi",
    "tau",
    "hs",
    "hu",
    "rho",
    "gap_groups",
    "cv_hs_points",
    "cv_hu_points",
    "cv_max_targets",
    "cv_max_pairs",
    "write_decisions",
];

struct Entry {
    line: usize,
    value: String,
}

fn err(line: usize, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let a: f64 = num.trim().parse().ok()?;
        let den = den.trim();
        let b = match den.strip_prefix("sqrt(").and_then(|d| d.strip_suffix(')')) {
            Some(inner) => inner.trim().parse::<f64>().ok()?.sqrt(),
            None => den.parse().ok()?,
        };
        let v = a / b;
        return v.is_finite().then_some(v);
    }
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m: Method = part.parse().map_err(|e: napa_core::Error| e.to_string())?;
        if out.contains(&m) {
            return Err(format!("method `{part}` listed twice"));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err("no methods listed".into());
    }
    Ok(out)
}

fn parse_extents(s: &str) -> Option<Vec<usize>> {
    let parts: Vec<&str> = s.split([',', 'x', 'X']).map(str::trim).collect();
    parts.iter().map(|p| p.parse::<usize>().ok()).collect()
}

/// `(axis, lo, hi)` with a 1-based axis.
type AxisRange = (usize, usize, usize);

/// `1:1001..1200,2:10..30 @ 0.8`; axes not listed span the full extent.
fn parse_box(s: &str) -> Result<(Vec<AxisRange>, f64), String> {
    let (ranges, value) = s.split_once('@').ok_or("expected `dim:lo..hi[,dim:lo..hi] @ value`")?;
    let value = parse_real(value).ok_or_else(|| format!("invalid value `{}`", value.trim()))?;
    let mut out = Vec::new();
    for part in ranges.split(',').map(str::trim) {
        let bad = || format!("invalid range `{part}` (expected dim:lo..hi)");
        let (dim, range) = part.split_once(':').ok_or_else(bad)?;
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let dim: usize = dim.trim().parse().map_err(|_| bad())?;
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if out.iter().any(|&(d, _, _)| d == dim) {
            return Err(format!("dimension {dim} given twice"));
        }
        out.push((dim, lo, hi));
    }
    Ok((out, value))
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_beta1(s: &str) -> Option<Beta1Mode> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix("uniform(").and_then(|r| r.strip_suffix(')')) {
        let (lo, hi) = inner.split_once(',')?;
        let (lo, hi) = (parse_real(lo)?, parse_real(hi)?);
        return (lo <= hi).then_some(Beta1Mode::Uniform { lo, hi });
    }
    parse_real(s).map(Beta1Mode::Constant)
}

pub fn load(path: &Path) -> anyhow::Result<SimulationConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn parse(text: &str) -> Result<SimulationConfig, ConfigError> {
    let mut scalars: HashMap<String, Entry> = HashMap::new();
    let mut boxes: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, "", format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim();
        let value = value.trim().to_string();
        if !KEYS.contains(&key) {
            return Err(err(line, key, "unknown key"));
        }
        if value.is_empty() {
            return Err(err(line, key, "missing value"));
        }
        if key == "box" {
            boxes.push(Entry { line, value });
        } else if let Some(prev) = scalars.get(key) {
            return Err(err(
                line,
                key,
                format!("duplicate key (first set on line {})", prev.line),
            ));
        } else {
            scalars.insert(key.to_string(), Entry { line, value });
        }
    }

    let mut cfg = match scalars.get("preset") {
        None => ExperimentConfig::study_1d(),
        Some(e) => match e.value.as_str() {
            "1d" => ExperimentConfig::study_1d(),
            "2d" => ExperimentConfig::study_2d(),
            "3d" => ExperimentConfig::study_3d(),
            other => {
                return Err(err(
                    e.line,
                    "preset",
                    format!("unknown preset `{other}` (expected 1d, 2d or 3d)"),
                ))
            }
        },
    };

    let real = |key: &str| -> Result<Option<(f64, usize)>, ConfigError> {
        scalars
            .get(key)
            .map(|e| {
                parse_real(&e.value)
                    .map(|v| (v, e.line))
                    .ok_or_else(|| err(e.line, key, format!("`{}` is not a finite number", e.value)))
            })
            .transpose()
    };
    let integer = |key: &str| -> Result<Option<(u64, usize)>, ConfigError> {
        scalars
            .get(key)
            .map(|e| {
                e.value
                    .parse::<u64>()
                    .map(|v| (v, e.line))
                    .map_err(|_| err(e.line, key, format!("`{}` is not a non-negative integer", e.value)))
            })
            .transpose()
    };
    let check = |ok: bool, line: usize, key: &str, msg: &str| if ok { Ok(()) } else { Err(err(line, key, msg)) };

    if let Some(e) = scalars.get("extents") {
        let ext = parse_extents(&e.value)
            .ok_or_else(|| err(e.line, "extents", "expected sizes like `5000` or `100 x 50`"))?;
        SpatialGrid::new(&ext).map_err(|x| err(e.line, "extents", x.to_string()))?;
        if ext != cfg.extents {
            cfg.extents = ext;
            // preset boxes belong to the preset lattice
            if boxes.is_empty() {
                cfg.regions.boxes.clear();
            }
        }
    }
    if let Some((v, line)) = real("baseline")? {
        check(v > 0.0 && v < 1.0, line, "baseline", "must lie in (0,1)")?;
        cfg.regions.baseline = v;
    }
    if !boxes.is_empty() {
        let grid = SpatialGrid::new(&cfg.extents).map_err(|x| err(0, "extents", x.to_string()))?;
        let mut parsed = Vec::new();
        for e in &boxes {
            let (ranges, value) = parse_box(&e.value).map_err(|m| err(e.line, "box", m))?;
            let mut full: Vec<(usize, usize)> = cfg.extents.iter().map(|&n| (1, n)).collect();
            for (dim, lo, hi) in ranges {
                if dim == 0 || dim > full.len() {
                    return Err(err(
                        e.line,
                        "box",
                        format!("dimension {dim} outside 1..={}", full.len()),
                    ));
                }
                full[dim - 1] = (lo, hi);
            }
            let b = RegionBox::new(full, value);
            RegionSpec::new(vec![b.clone()], 0.5)
                .validate(&grid)
                .map_err(|x| err(e.line, "box", x.to_string()))?;
            parsed.push(b);
        }
        cfg.regions.boxes = parsed;
    }
    if let Some((v, _)) = real("mu")? {
        cfg.mu = v;
    }
    if let Some(e) = scalars.get("beta1") {
        cfg.beta1 = parse_beta1(&e.value)
            .ok_or_else(|| err(e.line, "beta1", "expected a number or `uniform(lo, hi)` with lo <= hi"))?;
    }
    for key in ["var1", "var2"] {
        if let Some((v, line)) = real(key)? {
            check(v > 0.0, line, key, "must be positive")?;
            if key == "var1" {
                cfg.var1 = v;
            } else {
                cfg.var2 = v;
            }
        }
    }
    for key in ["n1", "n2"] {
        if let Some((v, line)) = integer(key)? {
            check(v >= 2, line, key, &format!("{key} must be ≥ 2"))?;
            if key == "n1" {
                cfg.n1 = v as usize;
            } else {
                cfg.n2 = v as usize;
            }
        }
    }
    if let Some((v, line)) = real("alpha")? {
        check(
            v > 0.0 && v < 1.0,
            line,
            "alpha",
            &format!("alpha must lie in (0,1), got {v}"),
        )?;
        cfg.alpha = v;
    }
    if let Some((v, line)) = integer("replications")? {
        check(v >= 1, line, "replications", "must be at least 1")?;
        cfg.replications = v as usize;
    }
    if let Some((v, _)) = integer("seed")? {
        cfg.seed = v;
    }
    if let Some(e) = scalars.get("methods") {
        cfg.methods = parse_methods(&e.value).map_err(|m| err(e.line, "methods", m))?;
    }
    let sweep_param = match scalars.get("sweep") {
        None => None,
        Some(e) => match e.value.as_str() {
            "mu" => Some(SweepParam::Mu),
            "region_pi" => Some(SweepParam::RegionPi),
            "none" => None,
            other => {
                return Err(err(
                    e.line,
                    "sweep",
                    format!("unknown sweep `{other}` (expected mu or region_pi)"),
                ))
            }
        },
    };
    if let Some(param) = sweep_param {
        let values = match scalars.get("sweep_values") {
            None => param.default_values(),
            Some(e) => e
                .value
                .split(',')
                .map(|v| {
                    parse_real(v)
                        .ok_or_else(|| err(e.line, "sweep_values", format!("`{}` is not a finite number", v.trim())))
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        if param == SweepParam::RegionPi {
            if let Some(bad) = values.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
                let line = scalars.get("sweep_values").map_or(scalars["sweep"].line, |e| e.line);
                return Err(err(line, "sweep_values", format!("region_pi value {bad} not in (0,1)")));
            }
        }
        cfg.sweep = Some(Sweep { param, values });
        // sweep scenarios redraw beta1 per replication unless set explicitly
        if !scalars.contains_key("beta1") {
            cfg = cfg.with_uniform_beta1();
        }
    } else if let Some(e) = scalars.get("sweep_values") {
        return Err(err(e.line, "sweep_values", "set `sweep` to use sweep values"));
    }
    if let Some((v, line)) = real("xi")? {
        check(v > 0.0 && v < 0.5, line, "xi", "must lie in (0, 0.5)")?;
        cfg.xi = v;
    }
    if let Some((v, line)) = real("tau")? {
        check(v > 0.0 && v < 1.0, line, "tau", "must lie in (0,1)")?;
        cfg.tau = Some(v);
    }
    for key in ["hs", "hu"] {
        if let Some((v, line)) = real(key)? {
            check(v > 0.0, line, key, "must be positive")?;
            if key == "hs" {
                cfg.h_s = Some(v);
            } else {
                cfg.h_u = Some(v);
            }
        }
    }
    if let Some((v, line)) = real("rho")? {
        check(v.abs() < 1.0, line, "rho", "must satisfy |rho| < 1")?;
        cfg.rho = Some(v);
    }
    if let Some((v, line)) = integer("gap_groups")? {
        check(v >= 1, line, "gap_groups", "must be at least 1")?;
        cfg.gap_groups = v as usize;
    }
    for key in ["cv_hs_points", "cv_hu_points", "cv_max_targets", "cv_max_pairs"] {
        if let Some((v, line)) = integer(key)? {
            check(v >= 1, line, key, "must be at least 1")?;
            let v = v as usize;
            match key {
                "cv_hs_points" => cfg.cv.hs_points = v,
                "cv_hu_points" => cfg.cv.hu_points = v,
                "cv_max_targets" => cfg.cv.max_targets = v,
                _ => cfg.cv.max_pairs = v,
            }
        }
    }
    let write_decisions = match scalars.get("write_decisions") {
        None => false,
        Some(e) => parse_bool(&e.value).ok_or_else(|| err(e.line, "write_decisions", "expected true or false"))?,
    };
    cfg.validate().map_err(|e| err(0, "", e.to_string()))?;
    Ok(SimulationConfig {
        experiment: cfg,
        write_decisions,
    })
}
