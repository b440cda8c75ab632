//! Flat `key = value` experiment files.
//!
//! One assignment per line; `#` starts a comment. Unknown or repeated keys
//! are errors. Keys and their types:
//!
//! | key | type | default |
//! |-----|------|---------|
//! | `family` | `generalized_normal`, `nested_uniform`, `shifted_uniform` | required |
//! | `s` | real, scale or shrink factor | 1 |
//! | `t` | real, shift | 0 |
//! | `q` | real, tail power | 2 |
//! | `methods` | comma list of `lis:forward:geometric`, `ais:bridged:optimal`, ... | required |
//! | `n` | LIS ladder steps | 4 |
//! | `k` | LIS chain length `K_j`, every stage | 50 |
//! | `etas` | comma list, custom LIS schedule (overrides `n`) | `j/n` |
//! | `ais_n` | AIS steps, or `auto` for cost matching | `auto` |
//! | `ais_etas` | comma list, custom AIS schedule (overrides `ais_n`) | `j/n` |
//! | `stage_bridge` | stage bridge of bridged LIS: `geometric` or `optimal` | `geometric` |
//! | `runs` | runs per estimate, `M` | 20 |
//! | `bridged_runs` | runs per side of a bridged estimate, `Mbar` | `runs / 2` |
//! | `replications` | positive integer | 200 |
//! | `master_seed` | u64 | 1 |
//! | `kernel` | `metropolis` or `independence` | `metropolis` |
//! | `metropolis_scale` | `auto` (`s^eta`) or a constant standard deviation | `auto` |
//! | `metropolis_updates` | elementary updates per transition | 1 |
//! | `draw_cost` | cost units per exact draw | 1 |
//! | `step_cost` | cost units per elementary kernel update | 1 |
//! | `budget` | scan budget `C` in cost units | `(n + 1) k` |
//! | `scan_n` | comma list of ladder sizes for the equal-budget scan | empty |
//! | `threads` | worker threads, 0 for all cores | 0 |
//!
//! A method is `estimator:direction[:bridge]`. For forward and reverse LIS
//! the bridge is the stage bridge (`optimal` uses the true stage ratios);
//! for bridged estimates it is the top-level combination (`optimal`
//! iterates `r`). AIS forward and reverse take no bridge.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::{BridgeKind, Estimator, ExperimentSpec, FamilySpec, KernelSpec, MethodDirection, MethodSpec};
use crate::error::{Error, Result};

const KEYS: &[&str] = &[
    "family",
    "s",
    "t",
    "q",
    "methods",
    "n",
    "k",
    "etas",
    "ais_n",
    "ais_etas",
    "stage_bridge",
    "runs",
    "bridged_runs",
    "replications",
    "master_seed",
    "kernel",
    "metropolis_scale",
    "metropolis_updates",
    "draw_cost",
    "step_cost",
    "budget",
    "scan_n",
    "threads",
];

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::config("methods", format!("`{s}`: {m}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let estimator = match parts.first().copied() {
            Some("lis") => Estimator::Lis,
            Some("ais") => Estimator::Ais,
            _ => return Err(bad("estimator must be lis or ais")),
        };
        let direction = match parts.get(1).copied() {
            Some("forward") => MethodDirection::Forward,
            Some("reverse") => MethodDirection::Reverse,
            Some("bridged") => MethodDirection::Bridged,
            _ => return Err(bad("direction must be forward, reverse or bridged")),
        };
        let bridge = match parts.get(2).copied() {
            None if estimator == Estimator::Ais && direction != MethodDirection::Bridged => BridgeKind::None,
            None => BridgeKind::Geometric,
            Some("geometric") => BridgeKind::Geometric,
            Some("optimal") => BridgeKind::Optimal,
            Some(_) => return Err(bad("bridge must be geometric or optimal")),
        };
        if parts.len() > 3 {
            return Err(bad("too many fields"));
        }
        if estimator == Estimator::Ais && direction != MethodDirection::Bridged && bridge != BridgeKind::None {
            return Err(bad("one-sided AIS takes no bridge"));
        }
        Ok(MethodSpec {
            estimator,
            direction,
            bridge,
        })
    }
}

fn bridge_kind(key: &str, v: &str) -> Result<BridgeKind> {
    match v {
        "geometric" => Ok(BridgeKind::Geometric),
        "optimal" => Ok(BridgeKind::Optimal),
        _ => Err(Error::config(key, format!("`{v}` is not geometric or optimal"))),
    }
}

/// Parses an experiment file.
pub fn parse_spec(text: &str) -> Result<ExperimentSpec> {
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::config(k, "unknown key"));
        }
        if kv.insert(k, v).is_some() {
            return Err(Error::config(k, "given more than once"));
        }
    }
    let get = |k: &str| kv.get(k).copied();
    let num = |k: &str, default: f64| get(k).map_or(Ok(default), |v| parse_value::<f64>(k, v));
    let int = |k: &str, default: usize| get(k).map_or(Ok(default), |v| parse_value::<usize>(k, v));

    let family = match get("family").ok_or_else(|| Error::config("family", "required"))? {
        "generalized_normal" => FamilySpec::GeneralizedNormal {
            s: num("s", 1.0)?,
            t: num("t", 0.0)?,
            q: num("q", 2.0)?,
        },
        "nested_uniform" => FamilySpec::NestedUniform { s: num("s", 0.1)? },
        "shifted_uniform" => FamilySpec::ShiftedUniform { t: num("t", 0.0)? },
        other => return Err(Error::config("family", format!("unknown family `{other}`"))),
    };
    let methods = get("methods")
        .ok_or_else(|| Error::config("methods", "required"))?
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(MethodSpec::from_str)
        .collect::<Result<Vec<_>>>()?;
    let runs = int("runs", 20)?;
    let kernel = match get("kernel").unwrap_or("metropolis") {
        "metropolis" => KernelSpec::Metropolis {
            scale: match get("metropolis_scale").unwrap_or("auto") {
                "auto" => None,
                v => Some(parse_value("metropolis_scale", v)?),
            },
            updates: int("metropolis_updates", 1)? as u32,
        },
        "independence" => KernelSpec::Independence,
        other => return Err(Error::config("kernel", format!("unknown kernel `{other}`"))),
    };
    let spec = ExperimentSpec {
        family,
        methods,
        n: int("n", 4)?,
        k: int("k", 50)?,
        etas: get("etas").map(|v| parse_list("etas", v)).transpose()?,
        ais_n: match get("ais_n").unwrap_or("auto") {
            "auto" => None,
            v => Some(parse_value("ais_n", v)?),
        },
        ais_etas: get("ais_etas").map(|v| parse_list("ais_etas", v)).transpose()?,
        stage_bridge: get("stage_bridge").map_or(Ok(BridgeKind::Geometric), |v| bridge_kind("stage_bridge", v))?,
        runs,
        bridged_runs: int("bridged_runs", runs / 2)?,
        replications: int("replications", 200)?,
        master_seed: get("master_seed").map_or(Ok(1), |v| parse_value("master_seed", v))?,
        kernel,
        draw_cost: num("draw_cost", 1.0)?,
        step_cost: num("step_cost", 1.0)?,
        budget: get("budget").map(|v| parse_value("budget", v)).transpose()?,
        scan_n: get("scan_n").map_or(Ok(Vec::new()), |v| parse_list("scan_n", v))?,
        threads: int("threads", 0)?,
    };
    spec.validate()?;
    Ok(spec)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// Writes a spec back in the file format; `parse_spec` of the result gives
/// the same spec.
pub fn format_spec(spec: &ExperimentSpec) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    match spec.family {
        FamilySpec::GeneralizedNormal { s, t, q } => {
            put("family", "generalized_normal".into());
            put("s", s.to_string());
            put("t", t.to_string());
            put("q", q.to_string());
        }
        FamilySpec::NestedUniform { s } => {
            put("family", "nested_uniform".into());
            put("s", s.to_string());
        }
        FamilySpec::ShiftedUniform { t } => {
            put("family", "shifted_uniform".into());
            put("t", t.to_string());
        }
    }
    put("methods", join(&spec.methods.iter().map(MethodSpec::id).collect::<Vec<_>>()));
    put("n", spec.n.to_string());
    put("k", spec.k.to_string());
    if let Some(e) = &spec.etas {
        put("etas", join(e));
    }
    put("ais_n", spec.ais_n.map_or("auto".into(), |n| n.to_string()));
    if let Some(e) = &spec.ais_etas {
        put("ais_etas", join(e));
    }
    put("stage_bridge", spec.stage_bridge.as_str().into());
    put("runs", spec.runs.to_string());
    put("bridged_runs", spec.bridged_runs.to_string());
    put("replications", spec.replications.to_string());
    put("master_seed", spec.master_seed.to_string());
    match spec.kernel {
        KernelSpec::Metropolis { scale, updates } => {
            put("kernel", "metropolis".into());
            put("metropolis_scale", scale.map_or("auto".into(), |s| s.to_string()));
            put("metropolis_updates", updates.to_string());
        }
        KernelSpec::Independence => put("kernel", "independence".into()),
    }
    put("draw_cost", spec.draw_cost.to_string());
    put("step_cost", spec.step_cost.to_string());
    if let Some(b) = spec.budget {
        put("budget", b.to_string());
    }
    if !spec.scan_n.is_empty() {
        put("scan_n", join(&spec.scan_n));
    }
    put("threads", spec.threads.to_string());
    out
}
