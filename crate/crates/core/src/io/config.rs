//! Flat `key = value` run configuration covering search, solver, detection
//! and pipeline settings. Lines starting with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::detect::DetectConfig;
use crate::error::{Error, Result};
use crate::pipeline::{ExecutionMode, FallbackPolicy, PipelineConfig};
use crate::solver::SolverConfig;

/// Relative tolerance for the span dimension of fiber sets.
pub const DEFAULT_RANK_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub detect: DetectConfig,
    pub rank_tol: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn for_value_range(range: f64) -> Self {
        Self {
            pipeline: PipelineConfig::for_value_range(range),
            detect: DetectConfig::for_value_range(range),
            rank_tol: DEFAULT_RANK_TOL,
            seed: 0,
        }
    }

    /// Defaults for `range`, overridden by the keys in `text`.
    pub fn parse(text: &str, range: f64) -> Result<Self> {
        let mut cfg = Self::for_value_range(range);
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        // the time count is only known with data; checked again by the pipeline
        let s = &self.pipeline.search;
        s.validate(s.patch_width.max(1))?;
        self.pipeline.solver.validate()?;
        self.pipeline.halrtc.validate()?;
        self.detect.validate()?;
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::Config(format!("rank_tol {} outside (0, 1)", self.rank_tol)));
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.pipeline;
        let s = &p.search;
        let mut v = vec![
            ("search.patch_width", s.patch_width.to_string()),
            ("search.radius", s.radius.to_string()),
            ("search.step", s.step.to_string()),
            ("search.threshold", s.threshold.to_string()),
            ("search.min_group", s.min_group.to_string()),
            ("search.min_overlap", s.min_overlap.to_string()),
        ];
        for (prefix, sc) in [("solver", &p.solver), ("halrtc", &p.halrtc)] {
            let keys: [&'static str; 5] = if prefix == "solver" {
                ["solver.alphas", "solver.beta", "solver.epsilon", "solver.tol", "solver.max_iter"]
            } else {
                ["halrtc.alphas", "halrtc.beta", "halrtc.epsilon", "halrtc.tol", "halrtc.max_iter"]
            };
            v.push((keys[0], join(&sc.alphas)));
            v.push((keys[1], sc.beta.to_string()));
            v.push((keys[2], join(&sc.epsilon)));
            v.push((keys[3], sc.tol.to_string()));
            v.push((keys[4], sc.max_iter.to_string()));
        }
        v.extend([
            ("pipeline.fallback", fallback_name(p.fallback).to_string()),
            ("pipeline.mode", mode_name(p.mode).to_string()),
            ("detect.step", self.detect.step.to_string()),
            ("detect.radius", self.detect.radius.to_string()),
            ("detect.majority", self.detect.majority.to_string()),
            ("rank_tol", self.rank_tol.to_string()),
            ("seed", self.seed.to_string()),
        ]);
        v
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            "search.patch_width" => p.search.patch_width = num(key, value)?,
            "search.radius" => p.search.radius = num(key, value)?,
            "search.step" => p.search.step = num(key, value)?,
            "search.threshold" => p.search.threshold = num(key, value)?,
            "search.min_group" => p.search.min_group = num(key, value)?,
            "search.min_overlap" => p.search.min_overlap = num(key, value)?,
            "pipeline.fallback" => {
                p.fallback = match value {
                    "defer-then-halrtc" => FallbackPolicy::DeferThenHalrtc,
                    "abort" => FallbackPolicy::Abort,
                    _ => return Err(bad(key, value)),
                }
            }
            "pipeline.mode" => {
                p.mode = match value {
                    "sequential" => ExecutionMode::Sequential,
                    "snapshot-parallel" => ExecutionMode::SnapshotParallel,
                    _ => return Err(bad(key, value)),
                }
            }
            "detect.step" => self.detect.step = num(key, value)?,
            "detect.radius" => self.detect.radius = num(key, value)?,
            "detect.majority" => self.detect.majority = num(key, value)?,
            "rank_tol" => self.rank_tol = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => {
                let (prefix, field) = key
                    .split_once('.')
                    .ok_or_else(|| Error::Config(format!("unknown key {key}")))?;
                let sc = match prefix {
                    "solver" => &mut p.solver,
                    "halrtc" => &mut p.halrtc,
                    _ => return Err(Error::Config(format!("unknown key {key}"))),
                };
                set_solver(sc, key, field, value)?;
            }
        }
        Ok(())
    }
}

fn set_solver(sc: &mut SolverConfig, key: &str, field: &str, value: &str) -> Result<()> {
    match field {
        "alphas" => sc.alphas = four(key, value, false)?,
        "epsilon" => sc.epsilon = four(key, value, true)?,
        "beta" => sc.beta = num(key, value)?,
        "tol" => sc.tol = num(key, value)?,
        "max_iter" => sc.max_iter = num(key, value)?,
        _ => return Err(Error::Config(format!("unknown key {key}"))),
    }
    Ok(())
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for {key}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

/// Four comma-separated numbers; a single number is replicated when `scalar_ok`.
fn four(key: &str, value: &str, scalar_ok: bool) -> Result<[f64; 4]> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|s| num(key, s.trim()))
        .collect::<Result<_>>()?;
    match parts.len() {
        4 => Ok([parts[0], parts[1], parts[2], parts[3]]),
        1 if scalar_ok => Ok([parts[0]; 4]),
        _ => Err(bad(key, value)),
    }
}

fn join(v: &[f64; 4]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn fallback_name(f: FallbackPolicy) -> &'static str {
    match f {
        FallbackPolicy::DeferThenHalrtc => "defer-then-halrtc",
        FallbackPolicy::Abort => "abort",
    }
}

fn mode_name(m: ExecutionMode) -> &'static str {
    match m {
        ExecutionMode::Sequential => "sequential",
        ExecutionMode::SnapshotParallel => "snapshot-parallel",
    }
}
