//! Config-driven experiments emitting JSON-lines metrics.
//!
//! A config names the experiment, the space, experiment parameters, the trial
//! count and a seed. Every trial derives its own seed from the config's, runs
//! independently (in parallel), and yields one record; the records are written
//! in trial order followed by a `{"summary": ...}` line. Output bytes depend
//! only on the config.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::emd::{default_params, run_emd_protocol, run_interval_scaling, IntervalScaling, DEFAULT_NUM_HASHES};
use crate::error::{invalid, ReconError, Result};
use crate::gap::{run_gap_lowd, run_gap_protocol, tags as gap_tags, GapOutcome, GapParams, DEFAULT_KEY_CONSTANT};
use crate::geometry::{emd, raw_distance, GridSpec, Norm, PointSet};
use crate::harness::peel_sim::{peel_trial, summarize, EdgeSampler, PeelTrial};
use crate::harness::planted::{generate_emd_instance_with, generate_gap_instance, perturb, uniform_point, PlantedGapInstance};
use crate::hashing::lsh::{collision_estimate, LshKind, MlshFamilySpec};
use crate::hashing::mix::{derive_path, derive_seed, stream};
use crate::iblt::Iblt;
use crate::riblt::riblt_cell_bytes;
use crate::transport::Transport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Emd,
    Gap,
    GapLowd,
    IbltLoad,
    LshCalibrate,
    PeelSim,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Emd => "emd",
            Experiment::Gap => "gap",
            Experiment::GapLowd => "gap-lowd",
            Experiment::IbltLoad => "iblt-load",
            Experiment::LshCalibrate => "lsh-calibrate",
            Experiment::PeelSim => "peel-sim",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub d: usize,
    #[serde(default = "one")]
    pub delta: u32,
    pub norm: Norm,
}

fn one() -> u32 {
    1
}

impl SpaceConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.delta, self.d, self.norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub space: SpaceConfig,
    #[serde(default)]
    pub params: Value,
    pub trials: usize,
    pub seed: u64,
    /// Failure rate above which the run counts as failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_ceiling: Option<f64>,
}

fn config_error(e: serde_path_to_error::Error<serde_json::Error>, prefix: &str) -> ReconError {
    let path = e.path().to_string();
    let path = match (prefix.is_empty(), path.as_str()) {
        (true, _) => path,
        (false, ".") => prefix.to_string(),
        (false, p) => format!("{prefix}.{p}"),
    };
    ReconError::Config { path, msg: e.into_inner().to_string() }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| config_error(e, ""))?;
    if let Some(c) = cfg.failure_ceiling {
        if !(0.0..=1.0).contains(&c) {
            return Err(ReconError::Config { path: "failureCeiling".into(), msg: "must lie in [0, 1]".into() });
        }
    }
    cfg.space.grid().map_err(|e| ReconError::Config { path: "space".into(), msg: e.to_string() })?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?)
}

fn params<T: DeserializeOwned>(cfg: &ExperimentConfig) -> Result<T> {
    let v = if cfg.params.is_null() { json!({}) } else { cfg.params.clone() };
    serde_path_to_error::deserialize(v).map_err(|e| config_error(e, "params"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EmdMode {
    /// Unknown distance range: the default parameter choice.
    #[default]
    Default,
    /// Known range split into ratio-2 slices.
    Interval,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct EmdExp {
    n: usize,
    k: usize,
    #[serde(default = "default_noise")]
    noise_radius: f64,
    #[serde(default = "one_f64")]
    noisy_fraction: f64,
    far_scale: f64,
    #[serde(default)]
    mode: EmdMode,
    d1: Option<f64>,
    d2: Option<f64>,
    max_dist: Option<f64>,
    #[serde(default = "one_f64")]
    width_factor: f64,
    #[serde(default = "default_q")]
    num_hashes: usize,
}

fn default_noise() -> f64 {
    1.0
}

fn one_f64() -> f64 {
    1.0
}

fn default_q() -> usize {
    DEFAULT_NUM_HASHES
}

fn default_key_constant() -> f64 {
    DEFAULT_KEY_CONSTANT
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct GapExp {
    n: usize,
    k: usize,
    r1: f64,
    r2: f64,
    epsilon: f64,
    family: Option<LshKind>,
    width: Option<f64>,
    #[serde(default = "default_key_constant")]
    key_constant: f64,
    #[serde(default = "default_q")]
    num_hashes: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct GapLowdExp {
    n: usize,
    k: usize,
    r1: f64,
    r2: f64,
    #[serde(default = "default_key_constant")]
    key_constant: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct IbltExp {
    m: usize,
    #[serde(default = "default_q")]
    q: usize,
    keys: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct LshExp {
    family: LshKind,
    width: f64,
    #[serde(default = "default_draws")]
    draws: u64,
    max_distance: f64,
}

fn default_draws() -> u64 {
    10_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct PeelExp {
    m: usize,
    c: f64,
    #[serde(default = "default_q")]
    q: usize,
    #[serde(default)]
    sampler: EdgeSampler,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: Experiment,
    pub records: Vec<Value>,
    pub summary: Value,
    pub failures: usize,
    pub trials: usize,
    pub ceiling_exceeded: bool,
}

impl ExperimentReport {
    pub fn failure_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.failures as f64 / self.trials as f64
        }
    }

    pub fn write_metrics<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r).expect("values serialize"))?;
        }
        writeln!(out, "{}", json!({ "summary": self.summary }))?;
        Ok(())
    }

    pub fn metrics_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_metrics(&mut buf).expect("writing to memory");
        buf
    }
}

pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_path(seed, &[stream::TRIAL, trial as u64])
}

fn run_trials<F>(trials: usize, seed: u64, f: F) -> Result<Vec<(bool, Value)>>
where
    F: Fn(usize, u64) -> Result<(bool, Value)> + Sync,
{
    (0..trials).into_par_iter().map(|t| f(t, trial_seed(seed, t))).collect()
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn field(rows: &[(bool, Value)], name: &str) -> Vec<f64> {
    rows.iter().filter_map(|(_, v)| v.get(name).and_then(Value::as_f64)).collect()
}

fn is_protocol_failure<T>(r: &Result<T>) -> bool {
    matches!(r, Err(ReconError::Protocol(_)))
}

/// Runs `cfg` and collects the records; nothing is written.
pub fn run_config(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let space = cfg.space.grid()?;
    let (rows, extra) = match cfg.experiment {
        Experiment::Emd => emd_experiment(cfg, &space)?,
        Experiment::Gap | Experiment::GapLowd => gap_experiment(cfg, &space)?,
        Experiment::IbltLoad => iblt_experiment(cfg)?,
        Experiment::LshCalibrate => lsh_experiment(cfg, &space)?,
        Experiment::PeelSim => peel_experiment(cfg)?,
    };
    let failures = rows.iter().filter(|(f, _)| *f).count();
    let trials = rows.len();
    let rate = if trials == 0 { 0.0 } else { failures as f64 / trials as f64 };
    let ceiling_exceeded = cfg.failure_ceiling.is_some_and(|c| rate > c);
    let mut summary = json!({
        "experiment": cfg.experiment.as_str(),
        "trials": trials,
        "seed": cfg.seed,
        "failures": failures,
        "failureRate": rate,
        "ceilingExceeded": ceiling_exceeded,
    });
    if let (Value::Object(s), Value::Object(e)) = (&mut summary, extra) {
        s.extend(e);
    }
    Ok(ExperimentReport {
        experiment: cfg.experiment,
        records: rows.into_iter().map(|(_, v)| v).collect(),
        summary,
        failures,
        trials,
        ceiling_exceeded,
    })
}

/// Loads, runs, and writes metrics to `out` (or returns them only when `None`).
pub fn run_experiment(config_path: impl AsRef<Path>, out: Option<&Path>) -> Result<ExperimentReport> {
    let cfg = load_config(config_path)?;
    let report = run_config(&cfg)?;
    if let Some(path) = out {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        report.write_metrics(&mut f)?;
        f.flush()?;
    }
    Ok(report)
}

type Rows = (Vec<(bool, Value)>, Value);

fn emd_experiment(cfg: &ExperimentConfig, space: &GridSpec) -> Result<Rows> {
    let p: EmdExp = params(cfg)?;
    let cell_bits = riblt_cell_bytes(space.dim()) as u64 * 8;
    let interval = match p.mode {
        EmdMode::Default => None,
        EmdMode::Interval => Some(IntervalScaling {
            k: p.k,
            d1: p.d1.unwrap_or(1.0),
            d2: p.d2.unwrap_or(p.n as f64 * space.diameter()),
            max_dist: p.max_dist.unwrap_or(space.diameter()),
            num_hashes: p.num_hashes,
            width_factor: p.width_factor,
        }),
    };
    let rows = run_trials(cfg.trials, cfg.seed, |t, ts| {
        let inst = generate_emd_instance_with(
            space,
            p.n,
            p.k,
            p.noise_radius,
            p.noisy_fraction,
            p.far_scale,
            derive_seed(ts, 0),
        )?;
        let shared = derive_seed(ts, 1);
        let bob_seed = derive_path(ts, &[stream::BOB_PRIVATE]);
        let mut tr = Transport::new();
        let (result, predicted, levels) = match &interval {
            None => {
                let params = default_params(space, p.n, p.k, shared)?;
                let predicted = params.levels() as u64 * params.table_cells() as u64 * cell_bits;
                let r = run_emd_protocol(&inst.s_a, &inst.s_b, &params, bob_seed, &mut tr).map(|o| (o, None));
                (r, predicted, params.levels())
            }
            Some(is) => {
                let all = is.all_params(space, shared)?;
                let predicted =
                    all.iter().map(|q| q.levels() as u64 * q.table_cells() as u64 * cell_bits).sum();
                let r = run_interval_scaling(&inst.s_a, &inst.s_b, is, shared, bob_seed, &mut tr)
                    .map(|o| (o.outcome, Some(o.interval)));
                (r, predicted, all.len())
            }
        };
        if result.is_err() && !is_protocol_failure(&result) {
            return result.map(|_| unreachable!());
        }
        let emd_in = emd(space, &inst.s_a, &inst.s_b)?;
        let bound = inst.planted_emd_k_bound;
        let (failed, emd_out, level) = match result {
            Ok((out, slice)) => {
                let e = emd(space, &inst.s_a, &out.output)?;
                (false, Some(e), Some(slice.unwrap_or(out.level)))
            }
            Err(_) => (true, None, None),
        };
        let ratio = emd_out.filter(|_| bound > 0.0).map(|e| e / bound);
        Ok((
            failed,
            json!({
                "trial": t,
                "failed": failed,
                "emdOut": emd_out,
                "emdIn": emd_in,
                "plantedBound": bound,
                "ratio": ratio,
                "bitsSent": tr.transcript().total_bits(),
                "predictedBits": predicted,
                "iStar": level,
                "levels": levels,
            }),
        ))
    })?;
    let ok: Vec<&Value> = rows.iter().filter(|(f, _)| !f).map(|(_, v)| v).collect();
    let improved = ok
        .iter()
        .filter(|v| v["emdOut"].as_f64().unwrap_or(f64::INFINITY) <= v["emdIn"].as_f64().unwrap_or(0.0))
        .count();
    let extra = json!({
        "medianRatio": median(field(&rows, "ratio")),
        "meanBits": mean(field(&rows, "bitsSent")),
        "improvedFraction": if ok.is_empty() { None } else { Some(improved as f64 / ok.len() as f64) },
    });
    Ok((rows, extra))
}

/// Whether every point of `s_a` lies strictly within `r2` of `output`.
pub fn gap_property_holds(inst: &PlantedGapInstance, output: &PointSet) -> bool {
    let norm = output.space().norm();
    inst.s_a.iter().all(|a| output.iter().any(|b| raw_distance(norm, a.coords(), b.coords()) < inst.r2))
}

fn gap_record(t: usize, inst: &PlantedGapInstance, result: Result<GapOutcome>, tr: &Transport) -> Result<(bool, Value)> {
    let space = inst.s_a.space();
    let baseline = (inst.s_a.len() * space.dim()) as u64 * space.coord_bits() as u64;
    let bits = tr.transcript().total_bits();
    let round3 = tr.transcript().bits_with_tag(gap_tags::KEYS);
    let round4 = tr.transcript().bits_with_tag(gap_tags::ELEMENTS);
    let out = match result {
        Ok(o) => o,
        Err(e @ ReconError::Protocol(_)) => {
            return Ok((
                true,
                json!({ "trial": t, "failed": true, "error": e.to_string(), "bitsSent": bits, "baselineBits": baseline }),
            ))
        }
        Err(e) => return Err(e),
    };
    let holds = gap_property_holds(inst, &out.output);
    let far_sent = inst.far_indices.iter().filter(|i| out.far_indices.binary_search(i).is_ok()).count();
    let far = inst.far_indices.len();
    Ok((
        !holds,
        json!({
            "trial": t,
            "failed": !holds,
            "gapHolds": holds,
            "farCount": far,
            "farSent": far_sent,
            "closeSent": out.far_indices.len() - far_sent,
            "farRecall": if far == 0 { 1.0 } else { far_sent as f64 / far as f64 },
            "bitsSent": bits,
            "round3Bits": round3,
            "round4Bits": round4,
            "baselineBits": baseline,
            "retries": out.retries,
            "keysRequested": out.keys_requested,
        }),
    ))
}

fn gap_experiment(cfg: &ExperimentConfig, space: &GridSpec) -> Result<Rows> {
    let rows = if cfg.experiment == Experiment::GapLowd {
        let p: GapLowdExp = params(cfg)?;
        run_trials(cfg.trials, cfg.seed, |t, ts| {
            let inst = generate_gap_instance(space, p.n, p.k, p.r1, p.r2, derive_seed(ts, 0))?;
            let mut tr = Transport::new();
            let r = run_gap_lowd(&inst.s_a, &inst.s_b, p.r1, p.r2, p.key_constant, p.k, derive_seed(ts, 1), &mut tr);
            gap_record(t, &inst, r, &tr)
        })?
    } else {
        let p: GapExp = params(cfg)?;
        let kind = p.family.unwrap_or(match space.norm() {
            Norm::Hamming => LshKind::HammingBit,
            Norm::L1 => LshKind::GridL1,
            Norm::L2 => LshKind::PstableL2,
        });
        let width = match (kind, p.width) {
            (_, Some(w)) => w,
            (LshKind::HammingBit, None) => space.dim() as f64,
            _ => return Err(ReconError::Config { path: "params.width".into(), msg: "required for this family".into() }),
        };
        let family = MlshFamilySpec::new(kind, width, *space)?;
        GapParams::new(p.r1, p.r2, p.epsilon, family, p.n, p.key_constant, 0)?.with_num_hashes(p.num_hashes)?;
        run_trials(cfg.trials, cfg.seed, |t, ts| {
            let inst = generate_gap_instance(space, p.n, p.k, p.r1, p.r2, derive_seed(ts, 0))?;
            let params = GapParams::new(p.r1, p.r2, p.epsilon, family, p.n, p.key_constant, derive_seed(ts, 1))?
                .with_num_hashes(p.num_hashes)?;
            let mut tr = Transport::new();
            let r = run_gap_protocol(&inst.s_a, &inst.s_b, &params, p.k, &mut tr);
            gap_record(t, &inst, r, &tr)
        })?
    };
    let held = rows.iter().filter(|(_, v)| v["gapHolds"].as_bool() == Some(true)).count();
    let extra = json!({
        "gapRate": if rows.is_empty() { None } else { Some(held as f64 / rows.len() as f64) },
        "meanFarRecall": mean(field(&rows, "farRecall")),
        "meanBits": mean(field(&rows, "bitsSent")),
        "meanRound3Bits": mean(field(&rows, "round3Bits")),
    });
    Ok((rows, extra))
}

fn iblt_experiment(cfg: &ExperimentConfig) -> Result<Rows> {
    let p: IbltExp = params(cfg)?;
    Iblt::new(p.m, p.q, 0)?;
    let rows = run_trials(cfg.trials, cfg.seed, |t, ts| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ts, 0));
        let mut keys = std::collections::BTreeSet::new();
        while keys.len() < p.keys {
            keys.insert(rng.random::<u64>());
        }
        let mut table = Iblt::new(p.m, p.q, derive_seed(ts, 1))?;
        for &k in &keys {
            table.insert(k);
        }
        let ok = match table.decode() {
            Ok(diff) => diff.deleted_only.is_empty() && diff.inserted_only.iter().eq(keys.iter()),
            Err(_) => false,
        };
        Ok((!ok, json!({ "trial": t, "failed": !ok, "keys": p.keys, "cells": p.m })))
    })?;
    let load = p.keys as f64 / p.m as f64;
    Ok((rows, json!({ "load": load })))
}

fn lsh_experiment(cfg: &ExperimentConfig, space: &GridSpec) -> Result<Rows> {
    let p: LshExp = params(cfg)?;
    let family = match p.family {
        LshKind::OnesidedGrid => MlshFamilySpec::onesided(*space, p.width)?,
        kind => MlshFamilySpec::new(kind, p.width, *space)?,
    };
    if p.draws == 0 {
        return Err(ReconError::Config { path: "params.draws".into(), msg: "must be positive".into() });
    }
    let rows = run_trials(cfg.trials, cfg.seed, |t, ts| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ts, 0));
        let x = uniform_point(&mut rng, space);
        let y = perturb(&mut rng, space, &x, p.max_distance)
            .ok_or_else(|| ReconError::Generation("perturbation kept leaving the grid".into()))?;
        let exact = family.exact_collision_probability(&x, &y)?;
        let empirical = collision_estimate(&family, &x, &y, p.draws, derive_seed(ts, 1))?;
        let se = (exact * (1.0 - exact) / p.draws as f64).sqrt();
        let within = (empirical - exact).abs() <= 3.0 * se + 1.0 / p.draws as f64;
        Ok((
            !within,
            json!({
                "trial": t,
                "failed": !within,
                "distance": raw_distance(space.norm(), x.coords(), y.coords()),
                "exact": exact,
                "empirical": empirical,
                "stdErr": se,
            }),
        ))
    })?;
    Ok((rows, json!({ "draws": p.draws, "width": family.width() })))
}

fn peel_experiment(cfg: &ExperimentConfig) -> Result<Rows> {
    let p: PeelExp = params(cfg)?;
    if p.q < 2 || p.m < p.q || !(p.c.is_finite() && p.c >= 0.0) {
        return Err(invalid("peel simulation needs 2 <= q <= m and c >= 0"));
    }
    let trials: Vec<PeelTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| peel_trial(p.m, p.c, p.q, p.sampler, trial_seed(cfg.seed, t)))
        .collect();
    let stats = summarize(&trials);
    let rows = trials
        .iter()
        .enumerate()
        .map(|(t, r)| {
            (
                !r.complete,
                json!({ "trial": t, "failed": !r.complete, "totalError": r.total_error, "peeled": r.peeled }),
            )
        })
        .collect();
    Ok((rows, json!({ "meanError": stats.mean, "p95Error": stats.p95, "maxError": stats.max })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        parse_config(text).unwrap()
    }

    #[test]
    fn zero_trials_gives_summary_only() {
        let c = cfg(r#"{"experiment":"peel-sim","space":{"d":1,"norm":"l1"},"params":{"m":64,"c":0.1},"trials":0,"seed":1}"#);
        let r = run_config(&c).unwrap();
        assert!(r.records.is_empty());
        let text = String::from_utf8(r.metrics_bytes()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("{\"summary\""));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = parse_config(r#"{"experiment":"emd","space":{"d":"x","norm":"l1"},"trials":1,"seed":1}"#).unwrap_err();
        match err {
            ReconError::Config { path, .. } => assert_eq!(path, "space.d"),
            e => panic!("{e}"),
        }
        let c = cfg(r#"{"experiment":"iblt-load","space":{"d":1,"norm":"l1"},"params":{"m":30,"kees":3},"trials":1,"seed":1}"#);
        match run_config(&c).unwrap_err() {
            ReconError::Config { path, .. } => assert!(path.starts_with("params"), "{path}"),
            e => panic!("{e}"),
        }
        assert!(parse_config(r#"{"experiment":"nope","space":{"d":1,"norm":"l1"},"trials":1,"seed":1}"#).is_err());
    }

    #[test]
    fn emd_record_schema() {
        let c = cfg(r#"{"experiment":"emd","space":{"d":8,"norm":"hamming"},"params":{"n":12,"k":1,"farScale":2},"trials":2,"seed":3}"#);
        let r = run_config(&c).unwrap();
        for rec in &r.records {
            for key in ["failed", "emdOut", "plantedBound", "bitsSent", "iStar"] {
                assert!(rec.get(key).is_some(), "missing {key}");
            }
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let text = r#"{"experiment":"iblt-load","space":{"d":1,"norm":"l1"},"params":{"m":99,"keys":10},"trials":20,"seed":8,"failureCeiling":0.5}"#;
        let a = run_config(&cfg(text)).unwrap().metrics_bytes();
        let b = run_config(&cfg(text)).unwrap().metrics_bytes();
        assert_eq!(a, b);
    }

    #[test]
    fn ceiling_is_enforced() {
        let c = cfg(r#"{"experiment":"iblt-load","space":{"d":1,"norm":"l1"},"params":{"m":9,"keys":40},"trials":5,"seed":8,"failureCeiling":0.1}"#);
        let r = run_config(&c).unwrap();
        assert!(r.ceiling_exceeded);
        assert_eq!(r.failure_rate(), 1.0);
    }
}
