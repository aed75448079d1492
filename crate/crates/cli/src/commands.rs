use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lbac_core::checkpoint::{checkpoint_dir, list_checkpoints, CheckpointSet};
use lbac_core::clbf_validate::{
    check_decrease, check_level_separation, export_contour, rollout_eval, ContourTable, GridSpec,
    LearnedArtifacts, SamplePlan,
};
use lbac_core::clf_cbf_qp::run_baseline;
use lbac_core::config::{RunConfig, Validated};
use lbac_core::env2d::State;
use lbac_core::lbac::{train as run_training, EpisodeMetrics, Learner, TrainCallbacks, METRICS_CSV_HEADER};
use lbac_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{CheckpointArg, Common};

pub const CHECKPOINT_EVERY: usize = 100;
pub const METRICS_FILE: &str = "metrics.csv";

/// Evaluation streams, disjoint from the trainer's streams of the same seed.
const STREAM_VALIDATE: u64 = 16;
const STREAM_ROLLOUT: u64 = 17;

fn load_config(common: &Common) -> Result<(RunConfig, Validated)> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let v = cfg.validate()?;
    Ok((cfg, v))
}

fn eval_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn resolve_checkpoint(cfg: &RunConfig, arg: &CheckpointArg) -> Result<(PathBuf, CheckpointSet)> {
    let dir = match &arg.checkpoint {
        Some(d) => d.clone(),
        None => list_checkpoints(&cfg.output_dir)?
            .pop()
            .map(|(_, d)| d)
            .ok_or_else(|| Error::Checkpoint(format!("no checkpoints under {}", cfg.output_dir.display())))?,
    };
    let set = CheckpointSet::load(&dir)?;
    if set.sidecar.cfg_hash != cfg.hash() {
        eprintln!("note: {} was written under a different configuration", dir.display());
    }
    Ok((dir, set))
}

fn artifacts<'a>(set: &'a CheckpointSet, v: &Validated) -> LearnedArtifacts<'a> {
    LearnedArtifacts {
        theta: &set.theta,
        phi: &set.phi,
        action_bound: v.env.config().action_bound,
    }
}

/// Streams metrics rows and writes a checkpoint set every
/// `CHECKPOINT_EVERY` episodes.
struct Recorder {
    out: PathBuf,
    hash: String,
    metrics: BufWriter<File>,
    last_saved: usize,
}

impl TrainCallbacks for Recorder {
    fn on_episode(&mut self, m: &EpisodeMetrics, l: &Learner) -> Result<()> {
        writeln!(self.metrics, "{}", m.csv_row())?;
        let done = m.episode + 1;
        if done.is_multiple_of(CHECKPOINT_EVERY) {
            self.metrics.flush()?;
            CheckpointSet::from_learner(l, done, &self.hash).save(&checkpoint_dir(&self.out, done))?;
            self.last_saved = done;
            eprintln!(
                "episode {done}: cost {:.3}, lambda {:.4}, beta {:.4}",
                m.total_cost, m.lambda, m.beta
            );
        }
        Ok(())
    }
}

pub fn train(common: &Common) -> Result<u8> {
    let (cfg, v) = load_config(common)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml_string()?)?;
    let mut metrics = BufWriter::new(File::create(cfg.output_dir.join(METRICS_FILE))?);
    writeln!(metrics, "{METRICS_CSV_HEADER}")?;
    let mut rec = Recorder {
        out: cfg.output_dir.clone(),
        hash: cfg.hash(),
        metrics,
        last_saved: 0,
    };
    let result = run_training(&v.env, &cfg.train, cfg.seed, &mut rec);
    rec.metrics.flush()?;
    let outcome = result?;
    let done = outcome.metrics.len();
    if done != rec.last_saved {
        CheckpointSet::from_learner(&outcome.learner, done, &rec.hash).save(&checkpoint_dir(&cfg.output_dir, done))?;
    }
    println!("episodes: {done}");
    if let Some(r) = &outcome.stopped_by {
        println!("stopped early: decrease condition held (margin {:.4e} > {:.4e})", r.margin, r.ci_halfwidth);
    }
    println!("output: {}", cfg.output_dir.display());
    Ok(0)
}

pub fn validate(common: &Common, ckpt: &CheckpointArg) -> Result<u8> {
    let (cfg, v) = load_config(common)?;
    let (dir, set) = resolve_checkpoint(&cfg, ckpt)?;
    let art = artifacts(&set, &v);
    let vc = &cfg.validate;
    let mut rng = eval_rng(cfg.seed, STREAM_VALIDATE);
    let theorem = check_decrease(
        &v.env,
        &art,
        vc.n_rollouts,
        cfg.train.alpha4,
        vc.bootstrap_resamples,
        vc.deterministic,
        &mut rng,
    )?;
    let plan = SamplePlan::standard(&v.env, vc.level_safe_starts, vc.level_probes_per_obstacle, &mut rng)?;
    let level = check_level_separation(&v.env, &art, &plan, cfg.train.c_hat, &mut rng)?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("lemma1.json"), &v.lemma1)?;
    write_json(&cfg.output_dir.join("theorem.json"), &theorem)?;
    write_json(&cfg.output_dir.join("level_separation.json"), &level)?;

    println!("checkpoint: {}", dir.display());
    println!(
        "lemma 1: C = {} vs minimum {:.4} -> {}",
        v.lemma1.configured_c,
        v.lemma1.min_c,
        verdict(v.lemma1.satisfied)
    );
    println!(
        "decrease: lhs {:.4e}, rhs {:.4e}, ci half-width {:.4e} -> {}",
        theorem.lhs_estimate,
        theorem.rhs,
        theorem.ci_halfwidth,
        verdict(theorem.satisfied)
    );
    println!(
        "level separation: safe below {:.3}, unsafe at or above {:.3}",
        level.safe_below_chat_rate, level.unsafe_at_or_above_chat_rate
    );
    Ok(if v.lemma1.satisfied && theorem.satisfied { 0 } else { 1 })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "satisfied"
    } else {
        "not satisfied"
    }
}

pub fn contour(
    common: &Common,
    ckpt: &CheckpointArg,
    nx: Option<usize>,
    ny: Option<usize>,
    level: Option<f64>,
) -> Result<u8> {
    let (cfg, v) = load_config(common)?;
    let grid = GridSpec::covering(
        v.env.config(),
        nx.unwrap_or(cfg.validate.contour_nx),
        ny.unwrap_or(cfg.validate.contour_ny),
    );
    grid.validate(v.env.config())?;
    let level = level.unwrap_or(cfg.train.c_hat);
    if !level.is_finite() {
        return Err(Error::Config("contour level must be finite".into()));
    }
    let (_, set) = resolve_checkpoint(&cfg, ckpt)?;
    let table = export_contour(&artifacts(&set, &v), grid)?;
    let segs = table.level_segments(level);
    let stem = format!("contour_ep_{:06}", set.sidecar.episode);
    std::fs::create_dir_all(&cfg.output_dir)?;
    let values = cfg.output_dir.join(format!("{stem}.csv"));
    let lines = cfg.output_dir.join(format!("{stem}_level.csv"));
    std::fs::write(&values, table.to_csv())?;
    std::fs::write(&lines, ContourTable::segments_csv(&segs))?;
    let enclosed: Vec<bool> = v.env.config().obstacles.iter().map(|o| table.encloses(o, level)).collect();
    println!("values: {}", values.display());
    println!("level {level}: {} segments -> {}", segs.len(), lines.display());
    println!(
        "obstacles enclosed: {enclosed:?}; superlevel area {:.4}",
        table.superlevel_area(level)
    );
    Ok(0)
}

#[derive(Serialize)]
struct RolloutReport<'a> {
    starts: Vec<[f64; 2]>,
    deterministic: bool,
    summary: &'a lbac_core::clbf_validate::RolloutSummary,
}

pub fn rollout(common: &Common, ckpt: &CheckpointArg, cli_starts: &[[f64; 2]]) -> Result<u8> {
    let (cfg, v) = load_config(common)?;
    let mut rng = eval_rng(cfg.seed, STREAM_ROLLOUT);
    let given = if cli_starts.is_empty() {
        &cfg.validate.rollout_starts[..]
    } else {
        cli_starts
    };
    let (lb, ub) = (v.env.config().state_lb, v.env.config().state_ub);
    let starts: Vec<State> = if given.is_empty() {
        (0..cfg.validate.n_eval_starts)
            .map(|_| v.env.reset(&mut rng))
            .collect::<Result<_>>()?
    } else {
        given
            .iter()
            .map(|&[x, y]| {
                if (lb[0]..=ub[0]).contains(&x) && (lb[1]..=ub[1]).contains(&y) {
                    Ok(State::at(x, y))
                } else {
                    Err(Error::Config(format!("start ({x}, {y}) lies outside the state box")))
                }
            })
            .collect::<Result<_>>()?
    };
    let (_, set) = resolve_checkpoint(&cfg, ckpt)?;
    let det = cfg.validate.deterministic;
    let (trajs, summary) = rollout_eval(&v.env, &artifacts(&set, &v), &starts, det, &mut rng)?;
    let dir = cfg.output_dir.join("rollouts");
    std::fs::create_dir_all(&dir)?;
    for (k, t) in trajs.iter().enumerate() {
        std::fs::write(dir.join(format!("traj_{k:03}.csv")), t.to_csv())?;
    }
    let report = RolloutReport {
        starts: starts.iter().map(|s| s.position()).collect(),
        deterministic: det,
        summary: &summary,
    };
    write_json(&cfg.output_dir.join("rollout_summary.json"), &report)?;
    println!(
        "{} rollouts: reach rate {:.3}, violation rate {:.3}",
        summary.n, summary.reach_rate, summary.violation_rate
    );
    Ok(0)
}

pub fn baseline(common: &Common, grid_n: Option<usize>) -> Result<u8> {
    let (mut cfg, v) = load_config(common)?;
    if let Some(n) = grid_n {
        cfg.qp.grid_n = n;
        cfg.qp.validate()?;
    }
    let (trajs, summary) = run_baseline(&v.env, &cfg.qp)?;
    let dir = cfg.output_dir.join("baseline");
    std::fs::create_dir_all(&dir)?;
    for (k, t) in trajs.iter().enumerate() {
        std::fs::write(dir.join(format!("traj_{k:03}.csv")), t.to_csv())?;
    }
    write_json(&cfg.output_dir.join("baseline_summary.json"), &summary)?;
    println!(
        "{} starts: {} reached, {} stalled, {} violated, {} timed out",
        summary.n, summary.reached, summary.stalled, summary.violated, summary.timeout
    );
    Ok(0)
}
