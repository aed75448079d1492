use std::path::Path;
use std::process::{Command, Output};

use lbac_core::checkpoint::{checkpoint_dir, CheckpointSet, Sidecar};
use lbac_core::lbac::{Multipliers, TrainConfig};
use lbac_core::net::NetParams;

const SMALL: &[&str] = &[
    "--override",
    "train.hidden=[8, 8]",
    "--override",
    "train.batch=16",
    "--override",
    "train.learning_starts=16",
    "--override",
    "train.grad_steps_per_episode=3",
    "--override",
    "train.episodes_total=1",
];

fn lbac(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbac"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("lbac runs")
}

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(SMALL).copied().collect()
}

fn csv_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

fn zero_checkpoint(out: &Path) {
    let cfg = TrainConfig {
        hidden: vec![8, 8],
        ..TrainConfig::default()
    };
    let critic = NetParams::zeros(&cfg.critic_dims()).unwrap();
    CheckpointSet {
        theta: NetParams::zeros(&cfg.policy_dims()).unwrap(),
        phi: critic.clone(),
        phi_target: critic,
        sidecar: Sidecar {
            multipliers: Multipliers::new(1.0, 1.0),
            episode: 0,
            cfg_hash: String::new(),
        },
    }
    .save(&checkpoint_dir(out, 0))
    .unwrap();
}

#[test]
fn one_episode_gives_one_row_and_one_checkpoint_set() {
    let dir = tempfile::tempdir().unwrap();
    let o = lbac(&with_small(&["train"]), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&dir.path().join("metrics.csv")), 1);
    let sets: Vec<_> = std::fs::read_dir(dir.path().join("checkpoints")).unwrap().collect();
    assert_eq!(sets.len(), 1);
    assert!(CheckpointSet::load(&checkpoint_dir(dir.path(), 1)).is_ok());
    assert!(dir.path().join("config.toml").is_file());
}

#[test]
fn periodic_checkpoints_do_not_duplicate_the_final_set() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = with_small(&["train"]);
    args.extend(["--override", "train.episodes_total=200", "--override", "train.grad_steps_per_episode=0"]);
    let o = lbac(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["ep_000100", "ep_000200"]);
}

#[test]
fn training_abort_exits_3_with_episode() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = with_small(&["train"]);
    args.extend(["--override", "train.episodes_total=5", "--override", "train.lr_critic=1e300"]);
    let o = lbac(&args, dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("episode"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["train.gama=0.9", "train.gamma=1.0", "env.dt=-1", "train.hidden=oops"] {
        let o = lbac(&["train", "--override", bad], dir.path());
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
    let o = lbac(&["train", "--config", "/nonexistent.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_gamma_one_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    zero_checkpoint(dir.path());
    let o = lbac(&["validate", "--override", "train.gamma=1.0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_zero_checkpoint_is_not_satisfied() {
    let dir = tempfile::tempdir().unwrap();
    zero_checkpoint(dir.path());
    let o = lbac(&["validate", "--override", "validate.bootstrap_resamples=100"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let theorem: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("theorem.json")).unwrap()).unwrap();
    assert_eq!(theorem["satisfied"], false);
    for f in ["lemma1.json", "level_separation.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn missing_or_corrupt_checkpoints_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = lbac(&["validate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    zero_checkpoint(dir.path());
    std::fs::write(checkpoint_dir(dir.path(), 0).join("policy.json"), "[]").unwrap();
    for cmd in ["validate", "contour", "rollout"] {
        assert_eq!(lbac(&[cmd], dir.path()).status.code(), Some(2), "{cmd}");
    }
}

#[test]
fn contour_two_by_two_has_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    zero_checkpoint(dir.path());
    let o = lbac(&["contour", "--nx", "2", "--ny", "2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&dir.path().join("contour_ep_000000.csv")), 4);
    assert!(dir.path().join("contour_ep_000000_level.csv").is_file());
    assert_eq!(lbac(&["contour", "--nx", "1"], dir.path()).status.code(), Some(2));
}

#[test]
fn rollout_from_goal_reaches() {
    let dir = tempfile::tempdir().unwrap();
    zero_checkpoint(dir.path());
    let o = lbac(&["rollout", "--start", "0.0,0.5"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rollout_summary.json")).unwrap()).unwrap();
    assert_eq!(s["summary"]["reach_rate"], 1.0);
    assert_eq!(csv_rows(&dir.path().join("rollouts/traj_000.csv")), 1);
    assert_eq!(lbac(&["rollout", "--start", "9,9"], dir.path()).status.code(), Some(2));
    assert_eq!(lbac(&["rollout", "--start", "x"], dir.path()).status.code(), Some(2));
}

#[test]
fn baseline_reports_stall_and_reach() {
    let dir = tempfile::tempdir().unwrap();
    let o = lbac(&["baseline"], dir.path());
    assert!(o.status.success());
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("baseline_summary.json")).unwrap()).unwrap();
    assert_eq!(s["n"], 25);
    assert!(s["stalled"].as_u64().unwrap() >= 1);
    assert!(s["reached"].as_u64().unwrap() >= 1);
    assert_eq!(std::fs::read_dir(dir.path().join("baseline")).unwrap().count(), 25);
    assert_eq!(lbac(&["baseline", "--grid-n", "0"], dir.path()).status.code(), Some(2));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    zero_checkpoint(dir.path());
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    let args = ["rollout", "--override", "validate.deterministic=false", "--seed", "3"];
    assert!(lbac(&args, dir.path()).status.success());
    let first = read("rollouts/traj_000.csv");
    assert!(lbac(&args, dir.path()).status.success());
    assert_eq!(first, read("rollouts/traj_000.csv"));
}
