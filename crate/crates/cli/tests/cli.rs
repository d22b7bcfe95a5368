//! End-to-end tests of the `sofclr` binary: exit codes, artifact layout,
//! determinism across invocations, and agreement with the library paths the
//! commands wrap.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sofclr::checkpoint::load_checkpoint;
use sofclr::data::{gen_synthetic, split_annotate, save_csv, SyntheticConfig};
use sofclr::linear_eval::{embed_all, evaluate_probe, fit_probe, PROBE_ITERS, PROBE_L2, PROBE_LR};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sofclr"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Synthetic dataset on disk: n samples, d_in features, every sample
/// labeled, `annotate` fraction carrying the attribute.
fn write_data(path: &Path, n: usize, d_in: usize, seed: u64, annotate: f64) {
    let full = gen_synthetic(&SyntheticConfig {
        n,
        d_in,
        k: 2,
        bias_strength: 0.6,
        group_props: vec![0.5, 0.5],
        noise_sigma: 0.3,
        seed,
    })
    .unwrap();
    let ds = if annotate < 1.0 { split_annotate(&full, annotate, seed).unwrap() } else { full };
    save_csv(&ds, path).unwrap();
}

fn write_cfg(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

/// History lines with the wall-clock column removed; training values are
/// deterministic, iteration timing is not.
fn history_sans_ms(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

struct Tmp {
    dir: tempfile::TempDir,
}

impl Tmp {
    fn new() -> Tmp {
        Tmp { dir: tempfile::tempdir().unwrap() }
    }
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

// ── train ──

#[test]
fn train_writes_manifest_history_and_checkpoint() {
    let t = Tmp::new();
    write_data(&t.path("d.csv"), 120, 6, 3, 0.5);
    write_cfg(&t.path("run.cfg"), "iters=30\nbatch_main=16\nbatch_attr=8\nseed=5\nalpha=0.7\n");

    let out = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--out", &t.s("r")]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let manifest = fs::read_to_string(t.path("r/manifest.txt")).unwrap();
    assert!(manifest.contains("command=train"));
    assert!(manifest.contains("config_sha256="));
    assert!(manifest.contains("data_sha256="));
    assert!(manifest.contains("seed=5"));
    assert!(manifest.contains("alpha=0.7"));

    let history = fs::read_to_string(t.path("r/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 31, "header + one row per iteration");
    assert!(history.starts_with("t,gcl,fair,grad_norm,dual_ll,ms\n"));

    let (enc, _disc, state) = load_checkpoint(&t.path("r/checkpoint.bin")).unwrap();
    assert_eq!(enc.d_in, 6);
    assert_eq!(state.t, 30);

    // same inputs, fresh output directory: identical values modulo timing
    let again = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--out", &t.s("r2")]);
    assert_eq!(code(&again), 0);
    assert_eq!(history_sans_ms(&t.path("r/history.csv")), history_sans_ms(&t.path("r2/history.csv")));
    assert_eq!(
        fs::read(t.path("r/checkpoint.bin")).unwrap(),
        fs::read(t.path("r2/checkpoint.bin")).unwrap()
    );
}

#[test]
fn train_missing_data_file_exits_3() {
    let t = Tmp::new();
    write_cfg(&t.path("run.cfg"), "iters=1\n");
    let out = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("nope.csv"), "--out", &t.s("r")]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("nope.csv"), "diagnostic names the file: {}", stderr(&out));
}

#[test]
fn train_zero_iters_writes_header_only() {
    let t = Tmp::new();
    write_data(&t.path("d.csv"), 40, 4, 9, 1.0);
    write_cfg(&t.path("run.cfg"), "iters=0\nbatch_main=8\nbatch_attr=4\n");
    let out = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--out", &t.s("r")]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(
        fs::read_to_string(t.path("r/history.csv")).unwrap(),
        "t,gcl,fair,grad_norm,dual_ll,ms\n"
    );
}

#[test]
fn train_rejects_unknown_config_key() {
    let t = Tmp::new();
    write_data(&t.path("d.csv"), 40, 4, 9, 1.0);
    write_cfg(&t.path("run.cfg"), "alhpa=1.0\n");
    let out = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--out", &t.s("r")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("alhpa"), "names the bad key: {}", stderr(&out));
}

#[test]
fn train_rejects_out_of_range_value() {
    let t = Tmp::new();
    write_data(&t.path("d.csv"), 40, 4, 9, 1.0);
    write_cfg(&t.path("run.cfg"), "gamma=1.5\nbatch_main=8\nbatch_attr=4\niters=1\n");
    let out = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--out", &t.s("r")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("gamma"));
}

#[test]
fn train_default_config_smoke_run() {
    let t = Tmp::new();
    write_data(&t.path("d.csv"), 256, 8, 21, 0.25);
    write_cfg(&t.path("run.cfg"), "");
    let out = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--out", &t.s("r")]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    // desk-scale default horizon
    assert_eq!(fs::read_to_string(t.path("r/history.csv")).unwrap().lines().count(), 2001);
}

// ── eval ──

#[test]
fn eval_deterministic_and_matches_library() {
    let t = Tmp::new();
    write_data(&t.path("d.csv"), 120, 6, 3, 1.0);
    write_cfg(&t.path("run.cfg"), "iters=25\nbatch_main=16\nbatch_attr=8\nseed=5\n");
    let out = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--out", &t.s("r")]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let ck = t.s("r/checkpoint.bin");
    let e1 = run(&["eval", "--checkpoint", &ck, "--train-data", &t.s("d.csv"), "--test-data", &t.s("d.csv"), "--out", &t.s("m1.csv")]);
    assert_eq!(code(&e1), 0, "stderr: {}", stderr(&e1));
    let e2 = run(&["eval", "--checkpoint", &ck, "--train-data", &t.s("d.csv"), "--test-data", &t.s("d.csv"), "--out", &t.s("m2.csv")]);
    assert_eq!(code(&e2), 0);
    assert_eq!(fs::read(t.path("m1.csv")).unwrap(), fs::read(t.path("m2.csv")).unwrap());

    // the command is the library probe pipeline plus display scaling
    let ds = sofclr::data::load_csv(&t.path("d.csv")).unwrap();
    let (enc, _d, state) = load_checkpoint(&t.path("r/checkpoint.bin")).unwrap();
    let labels: Vec<u8> = ds.labels.iter().map(|l| l.unwrap()).collect();
    let emb = embed_all(&enc, &state.w, &ds).unwrap();
    let probe = fit_probe(&emb, &labels, PROBE_L2, PROBE_ITERS, PROBE_LR).unwrap();
    let report = evaluate_probe(&probe, &enc, &state.w, &ds, 100).unwrap();

    let csv = fs::read_to_string(t.path("m1.csv")).unwrap();
    let get = |name: &str| -> f64 {
        csv.lines()
            .find_map(|l| l.strip_prefix(&format!("{name},")))
            .unwrap_or_else(|| panic!("metric {name} in {csv}"))
            .parse()
            .unwrap()
    };
    assert_eq!(get("acc"), report.acc);
    assert_eq!(get("delta_dp"), report.delta_dp * 100.0);
    assert_eq!(get("delta_eo"), report.delta_eo * 100.0);
    assert_eq!(get("delta_ed"), report.delta_ed * 100.0);
    assert_eq!(get("kl"), report.kl);
}

#[test]
fn eval_dim_mismatch_prints_both_dims() {
    let t = Tmp::new();
    write_data(&t.path("d6.csv"), 80, 6, 3, 1.0);
    write_data(&t.path("d4.csv"), 80, 4, 3, 1.0);
    write_cfg(&t.path("run.cfg"), "iters=5\nbatch_main=16\nbatch_attr=8\n");
    let out = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("d6.csv"), "--out", &t.s("r")]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let e = run(&["eval", "--checkpoint", &t.s("r/checkpoint.bin"), "--train-data", &t.s("d4.csv"), "--test-data", &t.s("d6.csv"), "--out", &t.s("m.csv")]);
    assert_eq!(code(&e), 2);
    let msg = stderr(&e);
    assert!(msg.contains('6') && msg.contains('4'), "both dims in: {msg}");
}

// ── sweep-alpha ──

#[test]
fn sweep_degenerate_cell_matches_train_and_eval() {
    let t = Tmp::new();
    write_data(&t.path("d.csv"), 120, 6, 3, 1.0);
    write_cfg(&t.path("run.cfg"), "iters=20\nbatch_main=16\nbatch_attr=8\nseed=5\nalpha=0.3\n");

    let sw = bin()
        .args(["sweep-alpha", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--alphas", "0.3", "--seeds", "5", "--out", &t.s("sw")])
        .env("SOFCLR_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&sw), 0, "stderr: {}", stderr(&sw));

    let tr = run(&["train", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--out", &t.s("r")]);
    assert_eq!(code(&tr), 0);
    assert_eq!(
        history_sans_ms(&t.path("sw/a0.3_s5/history.csv")),
        history_sans_ms(&t.path("r/history.csv"))
    );

    let ev = run(&["eval", "--checkpoint", &t.s("r/checkpoint.bin"), "--train-data", &t.s("d.csv"), "--test-data", &t.s("d.csv"), "--out", &t.s("m.csv")]);
    assert_eq!(code(&ev), 0);
    let metrics = fs::read_to_string(t.path("m.csv")).unwrap();
    let acc: f64 = metrics.lines().find_map(|l| l.strip_prefix("acc,")).unwrap().parse().unwrap();
    let ded: f64 =
        metrics.lines().find_map(|l| l.strip_prefix("delta_ed,")).unwrap().parse().unwrap();

    let table = fs::read_to_string(t.path("sw/sweep.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "alpha,seed,status,acc,delta_dp,delta_eo,delta_ed,intra_auc,inter_auc,gauc,wd,kl"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], &["0.3", "5", "ok"]);
    assert_eq!(row[3].parse::<f64>().unwrap(), acc);
    assert_eq!(row[6].parse::<f64>().unwrap(), ded);
}

#[test]
fn sweep_default_grid_runs_every_alpha() {
    let t = Tmp::new();
    write_data(&t.path("d.csv"), 60, 4, 11, 1.0);
    write_cfg(&t.path("run.cfg"), "iters=3\nbatch_main=8\nbatch_attr=4\n");
    let sw = run(&["sweep-alpha", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--seeds", "1", "--out", &t.s("sw")]);
    assert_eq!(code(&sw), 0, "stderr: {}", stderr(&sw));
    let table = fs::read_to_string(t.path("sw/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 8, "header + the seven canonical alphas");
    for a in ["0", "0.1", "0.3", "0.5", "0.7", "0.9", "1"] {
        assert!(table.lines().any(|l| l.starts_with(&format!("{a},1,ok"))), "alpha {a} in table");
    }
}

#[test]
fn sweep_records_partial_failures_and_exits_1() {
    let t = Tmp::new();
    // 50 annotated samples, so batch_attr=64 is satisfiable only at alpha=0,
    // where the attribute batch is never drawn
    write_data(&t.path("d.csv"), 100, 4, 13, 0.5);
    write_cfg(&t.path("run.cfg"), "iters=3\nbatch_main=8\nbatch_attr=64\n");
    let sw = run(&["sweep-alpha", "--config", &t.s("run.cfg"), "--data", &t.s("d.csv"), "--alphas", "0,1", "--seeds", "2", "--out", &t.s("sw")]);
    assert_eq!(code(&sw), 1);

    let table = fs::read_to_string(t.path("sw/sweep.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("0,2,ok")), "alpha 0 run succeeds: {table}");
    assert!(table.lines().any(|l| l.starts_with("1,2,failed")), "alpha 1 run fails: {table}");
    let recorded = fs::read_to_string(t.path("sw/a1_s2/error.txt")).unwrap();
    assert!(recorded.contains("batch_attr"), "per-run record: {recorded}");
}

// ── verify ──

#[test]
fn verify_single_check_stable_table() {
    let v1 = run(&["verify", "--only", "8"]);
    assert_eq!(code(&v1), 0, "stderr: {}", stderr(&v1));
    assert!(stdout(&v1).starts_with("check 8"));
    assert!(stdout(&v1).contains("PASS"));
    let v2 = run(&["verify", "--only", "8"]);
    assert_eq!(stdout(&v1), stdout(&v2), "identical table across invocations");
}

#[test]
fn verify_writes_table_file() {
    let t = Tmp::new();
    let v = run(&["verify", "--only", "2,3", "--out", &t.s("v")]);
    assert_eq!(code(&v), 0, "stderr: {}", stderr(&v));
    let table = fs::read_to_string(t.path("v/verify.txt")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.contains("check 2") && table.contains("check 3"));
}

#[test]
fn verify_rejects_unknown_check_id() {
    let v = run(&["verify", "--only", "12"]);
    assert_eq!(code(&v), 2);
    assert!(stderr(&v).contains("12"));
}

#[test]
fn verify_injected_tolerance_fails_the_suite() {
    let t = Tmp::new();
    write_cfg(&t.path("tol.cfg"), "fd_rel=1e-30\n");
    let v = run(&["verify", "--only", "9", "--tolerances", &t.s("tol.cfg")]);
    assert_eq!(code(&v), 1);
    assert!(stdout(&v).contains("FAIL"));

    write_cfg(&t.path("bad.cfg"), "fd_rell=1e-30\n");
    let bad = run(&["verify", "--only", "9", "--tolerances", &t.s("bad.cfg")]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("fd_rell"));
}
