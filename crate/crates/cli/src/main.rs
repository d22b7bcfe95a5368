//! Command-line front end: train an encoder, evaluate a checkpoint with a
//! linear probe, sweep the adversarial weight over a grid, and run the
//! built-in verification suite.
//!
//! Run configuration is a flat `key=value` file (one pair per line, `#`
//! comments allowed); unknown or duplicate keys are rejected so that a typo
//! cannot silently fall back to a default. Every command writes nothing but
//! the artifacts it names, and its outputs are a deterministic function of
//! its inputs: all randomness flows from the single `seed` key.
//!
//! Exit codes: 0 success, 1 runtime failure (or any failed run/check),
//! 2 configuration problem, 3 data problem.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use sofclr::checkpoint::{load_checkpoint, save_checkpoint};
use sofclr::data::{load_csv, AugmentOp, Dataset};
use sofclr::linear_eval::{embed_all, evaluate_probe, fit_probe, PROBE_ITERS, PROBE_L2, PROBE_LR};
use sofclr::metrics::{write_report_csv, MetricsReport};
use sofclr::models::{DiscriminatorSpec, EncoderSpec};
use sofclr::train::{train, Optimizer, TrainConfig};
use sofclr::verify::{run_check, Tolerances, ALPHA_GRID, CHECK_COUNT};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

/// A command failure carrying the process exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

type CmdResult<T> = Result<T, Failure>;

fn fail<T>(code: u8, msg: impl Into<String>) -> CmdResult<T> {
    Err(Failure { code, msg: msg.into() })
}

#[derive(Parser)]
#[command(
    name = "sofclr",
    about = "Fair contrastive representation learning: train, evaluate, sweep, verify"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an encoder on a dataset CSV and write checkpoint + history.
    Train(TrainArgs),
    /// Evaluate a checkpoint with a linear probe and write a metrics CSV.
    Eval(EvalArgs),
    /// Train and evaluate across an alpha grid, one run per (alpha, seed).
    SweepAlpha(SweepArgs),
    /// Run the built-in verification suite and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dataset CSV (header `id,x0..,a,y`).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for manifest, history.csv and checkpoint.bin.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled dataset the probe is fit on.
    #[arg(long = "train-data")]
    train_data: PathBuf,
    /// Labeled and annotated dataset the metrics are computed on.
    #[arg(long = "test-data")]
    test_data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Histogram resolution for the distributional metrics.
    #[arg(long, default_value_t = 100)]
    buckets: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Flat key=value run configuration; `alpha` and `seed` are overridden
    /// per run.
    #[arg(long)]
    config: PathBuf,
    /// Dataset CSV used for every run (metrics are computed over the samples
    /// carrying both a label and an attribute).
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated adversarial weights; defaults to the canonical grid.
    #[arg(long)]
    alphas: Option<String>,
    /// Comma-separated seeds, one full run per (alpha, seed).
    #[arg(long)]
    seeds: String,
    /// Output directory; each run gets `a{alpha}_s{seed}/` inside it.
    #[arg(long)]
    out: PathBuf,
    /// Histogram resolution for the distributional metrics.
    #[arg(long, default_value_t = 100)]
    buckets: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional directory to write the table to (verify.txt).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated check ids to run (default: all).
    #[arg(long)]
    only: Option<String>,
    /// Flat key=value tolerance overrides (field names of the suite's
    /// tolerance set).
    #[arg(long)]
    tolerances: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::SweepAlpha(a) => cmd_sweep_alpha(a),
        Cmd::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sofclr: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

// ── key=value files ──

/// Parse flat `key=value` text: blank lines and `#` comments are skipped,
/// duplicate keys are an error. Returns pairs in file order.
fn parse_kv(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value, got `{line}`", lineno + 1));
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        if pairs.iter().any(|(p, _)| *p == key) {
            return Err(format!("line {}: duplicate key `{key}`", lineno + 1));
        }
        pairs.push((key, v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("key `{key}`: cannot parse `{v}`"))
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_num(key, p.trim())).collect()
}

/// Build a training configuration from config-file pairs, starting from the
/// desk-scale defaults for this dataset. Rejects unknown keys.
fn build_train_config(pairs: &[(String, String)], ds: &Dataset) -> Result<TrainConfig, String> {
    let enc = EncoderSpec::default_for(ds.d_in);
    let disc = DiscriminatorSpec::linear_for(enc.d, ds.k.max(2));
    let mut cfg = TrainConfig::desk_scale(enc, disc, 0);
    for (k, v) in pairs {
        match k.as_str() {
            "alpha" => cfg.alpha = parse_num(k, v)?,
            "beta" => cfg.beta = parse_num(k, v)?,
            "gamma" => cfg.gamma = parse_num(k, v)?,
            "eta" => cfg.eta = parse_num(k, v)?,
            "eta_prime" => cfg.eta_prime = parse_num(k, v)?,
            "batch_main" => cfg.batch_main = parse_num(k, v)?,
            "batch_attr" => cfg.batch_attr = parse_num(k, v)?,
            "iters" => cfg.iters = parse_num(k, v)?,
            "optimizer" => cfg.optimizer = v.parse::<Optimizer>().map_err(|e| e.to_string())?,
            "lambda_hint" => cfg.lambda_hint = parse_num(k, v)?,
            "seed" => cfg.seed = parse_num(k, v)?,
            "enc_hidden" => cfg.encoder.hidden = parse_usize_list(k, v)?,
            "enc_d" => cfg.encoder.d = parse_num(k, v)?,
            "disc_hidden" => cfg.discriminator.hidden = parse_usize_list(k, v)?,
            "tau" => cfg.gcl.tau = parse_num(k, v)?,
            "eps0" => cfg.gcl.eps0 = parse_num(k, v)?,
            "aug_a" => cfg.aug.a = AugmentOp::parse(v).map_err(|e| e.to_string())?,
            "aug_b" => cfg.aug.b = AugmentOp::parse(v).map_err(|e| e.to_string())?,
            other => return Err(format!("unknown config key `{other}`")),
        }
    }
    // the discriminator reads whatever width the encoder emits
    cfg.discriminator.d = cfg.encoder.d;
    Ok(cfg)
}

// ── manifests ──

fn hidden_list(hidden: &[usize]) -> String {
    hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",")
}

/// Content address in the style of a git blob: sha256 over
/// `blob {len}\0{bytes}`.
fn blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let digest = h.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

/// The full reproduction record for one run: input paths and content hashes,
/// output names, and the resolved configuration (same keys the config file
/// uses). Written before training starts so an interrupted run still leaves
/// its provenance behind.
fn manifest_text(
    command: &str,
    inputs: &[(&str, &Path, &str)],
    outputs: &[&str],
    cfg: &TrainConfig,
) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "command={command}");
    for (name, path, hash) in inputs {
        let _ = writeln!(m, "{name}={}", path.display());
        let _ = writeln!(m, "{name}_sha256={hash}");
    }
    for out in outputs {
        let _ = writeln!(m, "out={out}");
    }
    let _ = writeln!(m, "alpha={}", cfg.alpha);
    let _ = writeln!(m, "beta={}", cfg.beta);
    let _ = writeln!(m, "gamma={}", cfg.gamma);
    let _ = writeln!(m, "eta={}", cfg.eta);
    let _ = writeln!(m, "eta_prime={}", cfg.eta_prime);
    let _ = writeln!(m, "batch_main={}", cfg.batch_main);
    let _ = writeln!(m, "batch_attr={}", cfg.batch_attr);
    let _ = writeln!(m, "iters={}", cfg.iters);
    let _ = writeln!(m, "optimizer={}", cfg.optimizer);
    let _ = writeln!(m, "lambda_hint={}", cfg.lambda_hint);
    let _ = writeln!(m, "seed={}", cfg.seed);
    let _ = writeln!(m, "enc_hidden={}", hidden_list(&cfg.encoder.hidden));
    let _ = writeln!(m, "enc_d={}", cfg.encoder.d);
    let _ = writeln!(m, "disc_hidden={}", hidden_list(&cfg.discriminator.hidden));
    let _ = writeln!(m, "tau={}", cfg.gcl.tau);
    let _ = writeln!(m, "eps0={}", cfg.gcl.eps0);
    let _ = writeln!(m, "aug_a={}", cfg.aug.a);
    let _ = writeln!(m, "aug_b={}", cfg.aug.b);
    m
}

// ── shared input loading ──

fn read_config(path: &Path) -> CmdResult<(String, Vec<(String, String)>)> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, format!("config {}: {e}", path.display())),
    };
    match parse_kv(&text) {
        Ok(pairs) => Ok((text, pairs)),
        Err(e) => fail(EXIT_CONFIG, format!("config {}: {e}", path.display())),
    }
}

fn read_dataset(path: &Path) -> CmdResult<(Vec<u8>, Dataset)> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_DATA, format!("data {}: {e}", path.display())),
    };
    match load_csv(path) {
        Ok(ds) => Ok((bytes, ds)),
        Err(e) => fail(EXIT_DATA, format!("data {}: {e}", path.display())),
    }
}

fn runtime<T>(r: sofclr::Result<T>, what: &str) -> CmdResult<T> {
    r.map_err(|e| Failure { code: EXIT_RUNTIME, msg: format!("{what}: {e}") })
}

// ── train ──

fn cmd_train(args: &TrainArgs) -> CmdResult<()> {
    let (cfg_text, pairs) = read_config(&args.config)?;
    let (data_bytes, ds) = read_dataset(&args.data)?;
    let cfg = match build_train_config(&pairs, &ds) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, format!("config {}: {e}", args.config.display())),
    };
    if let Err(e) = cfg.validate(&ds) {
        return fail(EXIT_CONFIG, format!("config {}: {e}", args.config.display()));
    }

    runtime(fs::create_dir_all(&args.out).map_err(Into::into), "creating output directory")?;
    let manifest = manifest_text(
        "train",
        &[
            ("config", &args.config, &blob_sha256(cfg_text.as_bytes())),
            ("data", &args.data, &blob_sha256(&data_bytes)),
        ],
        &["history.csv", "checkpoint.bin"],
        &cfg,
    );
    runtime(
        fs::write(args.out.join("manifest.txt"), manifest).map_err(Into::into),
        "writing manifest",
    )?;

    let (state, history) = runtime(train(&cfg, &ds), "training")?;
    runtime(history.write_csv(&args.out.join("history.csv")), "writing history")?;
    runtime(
        save_checkpoint(&args.out.join("checkpoint.bin"), &cfg.encoder, &cfg.discriminator, &state),
        "writing checkpoint",
    )?;
    println!("trained {} iterations; artifacts in {}", cfg.iters, args.out.display());
    Ok(())
}

// ── eval ──

fn require_labels(ds: &Dataset, what: &str) -> CmdResult<Vec<u8>> {
    let mut labels = Vec::with_capacity(ds.n);
    for (i, l) in ds.labels.iter().enumerate() {
        match l {
            Some(y) => labels.push(*y),
            None => return fail(EXIT_DATA, format!("{what}: sample {i} has no label")),
        }
    }
    Ok(labels)
}

/// Rate gaps on the 0-100 display scale; everything else stays raw.
fn display_scale(report: &MetricsReport) -> MetricsReport {
    let mut r = report.clone();
    r.delta_dp *= 100.0;
    r.delta_eo *= 100.0;
    r.delta_ed *= 100.0;
    r
}

fn cmd_eval(args: &EvalArgs) -> CmdResult<()> {
    let (enc, _disc, state) = match load_checkpoint(&args.checkpoint) {
        Ok(t) => t,
        Err(e) => {
            return fail(EXIT_CONFIG, format!("checkpoint {}: {e}", args.checkpoint.display()))
        }
    };
    let (_, train_ds) = read_dataset(&args.train_data)?;
    let (_, test_ds) = read_dataset(&args.test_data)?;
    for (name, d_in) in [("train", train_ds.d_in), ("test", test_ds.d_in)] {
        if enc.d_in != d_in {
            return fail(
                EXIT_CONFIG,
                format!("checkpoint encoder expects d_in {}, {name} data has {d_in}", enc.d_in),
            );
        }
    }
    let labels = require_labels(&train_ds, "train data")?;

    let emb = runtime(embed_all(&enc, &state.w, &train_ds), "embedding train data")?;
    let probe = runtime(fit_probe(&emb, &labels, PROBE_L2, PROBE_ITERS, PROBE_LR), "fitting probe")?;
    let report = runtime(
        evaluate_probe(&probe, &enc, &state.w, &test_ds, args.buckets),
        "evaluating probe",
    )?;
    runtime(write_report_csv(&display_scale(&report), &args.out), "writing report")?;
    println!("wrote {}", args.out.display());
    Ok(())
}

// ── sweep-alpha ──

/// Keep only the samples that carry both a label and an attribute, so the
/// metric suite can run on partially annotated files.
fn eval_subset(ds: &Dataset) -> sofclr::Result<Dataset> {
    let keep: Vec<usize> = (0..ds.n)
        .filter(|&i| ds.labels[i].is_some() && ds.attrs[i].is_some())
        .collect();
    let mut features = Vec::with_capacity(keep.len() * ds.d_in);
    let mut labels = Vec::with_capacity(keep.len());
    let mut attrs = Vec::with_capacity(keep.len());
    for &i in &keep {
        features.extend_from_slice(ds.feature_row(i));
        labels.push(ds.labels[i]);
        attrs.push(ds.attrs[i]);
    }
    Dataset::new(features, ds.d_in, labels, attrs, ds.k)
}

/// One sweep cell: train into `dir`, then probe and score in-sample. Any
/// error is recorded to `dir/error.txt` and reported in the sweep table.
fn run_sweep_cell(
    cfg: &TrainConfig,
    ds: &Dataset,
    dir: &Path,
    manifest: &str,
    buckets: usize,
) -> Result<MetricsReport, String> {
    let inner = || -> Result<MetricsReport, String> {
        let err = |e: sofclr::Error| e.to_string();
        fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        fs::write(dir.join("manifest.txt"), manifest).map_err(|e| e.to_string())?;
        cfg.validate(ds).map_err(err)?;
        let (state, history) = train(cfg, ds).map_err(err)?;
        history.write_csv(&dir.join("history.csv")).map_err(err)?;
        save_checkpoint(&dir.join("checkpoint.bin"), &cfg.encoder, &cfg.discriminator, &state)
            .map_err(err)?;

        let labeled: Vec<usize> = (0..ds.n).filter(|&i| ds.labels[i].is_some()).collect();
        if labeled.is_empty() {
            return Err("no labeled samples to fit the probe on".into());
        }
        let mut pf = Vec::with_capacity(labeled.len() * ds.d_in);
        let mut pl = Vec::with_capacity(labeled.len());
        for &i in &labeled {
            pf.extend_from_slice(ds.feature_row(i));
            pl.push(ds.labels[i].unwrap());
        }
        let probe_ds = Dataset::new(pf, ds.d_in, vec![None; labeled.len()], vec![None; labeled.len()], ds.k)
            .map_err(err)?;
        let emb = embed_all(&cfg.encoder, &state.w, &probe_ds).map_err(err)?;
        let probe = fit_probe(&emb, &pl, PROBE_L2, PROBE_ITERS, PROBE_LR).map_err(err)?;
        let scored = eval_subset(ds).map_err(err)?;
        if scored.n == 0 {
            return Err("no samples carry both a label and an attribute".into());
        }
        evaluate_probe(&probe, &cfg.encoder, &state.w, &scored, buckets).map_err(err)
    };
    inner().inspect_err(|e| {
        let _ = fs::write(dir.join("error.txt"), e);
    })
}

fn parse_grid<T: std::str::FromStr>(what: &str, s: &str) -> CmdResult<Vec<T>> {
    let vals: Result<Vec<T>, _> = s.split(',').map(|p| p.trim().parse::<T>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => fail(EXIT_CONFIG, format!("--{what}: expected a comma-separated list, got `{s}`")),
    }
}

fn sweep_threads(n_runs: usize) -> CmdResult<usize> {
    let cap = match std::env::var("SOFCLR_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(t) if t >= 1 => t,
            _ => {
                return fail(
                    EXIT_CONFIG,
                    format!("SOFCLR_THREADS must be a positive integer, got `{v}`"),
                )
            }
        },
        Err(_) => std::thread::available_parallelism().map_or(1, |p| p.get()),
    };
    Ok(cap.min(n_runs).max(1))
}

fn cmd_sweep_alpha(args: &SweepArgs) -> CmdResult<()> {
    let (cfg_text, pairs) = read_config(&args.config)?;
    let (data_bytes, ds) = read_dataset(&args.data)?;
    let base = match build_train_config(&pairs, &ds) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, format!("config {}: {e}", args.config.display())),
    };
    let alphas: Vec<f64> = match &args.alphas {
        Some(s) => parse_grid("alphas", s)?,
        None => ALPHA_GRID.to_vec(),
    };
    let seeds: Vec<u64> = parse_grid("seeds", &args.seeds)?;

    runtime(fs::create_dir_all(&args.out).map_err(Into::into), "creating output directory")?;
    let cfg_hash = blob_sha256(cfg_text.as_bytes());
    let data_hash = blob_sha256(&data_bytes);

    // the full cell list up front, in table order
    let mut cells: Vec<(f64, u64, TrainConfig, PathBuf)> = Vec::new();
    for &alpha in &alphas {
        for &seed in &seeds {
            let mut cfg = base.clone();
            cfg.alpha = alpha;
            cfg.seed = seed;
            let dir = args.out.join(format!("a{alpha}_s{seed}"));
            cells.push((alpha, seed, cfg, dir));
        }
    }

    let threads = sweep_threads(cells.len())?;
    // fixed round-robin assignment; each cell is independent and seeded, so
    // the artifacts do not depend on scheduling
    let results: Vec<(usize, Result<MetricsReport, String>)> = std::thread::scope(|s| {
        let cells = &cells;
        let ds = &ds;
        let config_path = &args.config;
        let data_path = &args.data;
        let cfg_hash = &cfg_hash;
        let data_hash = &data_hash;
        let buckets = args.buckets;
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                s.spawn(move || {
                    let mut done = Vec::new();
                    let mut i = w;
                    while i < cells.len() {
                        let (_, _, cfg, dir) = &cells[i];
                        let manifest = manifest_text(
                            "sweep-alpha",
                            &[
                                ("config", config_path, cfg_hash),
                                ("data", data_path, data_hash),
                            ],
                            &["history.csv", "checkpoint.bin"],
                            cfg,
                        );
                        done.push((i, run_sweep_cell(cfg, ds, dir, &manifest, buckets)));
                        i += threads;
                    }
                    done
                })
            })
            .collect();
        let mut all: Vec<_> =
            handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect();
        all.sort_by_key(|(i, _)| *i);
        all
    });

    let mut csv = String::from(
        "alpha,seed,status,acc,delta_dp,delta_eo,delta_ed,intra_auc,inter_auc,gauc,wd,kl\n",
    );
    let mut failures = 0usize;
    for ((alpha, seed, _, dir), (_, outcome)) in cells.iter().zip(&results) {
        match outcome {
            Ok(report) => {
                let r = display_scale(report);
                let _ = writeln!(
                    csv,
                    "{alpha},{seed},ok,{},{},{},{},{},{},{},{},{}",
                    r.acc,
                    r.delta_dp,
                    r.delta_eo,
                    r.delta_ed,
                    r.intra_auc,
                    r.inter_auc,
                    r.gauc,
                    r.wd,
                    r.kl
                );
            }
            Err(e) => {
                failures += 1;
                eprintln!("sofclr: run {}: {e}", dir.display());
                let _ = writeln!(csv, "{alpha},{seed},failed,,,,,,,,,");
            }
        }
    }
    runtime(fs::write(args.out.join("sweep.csv"), csv).map_err(Into::into), "writing sweep.csv")?;
    println!(
        "swept {} runs ({} failed); table in {}",
        cells.len(),
        failures,
        args.out.join("sweep.csv").display()
    );
    if failures > 0 {
        return fail(EXIT_RUNTIME, format!("{failures} of {} runs failed", cells.len()));
    }
    Ok(())
}

// ── verify ──

fn apply_tolerance_overrides(tol: &mut Tolerances, pairs: &[(String, String)]) -> Result<(), String> {
    for (k, v) in pairs {
        match k.as_str() {
            "grad_rel" => tol.grad_rel = parse_num(k, v)?,
            "reduction_abs" => tol.reduction_abs = parse_num(k, v)?,
            "contraction_abs" => tol.contraction_abs = parse_num(k, v)?,
            "adversary_margin" => tol.adversary_margin = parse_num(k, v)?,
            "baseline_adversary_acc" => tol.baseline_adversary_acc = parse_num(k, v)?,
            "kl_drop" => tol.kl_drop = parse_num(k, v)?,
            "spearman_max" => tol.spearman_max = parse_num(k, v)?,
            "acc_points" => tol.acc_points = parse_num(k, v)?,
            "wd_abs" => tol.wd_abs = parse_num(k, v)?,
            "fd_rel" => tol.fd_rel = parse_num(k, v)?,
            other => return Err(format!("unknown tolerance key `{other}`")),
        }
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> CmdResult<()> {
    let mut tol = Tolerances::default();
    if let Some(path) = &args.tolerances {
        let (_, pairs) = read_config(path)?;
        if let Err(e) = apply_tolerance_overrides(&mut tol, &pairs) {
            return fail(EXIT_CONFIG, format!("tolerances {}: {e}", path.display()));
        }
    }
    let mut ids: Vec<usize> = match &args.only {
        Some(s) => parse_grid("only", s)?,
        None => (1..=CHECK_COUNT).collect(),
    };
    ids.sort_unstable();
    ids.dedup();
    if let Some(bad) = ids.iter().find(|&&id| id == 0 || id > CHECK_COUNT) {
        return fail(EXIT_CONFIG, format!("--only: no check with id {bad} (have 1..={CHECK_COUNT})"));
    }

    let mut rows = Vec::with_capacity(ids.len());
    let mut all_pass = true;
    for &id in &ids {
        let res = run_check(id, &tol);
        all_pass &= res.passed;
        let row = res.table_row();
        println!("{row}");
        eprintln!("check {id} took {:.1}s", res.seconds);
        rows.push(row);
    }
    if let Some(out) = &args.out {
        runtime(fs::create_dir_all(out).map_err(Into::into), "creating output directory")?;
        runtime(
            fs::write(out.join("verify.txt"), rows.join("\n") + "\n").map_err(Into::into),
            "writing verify.txt",
        )?;
    }
    if all_pass {
        Ok(())
    } else {
        fail(EXIT_RUNTIME, "verification failed")
    }
}
