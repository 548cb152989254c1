//! Command-line front end and its flat `key = value` run configuration.

use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::camera::{derive_default_profile, generate_stream, StreamSpec};
use crate::capture::{export_pcap, read_csv, write_csv, CaptureSet};
use crate::error::{Error, Result};
use crate::eval::{evaluate, split, DEFAULT_THRESHOLD};
use crate::experiment::{default_sweep, run_experiment, save_artifacts, ExperimentConfig, DEFAULT_TRAIN_FRACTION, DEFAULT_WINDOW};
use crate::features::{bigram_histogram, make_windows_multi, Normalization};
use crate::gru::{load_model, predict, save_model, train, Detector, GruParams, History, TrainConfig};
use crate::switch::{apply_interference, poison, reference_table, seq_discontinuities, AttackPlan};

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,val_loss,val_accuracy,val_auc";

/// Every setting a command can read. Paths left unset resolve inside
/// `out_dir`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub attack_start_s: f64,
    /// `None` runs the attack to the end of the capture.
    pub attack_end_s: Option<f64>,
    pub out_dir: PathBuf,
    pub benign: Option<PathBuf>,
    pub attack: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub reports: Option<PathBuf>,
    pub pcap: bool,
    pub window: usize,
    pub stride: Option<usize>,
    pub sweep: Vec<usize>,
    pub train_fraction: f64,
    pub threshold: f64,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            duration_s: 120.0,
            attack_start_s: 0.0,
            attack_end_s: None,
            out_dir: PathBuf::from("out"),
            benign: None,
            attack: None,
            model: None,
            reports: None,
            pcap: false,
            window: DEFAULT_WINDOW,
            stride: None,
            sweep: default_sweep(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            threshold: DEFAULT_THRESHOLD,
            train: TrainConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "" | "none" | "auto" => Ok(None),
        v => parse_num(key, v).map(Some),
    }
}

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl RunConfig {
    /// Set one key; `-` and `_` are interchangeable in key names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "seed" => self.seed = parse_num(&key, value)?,
            "duration_s" => self.duration_s = parse_num(&key, value)?,
            "attack_start_s" => self.attack_start_s = parse_num(&key, value)?,
            "attack_end_s" => self.attack_end_s = optional(&key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "benign" => self.benign = Some(PathBuf::from(value)),
            "attack" => self.attack = Some(PathBuf::from(value)),
            "model" => self.model = Some(PathBuf::from(value)),
            "reports" => self.reports = Some(PathBuf::from(value)),
            "pcap" => self.pcap = parse_num(&key, value)?,
            "window" => self.window = parse_num(&key, value)?,
            "stride" => self.stride = optional(&key, value)?,
            "sweep" => {
                self.sweep = if value == "default" {
                    default_sweep()
                } else {
                    value
                        .split(',')
                        .map(|v| parse_num(&key, v.trim()))
                        .collect::<Result<_>>()?
                }
            }
            "train_fraction" => self.train_fraction = parse_num(&key, value)?,
            "threshold" => self.threshold = parse_num(&key, value)?,
            "hidden" => self.train.hidden = parse_num(&key, value)?,
            "epochs" => self.train.epochs = parse_num(&key, value)?,
            "batch_size" => self.train.batch_size = parse_num(&key, value)?,
            "learning_rate" => self.train.learning_rate = parse_num(&key, value)?,
            "beta1" => self.train.beta1 = parse_num(&key, value)?,
            "beta2" => self.train.beta2 = parse_num(&key, value)?,
            "epsilon" => self.train.epsilon = parse_num(&key, value)?,
            "clip_norm" => self.train.clip_norm = optional(&key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Serialize every key; the output parses back to an equal config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let sweep: Vec<String> = self.sweep.iter().map(|w| w.to_string()).collect();
        let mut out = String::new();
        let pairs = [
            ("seed", self.seed.to_string()),
            ("duration_s", self.duration_s.to_string()),
            ("attack_start_s", self.attack_start_s.to_string()),
            ("attack_end_s", show(&self.attack_end_s)),
            ("out_dir", self.out_dir.display().to_string()),
            ("benign", self.benign_path().display().to_string()),
            ("attack", self.attack_path().display().to_string()),
            ("model", self.model_path().display().to_string()),
            ("reports", self.reports_dir().display().to_string()),
            ("pcap", self.pcap.to_string()),
            ("window", self.window.to_string()),
            ("stride", show(&self.stride)),
            ("sweep", sweep.join(",")),
            ("train_fraction", self.train_fraction.to_string()),
            ("threshold", self.threshold.to_string()),
            ("hidden", t.hidden.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("epsilon", t.epsilon.to_string()),
            ("clip_norm", show(&t.clip_norm)),
        ];
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Validation(format!("window {} is below 2", self.window)));
        }
        if let Some(s) = self.stride {
            if s < 1 || s > self.window {
                return Err(Error::Validation(format!("stride {s} must lie in 1..={}", self.window)));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Validation(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        self.experiment().validate()
    }

    pub fn benign_path(&self) -> PathBuf {
        self.benign.clone().unwrap_or_else(|| self.out_dir.join("benign.csv"))
    }

    pub fn attack_path(&self) -> PathBuf {
        self.attack.clone().unwrap_or_else(|| self.out_dir.join("attack.csv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out_dir.join("model.txt"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.reports.clone().unwrap_or_else(|| self.out_dir.join("reports"))
    }

    pub fn stream_spec(&self) -> StreamSpec {
        StreamSpec {
            duration_s: self.duration_s,
            profiles: vec![derive_default_profile()],
            rng_seed: self.seed,
        }
    }

    pub fn attack_plan(&self, capture_s: f64) -> AttackPlan {
        AttackPlan {
            start_s: self.attack_start_s,
            end_s: self.attack_end_s.unwrap_or(capture_s),
            ..AttackPlan::full_capture(capture_s)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            windows: self.sweep.clone(),
            stride: self.stride,
            train_fraction: self.train_fraction,
            threshold: self.threshold,
            train: self.train_config(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cia-lab", version, about = "Camera-interference traffic generation and GRU detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benign camera capture.
    Generate(Options),
    /// Poison the switch and write an interfered copy of the benign capture.
    Attack(Options),
    /// Write 2-gram packet-length histograms for both captures.
    Featurize(Options),
    /// Train a detector on both captures.
    Train(Options),
    /// Score the held-out split with a saved detector.
    Eval(Options),
    /// Retrain and evaluate once per window size.
    Sweep(Options),
}

#[derive(Debug, Args)]
pub struct Options {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Any configuration key as `--key value`, e.g. `--window 63 --epochs 3`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

impl Options {
    /// Defaults, then the config file, then `--key value` overrides in order.
    pub fn resolve(&self) -> Result<RunConfig> {
        let pairs = override_pairs(&self.overrides)?;
        let file = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "config")
            .map(|(_, v)| PathBuf::from(v))
            .or_else(|| self.config.clone());
        let mut cfg = match file {
            Some(path) => RunConfig::load(&path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "config") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn override_pairs(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected --key, found {arg:?}")))?;
        match key.split_once('=') {
            Some((k, v)) => pairs.push((k.to_string(), v.to_string())),
            None => {
                let value = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
                pairs.push((key.to_string(), value.clone()));
            }
        }
    }
    Ok(pairs)
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn load_capture(path: &Path) -> Result<CaptureSet> {
    require(path)?;
    read_csv(path)
}

fn save_capture(capture: &CaptureSet, path: &Path, pcap: bool) -> Result<()> {
    create_parent(path)?;
    write_csv(capture, path)?;
    if pcap {
        export_pcap(capture, path.with_extension("pcap"))?;
    }
    Ok(())
}

fn save_history(history: &History, path: &Path) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for e in &history.epochs {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.epoch,
            e.train_loss,
            opt(e.val_loss),
            opt(e.val_accuracy),
            opt(e.val_auc)
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let capture = generate_stream(&cfg.stream_spec())?;
    let path = cfg.benign_path();
    save_capture(&capture, &path, cfg.pcap)?;
    println!(
        "wrote {} packets ({:.1} s, {:.0} pkt/s, mean length {:.1}) to {}",
        capture.len(),
        capture.duration_s(),
        capture.len() as f64 / capture.duration_s(),
        capture.total_bytes() as f64 / capture.len().max(1) as f64,
        path.display()
    );
    Ok(())
}

pub fn cmd_attack(cfg: &RunConfig) -> Result<()> {
    let benign = load_capture(&cfg.benign_path())?;
    let plan = cfg.attack_plan(benign.duration_s());
    let table = reference_table();
    plan.check_against(&table)?;
    let poisoned = poison(&table, &plan)?;
    println!("forwarding table before:\n{table}after:\n{poisoned}");

    let attacked = apply_interference(&benign, &plan, cfg.seed)?;
    let path = cfg.attack_path();
    save_capture(&attacked, &path, cfg.pcap)?;
    println!(
        "wrote {} packets to {} ({} sequence breaks toward {})",
        attacked.len(),
        path.display(),
        seq_discontinuities(attacked.records(), plan.victim_dst),
        plan.victim_dst
    );
    Ok(())
}

pub fn cmd_featurize(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.reports_dir();
    ensure_dir(&dir)?;
    let mut counts = Vec::new();
    for (name, path) in [("benign", cfg.benign_path()), ("attack", cfg.attack_path())] {
        let hist = bigram_histogram(&load_capture(&path)?)?;
        let out = dir.join(format!("{name}_bigrams.csv"));
        hist.save_csv(&out)?;
        println!("{name}: {} distinct 2-grams over {} pairs -> {}", hist.distinct(), hist.total(), out.display());
        counts.push(hist);
    }
    let extra = counts[1].keys().filter(|k| counts[0].get(k.0, k.1) == 0).count();
    println!("2-grams present only under attack: {extra}");
    Ok(())
}

struct Prepared {
    train: crate::features::WindowMatrix,
    test: crate::features::WindowMatrix,
}

/// Window both captures and split them exactly as `train` did, so `eval`
/// sees the same held-out windows.
fn prepare(cfg: &RunConfig, window: usize) -> Result<Prepared> {
    let benign = load_capture(&cfg.benign_path())?;
    let attack = load_capture(&cfg.attack_path())?;
    let dataset = make_windows_multi(&[&benign, &attack], window, cfg.stride.unwrap_or(window))?;
    let parts = split(&dataset, cfg.train_fraction, cfg.seed)?;
    for w in &parts.report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Prepared {
        train: parts.train,
        test: parts.test,
    })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let data = prepare(cfg, cfg.window)?;
    let norm = Normalization::fit(&data.train)?;
    let train_set = norm.apply(&data.train)?;
    let tc = cfg.train_config();
    let started = Instant::now();
    let (params, history) = train(GruParams::init(tc.hidden, tc.seed), &train_set, None, &tc)?;
    let detector = Detector {
        params,
        window: cfg.window,
        normalization: Some(norm),
    };
    let model = cfg.model_path();
    create_parent(&model)?;
    save_model(&detector, &model)?;
    let dir = cfg.reports_dir();
    ensure_dir(&dir)?;
    save_history(&history, &dir.join("history.csv"))?;
    std::fs::write(dir.join("run.cfg"), cfg.to_text()).map_err(|e| Error::io(dir.join("run.cfg"), e))?;
    let last = history.epochs.last().map_or(f64::NAN, |e| e.train_loss);
    println!(
        "trained on {} windows of {} in {:.1} s, final loss {last:.5}; model -> {}",
        train_set.len(),
        cfg.window,
        started.elapsed().as_secs_f64(),
        model.display()
    );
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let model = cfg.model_path();
    require(&model)?;
    let detector = load_model(&model)?;
    let data = prepare(cfg, detector.window)?;
    let test = match detector.normalization {
        Some(n) => n.apply(&data.test)?,
        None => data.test,
    };
    let started = Instant::now();
    let scores = predict(&detector.params, &test)?;
    let per_window = started.elapsed().as_secs_f64() / test.len().max(1) as f64;
    let mut report = evaluate(&scores, &test.truth(), cfg.threshold)?;
    report.inference_time_per_window_s = per_window;

    let dir = cfg.reports_dir();
    ensure_dir(&dir)?;
    report.save_json(dir.join("report.json"))?;
    report.save_roc_csv(dir.join("roc.csv"))?;
    println!(
        "{} test windows: accuracy {:.4}, auc {}, tpr {:.4}, fpr {:.4}, f1 {:.4}",
        report.total(),
        report.accuracy,
        report.auc.map_or_else(|| "n/a".into(), |a| format!("{a:.5}")),
        report.tpr,
        report.fpr,
        report.f1
    );
    println!(
        "confusion: tp {} fp {} tn {} fn {}; reports -> {}",
        report.tp,
        report.fp,
        report.tn,
        report.fn_,
        dir.display()
    );
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let benign = load_capture(&cfg.benign_path())?;
    let attack = load_capture(&cfg.attack_path())?;
    let outcomes = run_experiment(&benign, &attack, &cfg.experiment())?;
    let dir = cfg.reports_dir();
    save_artifacts(&outcomes, &dir)?;
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    crate::experiment::write_sweep_csv(&outcomes, &mut w).map_err(|e| Error::io("<stdout>", e))?;
    w.flush().map_err(|e| Error::io("<stdout>", e))?;
    println!("sweep artifacts -> {}", dir.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    let (opts, cmd): (&Options, fn(&RunConfig) -> Result<()>) = match &cli.command {
        Command::Generate(o) => (o, cmd_generate),
        Command::Attack(o) => (o, cmd_attack),
        Command::Featurize(o) => (o, cmd_featurize),
        Command::Train(o) => (o, cmd_train),
        Command::Eval(o) => (o, cmd_eval),
        Command::Sweep(o) => (o, cmd_sweep),
    };
    cmd(&opts.resolve()?)
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
