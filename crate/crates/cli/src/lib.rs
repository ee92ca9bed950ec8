//! The `chatemg` command line: argument parsing and the five commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::ffi::OsString;

use clap::{Args, Parser, Subcommand, ValueEnum};

use chatemg::classifiers::ClassifierKind;
use chatemg::config::RunConfig;
use chatemg::dataset::build_classifier_set;
use chatemg::datasim::{simulate_corpus, write_corpus};
use chatemg::eval::{run_scenario, train_experiment_models, tsne_channels, tsne_embed, Method, Scenario, ScenarioKind};
use chatemg::generator::batch_generate;
use chatemg::io::{load_corpus, read_recording, read_synthetic, write_synthetic, PROVENANCE_EXT};
use chatemg::model::IntentModelSet;
use chatemg::signal::{segment_windows, split_support_query, CHANNELS};
use chatemg::trainer::train_one_intent;
use chatemg::{EmgWindow, Error, Intent, Recording};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// Synthetic EMG generation and intent-inferral experiments.
#[derive(Parser)]
#[command(name = "chatemg", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for the command's randomness; overrides the seed taken from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// key=value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides one setting, e.g. `--set train.learning_rate=0.01`. Repeatable; wins over --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a labelled corpus.
    Sim {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of subjects (default: sim.n_subjects).
        #[arg(long)]
        subjects: Option<usize>,
        /// Sessions per subject (default: sim.n_sessions).
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Train the generative model of one intent.
    TrainGen {
        /// Corpus directory.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        intent: IntentArg,
        /// Checkpoint path; the training log and resolved config are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete prompts drawn from a support recording with the three intent models.
    Generate {
        /// Directory holding open.ckpt, close.ckpt and relax.ckpt.
        #[arg(long)]
        models: PathBuf,
        /// Recording to draw prompts from. A full protocol recording is cut to its first motion.
        #[arg(long)]
        support: PathBuf,
        /// Windows per intent (default: eval.n_synthetic).
        #[arg(long)]
        n: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an adaptation scenario and write the accuracy report.
    Eval {
        #[arg(long)]
        scenario: ScenarioKind,
        /// Corpus directory.
        #[arg(long)]
        corpus: PathBuf,
        /// lda, rf, transformer or all.
        #[arg(long, default_value = "all")]
        classifier: String,
        /// Comma-separated subset of self,fine_tune,chatemg.
        #[arg(long, default_value = "self,fine_tune,chatemg")]
        methods: String,
        /// Report CSV; the summary and resolved config are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export plot data as CSV.
    Plot {
        #[arg(long)]
        kind: PlotKind,
        /// signals: a real recording then a synthetic file. tsne: any mix of recordings and synthetic files.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
        /// signals: index of the synthetic window to trace.
        #[arg(long, default_value_t = 0)]
        window: usize,
        /// tsne: embed each channel separately instead of whole windows.
        #[arg(long)]
        per_channel: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum IntentArg {
    Open,
    Close,
    Relax,
}

impl From<IntentArg> for Intent {
    fn from(i: IntentArg) -> Intent {
        match i {
            IntentArg::Open => Intent::Open,
            IntentArg::Close => Intent::Close,
            IntentArg::Relax => Intent::Relax,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Signals,
    Tsne,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::ContextOverflow { .. } => EXIT_USAGE,
            Error::TrainingDiverged { .. } => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn data(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

/// Defaults, then the config file, then `--set`, then the command's flags.
fn resolve(global: &Global, seed_keys: &[&str], flags: &[(&str, String)]) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &global.config {
        cfg.apply_file(path).map_err(|e| usage(e.to_string()))?;
    }
    for s in &global.set {
        cfg.apply_override(s).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(seed) = global.seed {
        for k in seed_keys {
            cfg.set(k, &seed.to_string()).map_err(|e| usage(e.to_string()))?;
        }
    }
    for (k, v) in flags {
        cfg.set(k, v).map_err(|e| usage(e.to_string()))?;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| data(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| data(format!("cannot create {}: {e}", dir.display())))
}

fn create_parent(path: &Path) -> CmdResult {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => create_dir(dir),
        None => Ok(()),
    }
}

fn write_config(path: &Path, cfg: &RunConfig) -> CmdResult {
    write_file(path, &cfg.to_kv())?;
    eprintln!("resolved config: {}", path.display());
    Ok(())
}

fn cmd_sim(global: &Global, out: &Path, subjects: Option<usize>, sessions: Option<usize>) -> CmdResult {
    let mut flags = Vec::new();
    if let Some(s) = subjects {
        flags.push(("sim.n_subjects", s.to_string()));
    }
    if let Some(s) = sessions {
        flags.push(("sim.n_sessions", s.to_string()));
    }
    let cfg = resolve(global, &["sim.master_seed"], &flags)?;
    let corpus = simulate_corpus(&cfg.sim)?;
    write_corpus(out, &cfg.sim, &corpus)?;
    write_config(&out.join("run.conf"), &cfg)?;
    let frames: usize = corpus.iter().map(Recording::len).sum();
    println!(
        "{} recordings, {} subjects x {} sessions x {} conditions x {} repeats, {frames} frames, written to {}",
        corpus.len(),
        cfg.sim.n_subjects,
        cfg.sim.n_sessions,
        cfg.sim.conditions.len(),
        cfg.sim.recordings_per_condition,
        out.display()
    );
    Ok(())
}

fn cmd_train_gen(global: &Global, data_dir: &Path, intent: Intent, out: &Path) -> CmdResult {
    let cfg = resolve(global, &["train.seed"], &[])?;
    let corpus = load_corpus(data_dir)?;
    if corpus.is_empty() {
        return Err(data(format!("no recordings in {}", data_dir.display())));
    }
    create_parent(out)?;
    write_config(&out.with_extension("conf"), &cfg)?;
    let mut log = String::new();
    let (model, report) = train_one_intent::<f32>(&cfg.gen, &corpus, intent, Some(out.to_path_buf()), &mut |c| {
        eprintln!("{intent} {}", c.log_line());
        let _ = writeln!(log, "{}", c.log_line());
    })?;
    model.save(out, intent)?;
    let header = format!(
        "# intent={intent} train_examples={} val_examples={}\n",
        report.train_examples, report.val_examples
    );
    let footer = format!(
        "# steps={} stopped_epoch={} best_step={} best_val_loss={:.6} early_stopped={}\n",
        report.steps, report.stopped_epoch, report.best_step, report.best_val_loss, report.early_stopped
    );
    write_file(&out.with_extension("log"), &(header + &log + &footer))?;
    println!(
        "{intent}: best validation loss {:.4} at step {} of {}, checkpoint {}",
        report.best_val_loss,
        report.best_step,
        report.steps,
        out.display()
    );
    Ok(())
}

fn support_of(rec: Recording) -> Recording {
    match split_support_query(&rec) {
        Ok((support, _)) => support,
        Err(_) => rec,
    }
}

fn cmd_generate(global: &Global, models: &Path, support: &Path, n: Option<usize>, out: &Path) -> CmdResult {
    let flags: Vec<(&str, String)> = n.map(|n| ("eval.n_synthetic", n.to_string())).into_iter().collect();
    let cfg = resolve(global, &["sample.seed"], &flags)?;
    let models = IntentModelSet::<f32>::load_dir(models).map_err(|e| data(e.to_string()))?;
    let support = support_of(read_recording(support)?);
    let e = &cfg.eval;
    let batches = batch_generate(&models, &support, e.n_synthetic, e.prompt_len, e.window_len, &e.sampling)?;
    create_dir(out)?;
    for b in batches.values() {
        let path = write_synthetic(out, b)?;
        println!("{}: {} windows -> {}", b.intent, b.windows.len(), path.display());
    }
    write_config(&out.join("run.conf"), &cfg)
}

fn parse_classifiers(s: &str) -> Result<Vec<ClassifierKind>, Failure> {
    if s == "all" {
        return Ok(vec![ClassifierKind::Lda, ClassifierKind::Rf, ClassifierKind::Transformer]);
    }
    s.split(',')
        .map(|k| k.trim().parse().map_err(|e: Error| usage(e.to_string())))
        .collect()
}

fn parse_methods(s: &str) -> Result<Vec<Method>, Failure> {
    s.split(',')
        .map(|m| m.trim().parse().map_err(|e: Error| usage(e.to_string())))
        .collect()
}

fn cmd_eval(global: &Global, scenario: ScenarioKind, corpus_dir: &Path, classifier: &str, methods: &str, out: &Path) -> CmdResult {
    let kinds = parse_classifiers(classifier)?;
    let methods = parse_methods(methods)?;
    let cfg = resolve(global, &["eval.seed", "train.seed"], &[])?;
    let corpus = load_corpus(corpus_dir)?;
    let scenario = Scenario::build(scenario, &corpus, cfg.eval.inferral_per_subject)?;
    let mut models = Vec::new();
    if methods.contains(&Method::ChatEmg) {
        for e in &scenario.experiments {
            eprintln!("training generative models for {}", e.holdout);
            models.push(train_experiment_models::<f32>(e, &corpus, &cfg.gen, &mut |i, c| {
                eprintln!("{} {i} {}", e.holdout, c.log_line())
            })?);
        }
    }
    let classifiers: Vec<_> = kinds.iter().map(|&k| cfg.classifier(k)).collect();
    let report = run_scenario(&scenario, &corpus, &models, &classifiers, &methods, &cfg.eval)?;
    create_parent(out)?;
    report.write(out)?;
    write_config(&out.with_extension("conf"), &cfg)?;
    print!("{}", report.summary());
    Ok(())
}

fn is_synthetic(path: &Path) -> bool {
    path.with_extension(PROVENANCE_EXT).exists()
}

fn cmd_plot(global: &Global, kind: PlotKind, inputs: &[PathBuf], out: &Path, window: usize, per_channel: bool) -> CmdResult {
    let cfg = resolve(global, &["eval.tsne.seed"], &[])?;
    let csv = match kind {
        PlotKind::Signals => plot_signals(inputs, window)?,
        PlotKind::Tsne => plot_tsne(&cfg, inputs, per_channel)?,
    };
    create_parent(out)?;
    write_file(out, &csv)?;
    write_config(&out.with_extension("conf"), &cfg)?;
    println!("{} rows -> {}", csv.lines().count() - 1, out.display());
    Ok(())
}

/// Real and synthetic traces of one window, side by side.
fn plot_signals(inputs: &[PathBuf], window: usize) -> Result<String, Failure> {
    let [real_path, syn_path] = inputs else {
        return Err(usage("signals takes exactly two inputs: a real recording and a synthetic file"));
    };
    let real = read_recording(real_path)?;
    let (windows, prov) = read_synthetic(syn_path)?;
    let w = windows
        .get(window)
        .ok_or_else(|| usage(format!("window {window} out of range: {} has {} windows", syn_path.display(), windows.len())))?;
    let source = &prov[window].source;
    if source.recording_id != real.id() {
        return Err(data(format!(
            "window {window} was prompted from {}, not {}",
            source.recording_id,
            real.id()
        )));
    }
    let start = source
        .start
        .checked_sub(real.offset())
        .filter(|s| s + w.len() <= real.len())
        .ok_or_else(|| data(format!("{} does not cover frames {}..{}", real_path.display(), source.start, source.start + w.len())))?;
    let truth = real.tokens(start, start + w.len());
    let prompt_len = prompt_len_of(syn_path)?;
    let mut s = String::from("t,phase");
    for src in ["real", "synthetic"] {
        for c in 1..=CHANNELS {
            let _ = write!(s, ",{src}_emg{c}");
        }
    }
    s.push('\n');
    for r in 0..w.len() {
        let _ = write!(s, "{r},{}", if r < prompt_len { "prompt" } else { "generated" });
        for m in [&truth, &w.data] {
            for c in 0..CHANNELS {
                let _ = write!(s, ",{}", m.get(r, c));
            }
        }
        s.push('\n');
    }
    Ok(s)
}

fn prompt_len_of(syn_path: &Path) -> Result<usize, Failure> {
    let p = syn_path.with_extension(PROVENANCE_EXT);
    let text = fs::read_to_string(&p).map_err(|e| data(format!("cannot read {}: {e}", p.display())))?;
    text.lines()
        .next()
        .and_then(|h| h.split_whitespace().find_map(|t| t.strip_prefix("prompt_len=")))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| data(format!("{}:1: header lacks prompt_len", p.display())))
}

fn plot_tsne(cfg: &RunConfig, inputs: &[PathBuf], per_channel: bool) -> Result<String, Failure> {
    let mut windows: Vec<EmgWindow> = Vec::new();
    let mut origin: Vec<(&'static str, String)> = Vec::new();
    for path in inputs {
        let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        let (ws, src) = if is_synthetic(path) {
            (read_synthetic(path)?.0, "synthetic")
        } else {
            let rec = read_recording(path)?;
            (segment_windows(&rec, cfg.eval.window_len, cfg.eval.window_stride)?, "real")
        };
        if ws.iter().any(|w| w.len() != cfg.eval.window_len) {
            return Err(data(format!(
                "{}: windows are not eval.window_len={} rows long",
                path.display(),
                cfg.eval.window_len
            )));
        }
        origin.extend(ws.iter().map(|_| (src, name.clone())));
        windows.extend(ws);
    }
    if windows.len() < 2 {
        return Err(data("t-SNE needs at least two windows"));
    }
    let mut s = String::from("sample,channel,source,file,intent,x,y\n");
    let mut put = |channel: &str, points: &[[f64; 2]]| {
        for (i, p) in points.iter().enumerate() {
            let (src, file) = &origin[i];
            let _ = writeln!(s, "{i},{channel},{src},{file},{},{},{}", windows[i].intent, p[0], p[1]);
        }
    };
    if per_channel {
        for e in tsne_channels::<f64>(&windows, &cfg.tsne)? {
            put(&e.channel.to_string(), &e.result.points);
        }
    } else {
        let (x, _) = build_classifier_set::<f64>(&windows);
        put("all", &tsne_embed(&x, &cfg.tsne)?.points);
    }
    Ok(s)
}

fn dispatch(cli: Cli) -> CmdResult {
    let g = &cli.global;
    match cli.command {
        Command::Sim { out, subjects, sessions } => cmd_sim(g, &out, subjects, sessions),
        Command::TrainGen { data, intent, out } => cmd_train_gen(g, &data, intent.into(), &out),
        Command::Generate { models, support, n, out } => cmd_generate(g, &models, &support, n, &out),
        Command::Eval {
            scenario,
            corpus,
            classifier,
            methods,
            out,
        } => cmd_eval(g, scenario, &corpus, &classifier, &methods, &out),
        Command::Plot {
            kind,
            inputs,
            out,
            window,
            per_channel,
        } => cmd_plot(g, kind, &inputs, &out, window, per_channel),
    }
}

fn run_cli(cli: Cli) -> CmdResult {
    match cli.global.jobs {
        Some(0) => Err(usage("--jobs must be positive")),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| usage(format!("cannot size the worker pool: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

/// Runs one invocation (`args[0]` is the program name) and returns its exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run_cli(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
