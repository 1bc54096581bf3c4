//! Command-line front end: dataset generation, training, evaluation, the
//! random baseline, tuning and the full cross-validated experiment.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use pareto_choice::evaluation::{holdout_split, random_baseline_report, EvalReport};
use pareto_choice::io::{dataset_fingerprint, fingerprint_hex, ModelFile};
use pareto_choice::{
    generate_dataset, read_dataset, read_model, run_problem, train, write_dataset, write_model,
    Architecture, CvConfig, Dataset, DomScope, ExperimentConfig, LossWeights, NormConfig,
    NormPlacement, OptimizerKind, Problem, SearchSpace, TrainConfig, TunedTrainer, TunerKind,
};

use config::{CvArgs, DataArgs, RunConfig, TrainArgs, TuneArgs};
use report::{write_atomic, SummaryRow};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "PARETO_CHOICE_THREADS";

/// Failure class of a command; each maps to a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<pareto_choice::Error> for CliError {
    fn from(e: pareto_choice::Error) -> Self {
        use pareto_choice::Error as E;
        let kind = match &e {
            E::InvalidArgument(_) => ErrorKind::Usage,
            E::TrainingDiverged { .. } => ErrorKind::Numerical,
            E::Parse { .. } | E::Format(_) | E::Io(_) => ErrorKind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "pareto-choice",
    version,
    about = "Learn subset choice functions with Pareto-embeddings"
)]
pub struct Cli {
    /// TOML file of `key = value` settings; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a labelled benchmark dataset as JSON Lines.
    Generate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model with a fixed configuration.
    Train {
        /// Training dataset.
        #[arg(long)]
        data: PathBuf,
        /// Optional validation dataset, scored after every epoch.
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        /// Model output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-epoch loss log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Label written in the `split` column.
        #[arg(long, default_value = "all")]
        split: String,
        /// Report path (CSV); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score random Bernoulli selection on a dataset.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        /// Inclusion probability of each object.
        #[arg(long)]
        p: Option<f64>,
        /// Number of task-trials.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune hyperparameters on a train/validation split of a dataset.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        tune: TuneArgs,
        /// Fraction of tasks held out for validation.
        #[arg(long)]
        val_frac: Option<f64>,
        /// Trial log (CSV); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to save the best trial's model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Generate, tune and cross-validate on each problem.
    Experiment {
        /// Comma-separated problem names, or `all`.
        #[arg(long, value_delimiter = ',')]
        problems: Option<Vec<String>>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        tune: TuneArgs,
        #[command(flatten)]
        cv: CvArgs,
        /// Also run every problem with the stress weight pinned to 0.
        #[arg(long)]
        ablate_mds: bool,
        /// Directory for summary.csv, eval.csv and summary.svg.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> CliResult {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::usage(format!(
                "{THREADS_ENV} must be a positive integer, got '{value}'"
            ))
        })?;
    // a pool may already exist when called twice in one process (tests)
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn run(cli: Cli) -> CliResult {
    let file = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate { mut data, out } => {
            data.fill_from(&file);
            let out = required(out, file.out.as_deref(), "--out")?;
            cmd_generate(&data, &out)
        }
        Command::Train {
            data,
            val,
            mut train,
            out,
            log,
        } => {
            train.fill_from(&file);
            let out = required(out, file.out.as_deref(), "--out")?;
            let log = log.or_else(|| file.log.as_deref().map(PathBuf::from));
            cmd_train(&data, val.as_deref(), &train, &out, log.as_deref())
        }
        Command::Eval {
            model,
            data,
            split,
            out,
        } => {
            let out = out.or_else(|| file.out.as_deref().map(PathBuf::from));
            cmd_eval(&model, &data, &split, out.as_deref())
        }
        Command::Baseline {
            data,
            p,
            trials,
            seed,
            out,
        } => {
            let p = p.or(file.p).unwrap_or(0.5);
            let trials = trials.or(file.trials).unwrap_or(10_000);
            let seed = seed.or(file.seed).unwrap_or(0);
            let out = out.or_else(|| file.out.as_deref().map(PathBuf::from));
            cmd_baseline(&data, p, trials, seed, out.as_deref())
        }
        Command::Tune {
            data,
            mut train,
            mut tune,
            val_frac,
            out,
            model,
        } => {
            train.fill_from(&file);
            tune.fill_from(&file);
            let val_frac = val_frac.or(file.val_frac).unwrap_or(1.0 / 9.0);
            let out = out.or_else(|| file.out.as_deref().map(PathBuf::from));
            cmd_tune(
                &data,
                &train,
                &tune,
                val_frac,
                out.as_deref(),
                model.as_deref(),
            )
        }
        Command::Experiment {
            problems,
            mut data,
            mut train,
            mut tune,
            mut cv,
            ablate_mds,
            out_dir,
        } => {
            data.fill_from(&file);
            train.fill_from(&file);
            tune.fill_from(&file);
            cv.fill_from(&file);
            let problems = problems
                .or_else(|| file.problems.clone())
                .ok_or_else(|| CliError::usage("--problems is required"))?;
            let out_dir = required(out_dir, file.out_dir.as_deref(), "--out-dir")?;
            let ablate = ablate_mds || file.ablate_mds.unwrap_or(false);
            cmd_experiment(&problems, &data, &train, &tune, &cv, ablate, &out_dir)
        }
    }
}

fn required(flag: Option<PathBuf>, file: Option<&str>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| file.map(PathBuf::from))
        .ok_or_else(|| CliError::usage(format!("{name} is required")))
}

fn parse_problem(name: &str) -> CliResult<Problem> {
    name.parse::<Problem>()
        .map_err(|e| CliError::usage(e.to_string()))
}

fn parse_problems(names: &[String]) -> CliResult<Vec<Problem>> {
    if names.len() == 1 && names[0].eq_ignore_ascii_case("all") {
        return Ok(Problem::ALL.to_vec());
    }
    names.iter().map(|n| parse_problem(n.trim())).collect()
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let f = File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    read_dataset(BufReader::new(f)).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn save(path: &Path, bytes: &[u8]) -> CliResult {
    write_atomic(path, bytes)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult {
    match path {
        Some(p) => save(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::data(format!("cannot write to stdout: {e}"))),
    }
}

fn train_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let d = TrainConfig::default();
    let weights = match &args.weights {
        Some(w) if w.len() == 4 => LossWeights::from_array([w[0], w[1], w[2], w[3]])?,
        Some(w) => {
            return Err(CliError::usage(format!(
                "--weights takes 4 values, got {}",
                w.len()
            )))
        }
        None => d.weights,
    };
    let optimizer = match args
        .optimizer
        .as_deref()
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        None | Some("adam") => OptimizerKind::default(),
        Some("sgd") => OptimizerKind::Sgd { momentum: 0.9 },
        Some(o) => return Err(CliError::usage(format!("unknown optimizer '{o}'"))),
    };
    let dom_scope = match args.dom_scope.as_deref() {
        None | Some("all") => DomScope::AllPoints,
        Some("chosen") => DomScope::ChosenOnly,
        Some(s) => return Err(CliError::usage(format!("unknown dom scope '{s}'"))),
    };
    let cfg = TrainConfig {
        epochs: args.epochs.unwrap_or(d.epochs),
        batch_size: args.batch_size.unwrap_or(d.batch_size),
        max_lr: args.max_lr.unwrap_or(d.max_lr),
        base_lr_fraction: args.base_lr_fraction.unwrap_or(d.base_lr_fraction),
        cycle_steps: args.cycle_steps.or(d.cycle_steps),
        weights,
        dom_scope,
        optimizer,
        seed: args.train_seed.unwrap_or(d.seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn norm_config(args: &TrainArgs) -> CliResult<NormConfig> {
    let placement = match args.norm_placement.as_deref() {
        None | Some("after") => NormPlacement::AfterActivation,
        Some("before") => NormPlacement::BeforeActivation,
        Some(p) => return Err(CliError::usage(format!("unknown norm placement '{p}'"))),
    };
    Ok(NormConfig {
        placement,
        ..NormConfig::default()
    })
}

fn architecture(args: &TrainArgs) -> CliResult<Architecture> {
    Ok(Architecture {
        hidden_layers: args.layers.unwrap_or(1),
        hidden_units: args.units.unwrap_or(32),
        output_dim: args.output_dim.unwrap_or(2),
        norm: norm_config(args)?,
    })
}

fn trainer(train: &TrainArgs, tune: &TuneArgs) -> CliResult<TunedTrainer> {
    let d = SearchSpace::default();
    let space = SearchSpace {
        pinned: [None; 4],
        lr_range: (
            tune.lr_min.unwrap_or(d.lr_range.0),
            tune.lr_max.unwrap_or(d.lr_range.1),
        ),
        layers: (
            tune.layers_min.unwrap_or(d.layers.0),
            tune.layers_max.unwrap_or(d.layers.1),
        ),
        units: (
            tune.units_min.unwrap_or(d.units.0),
            tune.units_max.unwrap_or(d.units.1),
        ),
    };
    space.validate()?;
    let tuner = match &tune.tuner {
        Some(t) => t.parse::<TunerKind>()?,
        None => TunerKind::Bayesian,
    };
    let budget = tune.budget.unwrap_or(60);
    if budget == 0 {
        return Err(CliError::usage("--budget must be at least 1"));
    }
    Ok(TunedTrainer {
        base: train_config(train)?,
        space,
        budget,
        tuner,
        output_dim: train.output_dim.unwrap_or(2),
        norm: norm_config(train)?,
    })
}

pub fn cmd_generate(args: &DataArgs, out: &Path) -> CliResult {
    let problem = parse_problem(
        args.problem
            .as_deref()
            .ok_or_else(|| CliError::usage("--problem is required"))?,
    )?;
    let tasks = args
        .tasks
        .ok_or_else(|| CliError::usage("--tasks is required"))?;
    let data = generate_dataset(
        &problem.spec(),
        tasks,
        args.size.unwrap_or(10),
        args.seed.unwrap_or(0),
    )?;
    let mut buf = Vec::new();
    write_dataset(&data, &mut buf)?;
    save(out, &buf)
}

pub fn cmd_train(
    data: &Path,
    val: Option<&Path>,
    args: &TrainArgs,
    out: &Path,
    log: Option<&Path>,
) -> CliResult {
    let train_set = load_dataset(data)?;
    let val_set = val.map(load_dataset).transpose()?;
    let cfg = train_config(args)?;
    let arch = architecture(args)?;
    let report = train(&train_set, val_set.as_ref(), &arch, &cfg)?;
    let model = ModelFile::from_params(
        &report.params,
        Some(cfg),
        cfg.seed,
        Some(dataset_fingerprint(&train_set)),
    );
    let mut buf = Vec::new();
    write_model(&model, &mut buf)?;
    save(out, &buf)?;
    if let Some(log) = log {
        save(log, &report::train_log_csv(&report.epochs))?;
    }
    Ok(())
}

pub fn cmd_eval(model: &Path, data: &Path, split: &str, out: Option<&Path>) -> CliResult {
    let f = File::open(model)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", model.display())))?;
    let params = read_model(BufReader::new(f))?.to_params()?;
    let dataset = load_dataset(data)?;
    eprintln!(
        "dataset fingerprint {}",
        fingerprint_hex(dataset_fingerprint(&dataset))
    );
    let mut report = pareto_choice::evaluate(&dataset, &params)?;
    report.split = split.to_string();
    emit(out, &report::eval_csv([&report]))
}

pub fn cmd_baseline(
    data: &Path,
    p: f64,
    trials: usize,
    seed: u64,
    out: Option<&Path>,
) -> CliResult {
    let dataset = load_dataset(data)?;
    let report = random_baseline_report(&dataset, p, trials, seed)?;
    emit(out, &report::eval_csv([&report]))
}

pub fn cmd_tune(
    data: &Path,
    train: &TrainArgs,
    tune: &TuneArgs,
    val_frac: f64,
    out: Option<&Path>,
    model: Option<&Path>,
) -> CliResult {
    let dataset = load_dataset(data)?;
    let seed = tune.tune_seed.unwrap_or(0);
    let (train_idx, val_idx) = holdout_split(dataset.len(), val_frac, seed)?;
    let (train_set, val_set) = (dataset.subset(&train_idx)?, dataset.subset(&val_idx)?);
    let trainer = trainer(train, tune)?;
    let outcome = trainer.tune(&trainer.space, &train_set, &val_set, seed)?;
    for t in &outcome.trials {
        eprintln!(
            "trial {:>3}: val A-mean {:.4} ({:.1}s)",
            t.index,
            t.score,
            t.wall_clock.as_secs_f64()
        );
    }
    emit(out, &report::trials_csv(&outcome.trials))?;
    if let Some(path) = model {
        let params = outcome.best_payload.ok_or_else(|| CliError {
            kind: ErrorKind::Numerical,
            message: "every trial diverged".into(),
        })?;
        let cfg = TrainConfig {
            seed: outcome.trials[outcome.best_index].seed,
            ..outcome.best_config.apply(&trainer.base)
        };
        let file = ModelFile::from_params(
            &params,
            Some(cfg),
            cfg.seed,
            Some(dataset_fingerprint(&train_set)),
        );
        let mut buf = Vec::new();
        write_model(&file, &mut buf)?;
        save(path, &buf)?;
    }
    Ok(())
}

pub fn cmd_experiment(
    problems: &[String],
    data: &DataArgs,
    train: &TrainArgs,
    tune: &TuneArgs,
    cv: &CvArgs,
    ablate: bool,
    out_dir: &Path,
) -> CliResult {
    let problems = parse_problems(problems)?;
    let d = CvConfig::default();
    let cfg = ExperimentConfig {
        n_tasks: data.tasks.unwrap_or(2048),
        task_size: data.size.unwrap_or(10),
        data_seed: data.seed.unwrap_or(0),
        cv: CvConfig {
            repetitions: cv.reps.unwrap_or(d.repetitions),
            test_frac: cv.test_frac.unwrap_or(d.test_frac),
            val_frac: cv.val_frac.unwrap_or(d.val_frac),
            seed: cv.cv_seed.unwrap_or(d.seed),
        },
        trainer: trainer(train, tune)?,
    };
    if cfg.cv.repetitions == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut evals: Vec<EvalReport> = Vec::new();
    for problem in problems {
        let started = std::time::Instant::now();
        let outcome = run_problem(problem, &cfg, ablate)?;
        let arms = std::iter::once(("full", &outcome.full))
            .chain(outcome.no_mds.as_ref().map(|o| ("no_mds", o)));
        for (arm, cv_out) in arms {
            rows.push(SummaryRow {
                problem: problem.name().to_string(),
                arm: arm.to_string(),
                repetitions: cv_out.summary.repetitions,
                n_tasks: outcome.n_tasks,
                mean_a_mean: cv_out.summary.mean,
                std_a_mean: cv_out.summary.std,
            });
            evals.extend(cv_out.reports.iter().map(|r| EvalReport {
                split: format!("test_{arm}"),
                ..r.clone()
            }));
            eprintln!(
                "{:<6} {:<6} mean A-mean {:.4} ± {:.4}",
                problem.name(),
                arm,
                cv_out.summary.mean,
                cv_out.summary.std
            );
        }
        eprintln!(
            "{:<6} done in {:.1}s",
            problem.name(),
            started.elapsed().as_secs_f64()
        );
        save(&out_dir.join("summary.csv"), &report::summary_csv(&rows))?;
        save(&out_dir.join("eval.csv"), &report::eval_csv(&evals))?;
        save(
            &out_dir.join("summary.svg"),
            report::summary_svg(&rows).as_bytes(),
        )?;
    }
    Ok(())
}
