mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use aspfolio::classify::{self, ForestOptions, SvmOptions, TrainedModel};
use aspfolio::dataset::{self, LabeledInstance};
use aspfolio::features::{self, FeatureVector};
use aspfolio::ground::{parse_ground_program, GroundProgram};
use aspfolio::harness::{self, Policy, RuntimeMatrix, TimeBasis};
use aspfolio::runner::{self, ProgramSource, ResourceLimits, ToolSpec};
use aspfolio::selector::{self, answer_names, Outcome, Selector, SolverSpec};
use aspfolio::strat::{self, ProgramClass};

use config::{parse_bytes, pick, FileConfig};

#[derive(Parser, Debug)]
#[command(name = "aspfolio", version, about = "Per-instance solver selection for ground ASP programs")]
#[command(arg_required_else_help = true, propagate_version = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for splitting and training
    #[arg(long, global = true, env = "ASPFOLIO_SEED", help_heading = "Global options")]
    seed: Option<u64>,
    /// Output style
    #[arg(long, global = true, value_enum, default_value_t = Format::Plain, help_heading = "Global options")]
    format: Format,
    /// More log output; repeat for more
    #[arg(short, long, global = true, action = clap::ArgAction::Count, help_heading = "Global options")]
    verbose: u8,
    /// TOML file with defaults for pool, model, grounder, limits and seed
    #[arg(long, global = true, env = "ASPFOLIO_CONFIG", help_heading = "Global options")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Plain,
    Records,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the feature vector of ground programs
    GroundStats(GroundStatsArgs),
    /// Label instances and split them into train/valid/test files
    Split(SplitArgs),
    /// Train a selection model
    Train(TrainArgs),
    /// Choose a solver for one ground program
    Select(SelectArgs),
    /// Ground, select and solve one program under resource limits
    Run(RunArgs),
    /// Score policies on recorded runtimes
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct GroundStatsArgs {
    /// Ground program files; `-` or none reads standard input
    files: Vec<PathBuf>,
    /// Also write all vectors to this features CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Runtime records CSV
    #[arg(long, requires = "features", conflicts_with = "labeled")]
    records: Option<PathBuf>,
    /// Features CSV matching the records
    #[arg(long)]
    features: Option<PathBuf>,
    /// Already-labeled CSV
    #[arg(long)]
    labeled: Option<PathBuf>,
    /// Solver order for breaking runtime ties, comma separated
    #[arg(long, value_delimiter = ',')]
    priority: Vec<String>,
    /// Train, valid and test shares
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.25, 0.25])]
    ratios: Vec<f64>,
    /// Directory for train.csv, valid.csv and test.csv
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Svm,
    Forest,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Labeled training CSV
    #[arg(long)]
    train: PathBuf,
    /// Labeled validation CSV used for grid search
    #[arg(long)]
    valid: PathBuf,
    /// Labeled test CSV to report on after training
    #[arg(long)]
    test: Option<PathBuf>,
    /// Classifier
    #[arg(long, value_enum, default_value_t = Kind::Svm)]
    kind: Kind,
    /// SVM epochs
    #[arg(long, default_value_t = classify::svm::DEFAULT_EPOCHS)]
    epochs: usize,
    /// Model file to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Ground program file; `-` or none reads standard input
    file: Option<PathBuf>,
    /// Model file
    #[arg(long, env = "ASPFOLIO_MODEL")]
    model: Option<PathBuf>,
    /// Solver pool file (TOML)
    #[arg(long, env = "ASPFOLIO_POOL")]
    pool: Option<PathBuf>,
    /// Print features, model id and selection time
    #[arg(long)]
    explain: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Program passed to the grounder
    #[arg(long)]
    program: PathBuf,
    /// Grounder command line; the program path is appended
    #[arg(long, env = "ASPFOLIO_GROUNDER")]
    grounder_cmd: Option<String>,
    /// Model file
    #[arg(long, env = "ASPFOLIO_MODEL")]
    model: Option<PathBuf>,
    /// Solver pool file (TOML)
    #[arg(long, env = "ASPFOLIO_POOL")]
    pool: Option<PathBuf>,
    /// Seconds for grounding, selection and solving together [default: 600]
    #[arg(long, env = "ASPFOLIO_TIME_LIMIT")]
    time_limit: Option<f64>,
    /// Memory limit in bytes, or with a K/M/G suffix [default: 15G]
    #[arg(long, env = "ASPFOLIO_MEM_LIMIT")]
    mem_limit: Option<String>,
    /// Print phase timings and the chosen solver
    #[arg(long)]
    explain: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Runtime records CSV
    #[arg(long)]
    records: PathBuf,
    /// instanceId,domain CSV
    #[arg(long)]
    domains: Option<PathBuf>,
    /// Model file; adds a selector policy
    #[arg(long, requires = "features")]
    model: Option<PathBuf>,
    /// Features CSV the model predicts from
    #[arg(long)]
    features: Option<PathBuf>,
    /// Count grounding time in solver times
    #[arg(long)]
    with_grounding: bool,
    /// Directory for report.txt and the cactus data files
    #[arg(long)]
    out: Option<PathBuf>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

fn read_program(path: Option<&Path>) -> Result<GroundProgram> {
    match path {
        None => parse_ground_program(io::stdin().lock()).context("standard input"),
        Some(p) if p == Path::new("-") => parse_ground_program(io::stdin().lock()).context("standard input"),
        Some(p) => parse_ground_program(BufReader::new(open(p)?)).with_context(|| p.display().to_string()),
    }
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    classify::read_model(open(path)?).with_context(|| format!("model {}", path.display()))
}

fn load_pool(path: Option<&Path>) -> Result<Vec<SolverSpec>> {
    let mut pool = match path {
        Some(p) => selector::load_pool(p)?,
        None => selector::default_pool(),
    };
    let overrides = config::solver_overrides(pool.iter().map(|s| s.id.as_str()));
    selector::override_executables(&mut pool, &overrides);
    Ok(pool)
}

struct Ctx {
    format: Format,
    seed: u64,
    file: FileConfig,
}

fn instance_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn ground_stats(ctx: &Ctx, args: &GroundStatsArgs) -> Result<()> {
    let files: Vec<Option<&Path>> = if args.files.is_empty() {
        vec![None]
    } else {
        args.files.iter().map(|p| Some(p.as_path())).collect()
    };
    let mut rows: Vec<(String, FeatureVector)> = Vec::new();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for f in files {
        let p = read_program(f)?;
        let id = f.map_or_else(|| "-".to_string(), instance_id);
        let fv = features::extract(&p).with_context(|| id.clone())?;
        let class = match strat::classify_program(&p) {
            ProgramClass::SolverFree => "solver-free",
            ProgramClass::NeedsSolver => "needs-solver",
        };
        match ctx.format {
            Format::Records => writeln!(out, "instance={id} {fv} class={class}")?,
            Format::Plain => {
                if args.files.len() > 1 {
                    writeln!(out, "# {id}")?;
                }
                for (k, v) in fv.record() {
                    writeln!(out, "{k:<3} {v}")?;
                }
                writeln!(out, "class {class}")?;
            }
        }
        rows.push((id, fv));
    }
    if let Some(csv) = &args.csv {
        dataset::write_features(create(csv)?, rows.iter().map(|(i, f)| (i.as_str(), f)))?;
    }
    Ok(())
}

fn split(ctx: &Ctx, args: &SplitArgs) -> Result<()> {
    let instances: Vec<LabeledInstance> = match (&args.records, &args.features, &args.labeled) {
        (Some(r), Some(f), None) => {
            let records = dataset::read_records(open(r)?).with_context(|| r.display().to_string())?;
            let feats = dataset::read_features(open(f)?).with_context(|| f.display().to_string())?;
            let report = dataset::label_instances(&records, &feats, &args.priority);
            for (what, ids) in [
                ("unsolved", &report.unsolved),
                ("without records", &report.missing_records),
                ("without features", &report.missing_features),
            ] {
                if !ids.is_empty() {
                    log::warn!("{} instances {what} skipped: {}", ids.len(), ids.join(" "));
                }
            }
            report.labeled
        }
        (None, None, Some(l)) => dataset::read_labeled(open(l)?).with_context(|| l.display().to_string())?,
        _ => bail!("give either --records with --features, or --labeled"),
    };
    let ratios: [f64; 3] = args
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| anyhow!("--ratios needs three values"))?;
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || ratios.iter().sum::<f64>() <= 0.0 {
        bail!("--ratios must be nonnegative with a positive sum");
    }
    let s = dataset::stratified_split(&instances, ratios, ctx.seed)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    for (name, part) in ["train", "valid", "test"].iter().zip(s.parts()) {
        let path = args.out_dir.join(format!("{name}.csv"));
        dataset::write_labeled(create(&path)?, part)?;
        match ctx.format {
            Format::Plain => println!("{name:<6} {:>6}  {}", part.len(), path.display()),
            Format::Records => println!("part={name} size={} path={}", part.len(), path.display()),
        }
    }
    Ok(())
}

fn read_labeled(path: &Path) -> Result<Vec<LabeledInstance>> {
    dataset::read_labeled(open(path)?).with_context(|| path.display().to_string())
}

fn print_eval(ctx: &Ctx, name: &str, r: &classify::EvalReport) {
    match ctx.format {
        Format::Plain => println!("{name}:\n{r}"),
        Format::Records => println!(
            "set={name} precision={:.6} recall={:.6} f1={:.6} accuracy={:.6}",
            r.precision,
            r.recall,
            r.f1,
            r.accuracy()
        ),
    }
}

fn train(ctx: &Ctx, args: &TrainArgs) -> Result<()> {
    let train = read_labeled(&args.train)?;
    let valid = read_labeled(&args.valid)?;
    let model = match args.kind {
        Kind::Svm => classify::train_svm(
            &train,
            &valid,
            &SvmOptions {
                epochs: args.epochs,
                seed: ctx.seed,
                ..SvmOptions::default()
            },
        )?,
        Kind::Forest => classify::train_forest(
            &train,
            &valid,
            &ForestOptions {
                seed: ctx.seed,
                ..ForestOptions::default()
            },
        )?,
    };
    classify::write_model(&model, create(&args.out)?)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    match ctx.format {
        Format::Plain => println!("model {} written to {}", model.id(), args.out.display()),
        Format::Records => println!("model={} path={}", model.id(), args.out.display()),
    }
    if !valid.is_empty() {
        print_eval(ctx, "valid", &model.evaluate(&valid)?);
    }
    if let Some(t) = &args.test {
        print_eval(ctx, "test", &model.evaluate(&read_labeled(t)?)?);
    }
    Ok(())
}

fn model_path(flag: &Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    pick([flag.clone(), file.model.clone()]).ok_or_else(|| anyhow!("no model given (--model, ASPFOLIO_MODEL or config file)"))
}

fn select(ctx: &Ctx, args: &SelectArgs) -> Result<()> {
    let model = load_model(&model_path(&args.model, &ctx.file)?)?;
    let pool = load_pool(pick([args.pool.clone(), ctx.file.pool.clone()]).as_deref())?;
    let sel = Selector::new(model, pool)?;
    let p = read_program(args.file.as_deref())?;
    let d = sel.select(&p)?;
    let secs = d.elapsed.as_secs_f64();
    match (ctx.format, &d.outcome) {
        (Format::Plain, Outcome::Chosen(s)) => {
            let spec = sel.solver(s).expect("chosen from pool");
            println!("solver {s}");
            println!("command {} {}", spec.executable.display(), spec.args.join(" "));
        }
        (Format::Plain, Outcome::SolverFree(Some(set))) => {
            println!("solver-free");
            println!("answer {}", answer_names(&p, set).join(" "));
        }
        (Format::Plain, Outcome::SolverFree(None)) => println!("solver-free\nno answer set"),
        (Format::Records, o) => {
            let mut line = match o {
                Outcome::Chosen(s) => format!("decision=chosen solver={s}"),
                Outcome::SolverFree(Some(set)) => {
                    format!("decision=solver-free answer={:?}", answer_names(&p, set).join(" "))
                }
                Outcome::SolverFree(None) => "decision=solver-free answer=none".to_string(),
            };
            if args.explain {
                line.push_str(&format!(" model={} elapsed={secs:.6}", d.model_id));
                if let Some(f) = &d.features {
                    line.push_str(&format!(" {f}"));
                }
            }
            println!("{line}");
        }
    }
    if args.explain && ctx.format == Format::Plain {
        println!("model {}", d.model_id);
        println!("elapsed {secs:.6}");
        if let Some(f) = &d.features {
            for (k, v) in f.record() {
                println!("{k:<3} {v}");
            }
        }
    }
    Ok(())
}

fn run(ctx: &Ctx, args: &RunArgs) -> Result<i32> {
    let model = load_model(&model_path(&args.model, &ctx.file)?)?;
    let pool = load_pool(pick([args.pool.clone(), ctx.file.pool.clone()]).as_deref())?;
    let sel = Selector::new(model, pool)?;
    let grounder = pick([args.grounder_cmd.clone(), ctx.file.grounder.clone()])
        .unwrap_or_else(|| "gringo --output=smodels".to_string());
    let grounder = ToolSpec::from_command_line(&grounder)?;
    let defaults = ResourceLimits::default();
    let time = pick([args.time_limit, ctx.file.time_limit]).map_or(Ok(defaults.time), |t| {
        Duration::try_from_secs_f64(t).map_err(|_| anyhow!("invalid time limit {t}"))
    })?;
    let memory = match pick([args.mem_limit.clone(), ctx.file.mem_limit.clone()]) {
        Some(m) => parse_bytes(&m)?,
        None => defaults.memory,
    };
    let limits = ResourceLimits::new(time, memory)?;
    let o = runner::run_pipeline(ProgramSource::Path(&args.program), &grounder, &sel, limits)?;
    match ctx.format {
        Format::Records => println!("{}", o.record_line()),
        Format::Plain => {
            println!("status {}", o.status.tag());
            if let runner::Status::Error(e) = &o.status {
                println!("error {e}");
            }
            if let Some(a) = &o.answer {
                println!("answer {}", a.trim_end());
            }
            if args.explain {
                println!("solver {}", o.solver.as_deref().unwrap_or("-"));
                println!(
                    "time wall {:.3} ground {:.3} select {:.3} solve {:.3}",
                    o.wall_time, o.phases.ground, o.phases.select, o.phases.solve
                );
                println!("peak_mem {}", o.peak_mem);
                println!("memory_guard {:?}", o.mem_enforcement);
            }
        }
    }
    Ok(match o.status {
        runner::Status::Error(_) => 1,
        _ => 0,
    })
}

fn evaluate(ctx: &Ctx, args: &EvaluateArgs) -> Result<()> {
    let records = dataset::read_records(open(&args.records)?).with_context(|| args.records.display().to_string())?;
    let domains = match &args.domains {
        Some(d) => dataset::read_domains(open(d)?).with_context(|| d.display().to_string())?,
        None => BTreeMap::new(),
    };
    let mut m = RuntimeMatrix::new(records, domains)?;
    if args.with_grounding {
        m.basis = TimeBasis::WithGrounding;
    }
    let partial = m.partial();
    if !partial.is_empty() {
        log::warn!("instances missing some solver rows: {}", partial.join(" "));
    }
    let mut scores = vec![harness::score_policy(&m, &Policy::VirtualBest, None)?];
    for s in &m.solvers {
        scores.push(harness::score_policy(&m, &Policy::SingleBest(s.clone()), None)?);
    }
    if let (Some(mp), Some(fp)) = (&args.model, &args.features) {
        let model = load_model(mp)?;
        let feats = dataset::read_features(open(fp)?).with_context(|| fp.display().to_string())?;
        let fallback = m.single_best().unwrap_or_default().to_string();
        let mut choices = BTreeMap::new();
        for inst in &m.instances {
            let c = match feats.get(inst) {
                Some(f) => model.predict(f)?.to_string(),
                None => {
                    log::warn!("no features for {inst}; using {fallback}");
                    fallback.clone()
                }
            };
            choices.insert(inst.clone(), c);
        }
        let choose = |i: &str| choices[i].clone();
        scores.push(harness::score_policy(&m, &Policy::Selector(model.id()), Some(&choose))?);
    }
    let report = harness::render_report(&scores)?;
    match ctx.format {
        Format::Plain => print!("{}", report.table),
        Format::Records => {
            for s in &scores {
                println!("policy={} solved={}", s.policy, s.solved);
            }
        }
    }
    if let Some(dir) = &args.out {
        report
            .write_to_dir(dir)
            .with_context(|| format!("cannot write report to {}", dir.display()))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32> {
    let file = FileConfig::load(cli.global.config.as_deref())?;
    let verbosity = cli.global.verbose.max(file.verbose.unwrap_or(0));
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    let ctx = Ctx {
        format: cli.global.format,
        seed: pick([cli.global.seed, file.seed]).unwrap_or(0),
        file,
    };
    match &cli.command {
        Command::GroundStats(a) => ground_stats(&ctx, a)?,
        Command::Split(a) => split(&ctx, a)?,
        Command::Train(a) => train(&ctx, a)?,
        Command::Select(a) => select(&ctx, a)?,
        Command::Run(a) => return run(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
