use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aqm::config::{ConfigError, ExperimentConfig, PoolSpec, RegimeTag, Strategy};
use aqm::formats::{load, read_model, read_world, save, write_model, write_world, FormatError};
use aqm::harness::{
    mnist_questions, play_game_external, run_on, summarize, train_model, training_world, HarnessError, Overrides,
    ResultTable, Setup,
};
use aqm::play::play;
use aqm::protocol::Bridge;
use aqm::report::{export_results, read_csv, render_rows, render_table};
use aqm_core::engine::EngineError;
use aqm_core::likelihood::{Regime, TrainingRegime};
use aqm_core::mnist::{generate_world, NoisyAnswerer};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aqm", version, about = "Information-gain questioner for the digit counting game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world file of random digit images.
    GenWorld(GenWorldArgs),
    /// Train a count confusion model (indA or depA) and write it to a file.
    Train(TrainArgs),
    /// Run self-play games and export the accuracy curve.
    Selfplay(RunArgs),
    /// Run AQM and the random questioner on the same games.
    Compare(RunArgs),
    /// Print curves from an exported CSV file.
    Report(ReportArgs),
    /// Play the answerer yourself.
    Play(PlayArgs),
    /// Self-play against an answerer speaking the JSON-lines protocol.
    ServeProtocol(ServeArgs),
}

#[derive(Args)]
struct GenWorldArgs {
    /// Number of images.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short = 'o', long = "out")]
    out: PathBuf,
    /// Replace an existing file.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Config file of `key = value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    /// indA, depA or trueA.
    #[arg(long)]
    regime: Option<String>,
    /// aqm, random or multistep-<k>.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    turns: Option<usize>,
    #[arg(long)]
    games: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_candidates: Option<usize>,
    /// full, randQ:<n> or countQ:<n>.
    #[arg(long)]
    pool: Option<PoolSpec>,
    #[arg(long)]
    count_threshold: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    world_seed: Option<u64>,
    #[arg(long)]
    answerer_seed: Option<u64>,
    #[arg(long)]
    game_seed: Option<u64>,
    /// Additive smoothing per confusion cell.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Never ask the same question twice in a game.
    #[arg(long)]
    no_repeats: bool,
    /// Let the random questioner repeat questions.
    #[arg(long)]
    random_with_replacement: bool,
    /// Answerer recognizes each image once per game instead of per answer.
    #[arg(long)]
    fixed_recognition: bool,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Candidate world file instead of a generated one.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Training world file instead of a generated one.
    #[arg(long)]
    training: Option<PathBuf>,
    /// Trained confusion model instead of training one.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct OutputArgs {
    #[arg(long, env = "AQM_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Output file stem, relative to the output directory.
    #[arg(short = 'o', long = "out", default_value = "results")]
    out: PathBuf,
    /// Also write one whitespace-separated series file per curve.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Training world file instead of a generated one.
    #[arg(long)]
    training: Option<PathBuf>,
    #[arg(short = 'o', long = "out")]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// CSV written by selfplay, compare or serve-protocol.
    file: PathBuf,
}

#[derive(Args)]
struct PlayArgs {
    /// Candidate world file; generated from --world-seed when absent.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    n_candidates: usize,
    #[arg(long, default_value_t = 1)]
    world_seed: u64,
    /// Recognition accuracy the questioner assumes for you.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// trueA or depA.
    #[arg(long, default_value = "trueA")]
    regime: String,
    #[arg(long, default_value_t = 6)]
    turns: usize,
    /// Picks the secret image and the assumed per-property accuracies.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30_000)]
    n_train: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Talk to a peer over this process's stdin and stdout.
    Stdio,
    /// Spawn --command and talk over its pipes.
    Child,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Answerer program for child mode.
    #[arg(long)]
    command: Option<String>,
    /// Argument passed to the answerer program; repeatable.
    #[arg(long = "arg", allow_hyphen_values = true)]
    args: Vec<String>,
    /// Seconds to wait for each response.
    #[arg(long, default_value_t = 30.0)]
    timeout_secs: f64,
    #[command(flatten)]
    exp: ExperimentArgs,
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    output: OutputArgs,
}

enum Failure {
    Usage(String),
    Game(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Game(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Game(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match &e {
            HarnessError::Game { source: EngineError::AnswererFatal(_), .. } => Failure::Io(e.to_string()),
            HarnessError::Game { .. } => Failure::Game(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn parse_regime(s: &str) -> Result<Regime, Failure> {
    Regime::parse(s).ok_or_else(|| Failure::Usage(format!("unknown regime `{s}`; expected indA, depA or trueA")))
}

fn experiment(args: &ExperimentArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(r) = &args.regime {
        cfg.regime = RegimeTag(parse_regime(r)?);
    }
    if let Some(v) = args.strategy {
        cfg.strategy = v;
    }
    if let Some(v) = args.turns {
        cfg.turns = v;
    }
    if let Some(v) = args.games {
        cfg.n_games = v;
    }
    if let Some(v) = args.n_train {
        cfg.n_train = v;
    }
    if let Some(v) = args.n_candidates {
        cfg.n_candidates = v;
    }
    if let Some(v) = args.pool {
        cfg.pool = v;
    }
    if let Some(v) = args.count_threshold {
        cfg.count_threshold = v;
    }
    if let Some(v) = args.train_fraction {
        cfg.train_fraction = v;
    }
    if let Some(v) = args.world_seed {
        cfg.world_seed = v;
    }
    if let Some(v) = args.answerer_seed {
        cfg.answerer_seed = v;
    }
    if let Some(v) = args.game_seed {
        cfg.game_seed = v;
    }
    if let Some(v) = args.epsilon {
        cfg.epsilon = v;
    }
    if args.no_repeats {
        cfg.allow_repeats = false;
    }
    if args.random_with_replacement {
        cfg.random_with_replacement = true;
    }
    if args.fixed_recognition {
        cfg.fixed_recognition = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_world(path: &Path) -> Result<Vec<aqm_core::mnist::DigitImage>, Failure> {
    Ok(load(path, read_world)?)
}

fn load_inputs(inputs: &InputArgs, cfg: &mut ExperimentConfig) -> Result<Overrides, Failure> {
    let mut o = Overrides::default();
    if let Some(p) = &inputs.candidates {
        let world = load_world(p)?;
        cfg.n_candidates = world.len();
        o.candidates = Some(world);
    }
    if let Some(p) = &inputs.training {
        let world = load_world(p)?;
        cfg.n_train = world.len();
        o.training = Some(world);
    }
    if let Some(p) = &inputs.model {
        o.confusion = Some(load(p, read_model)?);
    }
    cfg.validate()?;
    Ok(o)
}

fn finish(tables: &[ResultTable], output: &OutputArgs, mut console: impl Write) -> Result<ExitCode, Failure> {
    for t in tables {
        write!(console, "{}", render_table(t))?;
    }
    fs::create_dir_all(&output.out_dir).map_err(|e| Failure::Io(format!("{}: {e}", output.out_dir.display())))?;
    let paths = export_results(tables, &output.out_dir.join(&output.out), output.plot_data)?;
    writeln!(console, "wrote {} and {}", paths.csv.display(), paths.json.display())?;
    for p in &paths.series {
        writeln!(console, "wrote {}", p.display())?;
    }
    let failed: usize = tables.iter().map(|t| t.failed_games).sum();
    if failed > 0 {
        writeln!(console, "{failed} game(s) ended in an error and were scored as losses")?;
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_world(args: GenWorldArgs) -> Result<ExitCode, Failure> {
    if args.n == 0 {
        return Err(Failure::Usage("--n must be positive".into()));
    }
    if args.n > u32::MAX as usize {
        return Err(Failure::Usage("--n is too large".into()));
    }
    let world = generate_world(args.n, args.seed);
    save(&args.out, args.force, |w| write_world(&world, w)).map_err(|e| match &e {
        FormatError::Io { source, .. } if source.kind() == io::ErrorKind::AlreadyExists => {
            Failure::Io(format!("{e} (use --force to replace it)"))
        }
        _ => e.into(),
    })?;
    Ok(ExitCode::SUCCESS)
}

fn train(args: TrainArgs) -> Result<ExitCode, Failure> {
    let mut cfg = experiment(&args.exp)?;
    let regime = cfg.regime();
    if regime == Regime::TrueA {
        return Err(Failure::Usage("trueA uses the answerer's exact distribution; there is nothing to train".into()));
    }
    let training = match &args.training {
        Some(p) => load_world(p)?,
        None => training_world(&cfg),
    };
    cfg.n_train = training.len();
    cfg.validate()?;
    let answerer = NoisyAnswerer::new(cfg.lambda, cfg.answerer_seed).map_err(|e| Failure::Usage(e.to_string()))?;
    let used = &training[..TrainingRegime { regime, train_fraction: cfg.train_fraction }.training_size(training.len())];
    let model = train_model(used, &mnist_questions(), &answerer, regime, cfg.epsilon, cfg.answerer_seed)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    save(&args.out, args.force, |w| write_model(&model, w))?;
    println!("trained {regime} on {} images; wrote {}", used.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn selfplay(args: RunArgs) -> Result<ExitCode, Failure> {
    let mut cfg = experiment(&args.exp)?;
    let overrides = load_inputs(&args.inputs, &mut cfg)?;
    let setup = Setup::build_with(&cfg, overrides)?;
    let table = run_on(&setup, &cfg, cfg.strategy)?;
    finish(&[table], &args.output, io::stdout().lock())
}

fn compare(args: RunArgs) -> Result<ExitCode, Failure> {
    let mut cfg = experiment(&args.exp)?;
    let overrides = load_inputs(&args.inputs, &mut cfg)?;
    let setup = Setup::build_with(&cfg, overrides)?;
    let aqm = run_on(&setup, &cfg, Strategy::Aqm)?;
    let random = run_on(&setup, &cfg, Strategy::Random)?;
    finish(&[aqm, random], &args.output, io::stdout().lock())
}

fn report(args: ReportArgs) -> Result<ExitCode, Failure> {
    let rows = load(&args.file, read_csv)?;
    print!("{}", render_rows(&rows));
    Ok(ExitCode::SUCCESS)
}

fn play_cmd(args: PlayArgs) -> Result<ExitCode, Failure> {
    let cfg = ExperimentConfig {
        lambda: args.lambda,
        regime: RegimeTag(parse_regime(&args.regime)?),
        turns: args.turns,
        n_train: args.n_train,
        n_candidates: args.n_candidates,
        world_seed: args.world_seed,
        answerer_seed: args.seed,
        game_seed: args.seed,
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    let mut overrides = Overrides::default();
    if let Some(p) = &args.world {
        overrides.candidates = Some(load_world(p)?);
    }
    let setup = Setup::build_with(&cfg, overrides)?;
    let target = setup.target(&cfg, 0);
    let summary = play(&setup, target, cfg.turns, io::stdin().lock(), io::stdout().lock())?;
    println!(
        "session: {} answer(s), {}",
        summary.answers.len(),
        if summary.success() { "target found" } else { "target missed" }
    );
    Ok(ExitCode::SUCCESS)
}

fn serve(args: ServeArgs) -> Result<ExitCode, Failure> {
    let mut cfg = experiment(&args.exp)?;
    let overrides = load_inputs(&args.inputs, &mut cfg)?;
    if !(args.timeout_secs > 0.0 && args.timeout_secs.is_finite()) {
        return Err(Failure::Usage("--timeout-secs must be positive".into()));
    }
    let timeout = Duration::from_secs_f64(args.timeout_secs);
    let mut bridge = match args.mode {
        Mode::Stdio => Bridge::over(io::stdin(), io::stdout(), timeout),
        Mode::Child => {
            let program = args.command.as_deref().ok_or_else(|| Failure::Usage("--mode child needs --command".into()))?;
            Bridge::spawn(program, &args.args, timeout).map_err(|e| Failure::Io(format!("{program}: {e}")))?
        }
    };
    let setup = Setup::build_with(&cfg, overrides)?;
    bridge.handshake().map_err(|e| Failure::Io(e.to_string()))?;
    let started = Instant::now();
    let mut outcomes = Vec::with_capacity(cfg.n_games);
    for game in 0..cfg.n_games {
        outcomes.push(play_game_external(&setup, &cfg, cfg.strategy, game, &mut bridge)?);
    }
    let table = summarize(&setup, &cfg, cfg.strategy, &outcomes, started);
    match args.mode {
        Mode::Stdio => finish(&[table], &args.output, io::stderr().lock()),
        Mode::Child => finish(&[table], &args.output, io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenWorld(a) => gen_world(a),
        Command::Train(a) => train(a),
        Command::Selfplay(a) => selfplay(a),
        Command::Compare(a) => compare(a),
        Command::Report(a) => report(a),
        Command::Play(a) => play_cmd(a),
        Command::ServeProtocol(a) => serve(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("aqm: {e}");
            ExitCode::from(e.code())
        }
    }
}
