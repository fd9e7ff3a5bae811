use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use aby3_core::driver::{
    mean_rounds, run_party_training, simulate_training, ModelFile, Partition, RevealTo, SharesFile,
    StatsFile,
};
use aby3_core::evaluation::{
    kfold_cv, load_csv, read_names_file, CsvOptions, CvBackend, Dataset, LabelColumn, LinearModel,
    OracleSigmoid,
};
use aby3_core::piecewise::{grid, sigmoid_table, SigmoidKind};
use aby3_core::transport::tcp::{self, PartyConfig};
use aby3_core::{LatencyModel, Session, SessionParams, SimOptions, TrainConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod bench;

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(
    name = "aby3",
    version,
    about = "Three-party secure logistic regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one party of a training session over TCP.
    RunParty(RunPartyArgs),
    /// Run all three parties in this process.
    Simulate(SimulateArgs),
    /// Measure training throughput on synthetic data.
    Bench(bench::BenchArgs),
    /// Tabulate a sigmoid approximation against the logistic function.
    SigmoidTable(SigmoidTableArgs),
    /// Cross-validate the trainer on a dataset.
    Eval(EvalArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV with one row per sample; labels are 0/1.
    #[arg(long)]
    data: Option<PathBuf>,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    /// Name of the label column (default: last column).
    #[arg(long)]
    label_column: Option<String>,
    /// Skip per-column z-scoring.
    #[arg(long)]
    no_standardize: bool,
    /// File listing the feature columns to keep, one per line.
    #[arg(long)]
    select_columns: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Option<Dataset>> {
        let Some(path) = &self.data else {
            return Ok(None);
        };
        let opts = CsvOptions {
            has_header: !self.no_header,
            label: match &self.label_column {
                Some(n) => LabelColumn::Name(n.clone()),
                None => LabelColumn::Last,
            },
            // selection happens first so z-scores use the kept columns only
            standardize: false,
        };
        let mut d = load_csv(path, &opts).map_err(|e| format!("{}: {e}", path.display()))?;
        if let Some(names) = &self.select_columns {
            let (sel, warnings) = d.select_columns(
                &read_names_file(names).map_err(|e| format!("{}: {e}", names.display()))?,
            )?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            d = sel;
        }
        if !self.no_standardize {
            d.standardize();
        }
        Ok(Some(d))
    }

    fn require(&self) -> Result<Dataset> {
        self.load()?.ok_or_else(|| "--data is required".into())
    }
}

#[derive(Args)]
struct RunPartyArgs {
    /// Party network configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Training configuration (JSON).
    #[arg(long)]
    train_config: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// horizontal: every party may contribute rows; dealer: party 0 holds all data.
    #[arg(long, default_value = "horizontal")]
    partition: Partition,
    /// Who learns the weights: all, none, or a list such as 0,2.
    #[arg(long, default_value = "all")]
    reveal_to: RevealTo,
    #[arg(long)]
    out_model: Option<PathBuf>,
    #[arg(long)]
    out_stats: Option<PathBuf>,
    /// Where to persist this party's weight share when it is not revealed.
    #[arg(long)]
    out_shares: Option<PathBuf>,
    /// Send both copies of every opened share and compare them.
    #[arg(long)]
    checked_reveal: bool,
}

#[derive(Args)]
struct LatencyArgs {
    #[arg(long, default_value_t = 50.0)]
    wan_rtt_ms: f64,
    #[arg(long, default_value_t = 100.0)]
    bandwidth_mbps: f64,
    #[arg(long, default_value_t = 0.5)]
    lan_rtt_ms: f64,
    #[arg(long, default_value_t = 1000.0)]
    lan_bandwidth_mbps: f64,
    /// Sleep for the WAN round-trip time at every round instead of only
    /// modeling it.
    #[arg(long)]
    real_latency: bool,
}

impl LatencyArgs {
    fn wan(&self) -> LatencyModel {
        LatencyModel {
            rtt_ms: self.wan_rtt_ms,
            bandwidth_mbps: self.bandwidth_mbps,
        }
    }

    fn lan(&self) -> LatencyModel {
        LatencyModel {
            rtt_ms: self.lan_rtt_ms,
            bandwidth_mbps: self.lan_bandwidth_mbps,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    train_config: Option<PathBuf>,
    /// Override the configured iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    #[command(flatten)]
    latency: LatencyArgs,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
    /// Write the model JSON here.
    #[arg(long)]
    out_model: Option<PathBuf>,
}

#[derive(Args)]
struct SigmoidTableArgs {
    /// 3 or 5.
    #[arg(long, default_value = "5")]
    kind: SigmoidKind,
    #[arg(long, default_value_t = -8.0, allow_negative_numbers = true)]
    from: f64,
    #[arg(long, default_value_t = 8.0, allow_negative_numbers = true)]
    to: f64,
    #[arg(long, default_value_t = 0.001)]
    step: f64,
    /// Output CSV path, or - for stdout.
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// mpc runs each fold through the simulator; plaintext uses the
    /// reference trainer.
    #[arg(long, default_value = "mpc")]
    backend: String,
    #[arg(long)]
    json: bool,
}

fn train_config(path: Option<&Path>) -> Result<TrainConfig> {
    Ok(match path {
        Some(p) => TrainConfig::from_json_file(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => TrainConfig::default(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn model_file(raw: Vec<f64>, cfg: &TrainConfig, names: Option<Vec<String>>) -> ModelFile {
    let m = LinearModel::from_raw(raw, cfg.fit_intercept);
    ModelFile {
        frac_bits: cfg.frac_bits,
        weights: m.weights,
        intercept: m.intercept,
        feature_names: names,
        sigmoid_kind: cfg.sigmoid_kind,
        iterations: cfg.iterations,
    }
}

fn run_party(args: &RunPartyArgs) -> Result<()> {
    let net = PartyConfig::from_json_file(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))?;
    let cfg = train_config(Some(&args.train_config))?;
    let me = net.party();
    let local = args.data.load()?;
    if args.partition == Partition::Dealer && me.index() == 0 && local.is_none() {
        return Err("party 0 must supply --data in dealer mode".into());
    }
    let names = local.as_ref().and_then(|d| d.feature_names.clone());

    let transport = tcp::connect(&net)?;
    let params = SessionParams {
        party: me,
        session_id: net.session_id,
        seed: net.seed,
        codec: cfg.codec()?,
        checked_reveal: args.checked_reveal,
    };
    let mut session = Session::establish(Box::new(transport), &params)?;
    let run = run_party_training(
        &mut session,
        local.as_ref(),
        args.partition,
        &cfg,
        &args.reveal_to,
    )?;
    let total = session.stats().clone();
    drop(session);

    if let Some(w) = &run.weights {
        let path = args
            .out_model
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("model-p{}.json", me.index())));
        write_json(&path, &model_file(w.clone(), &cfg, names))?;
    } else {
        let path = args
            .out_shares
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("shares-p{}.json", me.index())));
        let file = SharesFile {
            party: me.index(),
            frac_bits: cfg.frac_bits,
            share: run.output.state.w.clone(),
        };
        write_json(&path, &file)?;
    }
    let stats = StatsFile::new(me, &run, &total, cfg.iterations);
    if let Some(p) = &args.out_stats {
        write_json(p, &stats)?;
    }
    eprintln!(
        "{me}: {} iterations, {} rounds, {} bytes sent",
        cfg.iterations,
        total.rounds,
        total.total_bytes_sent()
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    rows: usize,
    features: usize,
    iterations: usize,
    sigmoid_kind: SigmoidKind,
    training_steps: usize,
    balanced_accuracy: f64,
    rounds: u64,
    rounds_per_iteration: f64,
    bytes_sent: [u64; 3],
    bytes_per_iteration: f64,
    modeled_lan_seconds: f64,
    modeled_wan_seconds: f64,
    wall_seconds: f64,
}

fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let d = args.data.require()?;
    let mut cfg = train_config(args.train_config.as_deref())?;
    if let Some(it) = args.iterations {
        cfg.iterations = it;
    }
    let opts = SimOptions {
        barrier_delay: args
            .latency
            .real_latency
            .then(|| Duration::from_secs_f64(args.latency.wan_rtt_ms / 1000.0)),
        ..SimOptions::with_seed(cfg.seed)
    };
    let run = simulate_training(std::slice::from_ref(&d), &cfg, &opts)?;
    let model = LinearModel::from_raw(run.weights.clone(), cfg.fit_intercept);
    let metrics = model.evaluate(&d)?;
    let t = &run.train_stats;
    let it = cfg.iterations.max(1) as f64;
    let bytes: [u64; 3] = [
        t[0].total_bytes_sent(),
        t[1].total_bytes_sent(),
        t[2].total_bytes_sent(),
    ];
    let summary = SimulateSummary {
        rows: d.rows,
        features: d.cols,
        iterations: cfg.iterations,
        sigmoid_kind: cfg.sigmoid_kind,
        training_steps: run.rounds_per_step.len(),
        balanced_accuracy: metrics.balanced_accuracy,
        rounds: t[0].rounds,
        rounds_per_iteration: mean_rounds(&run.rounds_per_step),
        bytes_sent: bytes,
        bytes_per_iteration: bytes.iter().sum::<u64>() as f64 / it,
        modeled_lan_seconds: args.latency.lan().modeled_seconds_max(t),
        modeled_wan_seconds: args.latency.wan().modeled_seconds_max(t),
        wall_seconds: run.train_time.as_secs_f64(),
    };
    if let Some(p) = &args.out_model {
        write_json(p, &model_file(run.weights, &cfg, d.feature_names.clone()))?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        println!(
            "rows x features      {} x {}",
            summary.rows, summary.features
        );
        println!("sigmoid              {}", summary.sigmoid_kind);
        println!("training steps       {}", summary.training_steps);
        println!(
            "balanced accuracy    {:.4} (training set)",
            summary.balanced_accuracy
        );
        println!(
            "rounds               {} ({:.1}/iteration)",
            summary.rounds, summary.rounds_per_iteration
        );
        println!(
            "bytes sent           {} / {} / {} ({:.0}/iteration)",
            bytes[0], bytes[1], bytes[2], summary.bytes_per_iteration
        );
        println!("modeled LAN time     {:.3} s", summary.modeled_lan_seconds);
        println!("modeled WAN time     {:.3} s", summary.modeled_wan_seconds);
        println!("wall time            {:.3} s", summary.wall_seconds);
    }
    Ok(())
}

fn sigmoid_table_cmd(args: &SigmoidTableArgs) -> Result<()> {
    let xs = grid(args.from, args.to, args.step)?;
    let rows = sigmoid_table(args.kind, &xs, &SimOptions::default())?;
    let out: Box<dyn Write> = if args.out == "-" {
        Box::new(std::io::stdout().lock())
    } else {
        Box::new(fs::File::create(&args.out)?)
    };
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "x,approx,true,error")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.x, r.approx, r.exact, r.error)?;
    }
    out.flush()?;
    Ok(())
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let d = args.data.require()?;
    let cfg = train_config(args.train_config.as_deref())?;
    let backend = match args.backend.as_str() {
        "mpc" => CvBackend::Mpc(SimOptions::with_seed(cfg.seed)),
        "plaintext" => CvBackend::Plaintext(OracleSigmoid::Approx(cfg.sigmoid_kind)),
        "plaintext-exact" => CvBackend::Plaintext(OracleSigmoid::Exact),
        other => return Err(format!("unknown backend {other:?}").into()),
    };
    let report = kfold_cv(&d, args.folds, &cfg, &backend)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("fold  TP  FP  TN  FN  balanced_accuracy");
        for (i, m) in report.fold_metrics.iter().enumerate() {
            println!(
                "{i:>4} {:>3} {:>3} {:>3} {:>3}  {:.4}",
                m.tp, m.fp, m.tn, m.fn_, m.balanced_accuracy
            );
        }
        println!(
            "mean balanced accuracy {:.4} (std {:.4}) over {} folds",
            report.mean_balanced_accuracy, report.std_balanced_accuracy, report.folds
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunParty(a) => run_party(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Bench(a) => bench::run(a),
        Command::SigmoidTable(a) => sigmoid_table_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
