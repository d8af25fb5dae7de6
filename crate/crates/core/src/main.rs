use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dyncom::community::ZeroRowPolicy;
use dyncom::harness::{
    emit_report, generate_dynamic_sbm, run_pipeline, write_table, PipelineConfig, SbmParams,
    Variant, DEFAULT_RESTARTS,
};
use dyncom::temporal::{SlicingSpec, Weighting, DEFAULT_TENSOR_BUDGET};
use dyncom::Error;

/// Worker threads for per-slice and per-run parallelism. Defaults to 1.
const THREADS_ENV: &str = "DYNCOM_THREADS";

#[derive(Parser)]
#[command(
    name = "dyncom",
    version,
    about = "Dynamic community detection with nonnegative RESCAL + Louvain refinement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SliceMode {
    Prelabeled,
    Window,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Binary,
    Count,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Mntd,
    Nrd,
    Merandom,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZeroRowArg {
    Error,
    First,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detection pipeline on an event file.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "prelabeled")]
        slice_mode: SliceMode,
        /// Window length (window mode).
        #[arg(long)]
        window: Option<f64>,
        /// First timestamp of slice 0 (window mode).
        #[arg(long, default_value_t = 0.0)]
        origin: f64,
        /// Community count; defaults to the number of ground-truth communities.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0.2)]
        lambda_a: f64,
        #[arg(long, default_value_t = 0.07)]
        lambda_r: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 1e-12)]
        epsilon: f64,
        /// Random initializations per decomposition; the lowest objective is kept.
        #[arg(long, default_value_t = DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "mntd")]
        variant: VariantArg,
        #[arg(long, value_enum, default_value = "binary")]
        weighting: WeightingArg,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Handling of present nodes whose indicator row is all zero.
        #[arg(long, value_enum, default_value = "error")]
        zero_rows: ZeroRowArg,
        /// Dense tensor memory ceiling in bytes.
        #[arg(long, default_value_t = DEFAULT_TENSOR_BUDGET)]
        tensor_budget: u128,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a dynamic stochastic block model event file and ground truth.
    Synth {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        communities: usize,
        #[arg(long)]
        slices: usize,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        #[arg(long, default_value_t = 0.0)]
        migrate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn detect_config(cmd: Command) -> Result<PipelineConfig, Error> {
    let Command::Detect {
        input,
        slice_mode,
        window,
        origin,
        k,
        lambda_a,
        lambda_r,
        max_iters,
        tol,
        epsilon,
        restarts,
        seed,
        variant,
        weighting,
        runs,
        truth,
        zero_rows,
        tensor_budget,
        out,
    } = cmd
    else {
        unreachable!("detect_config called for another subcommand")
    };
    let slicing = match slice_mode {
        SliceMode::Prelabeled => SlicingSpec::PreLabeled,
        SliceMode::Window => SlicingSpec::UniformWindow {
            window: window.ok_or_else(|| {
                Error::Config("--window is required with --slice-mode window".into())
            })?,
            origin,
        },
    };
    let mut config = PipelineConfig::new(input, out);
    config.slicing = slicing;
    config.weighting = match weighting {
        WeightingArg::Binary => Weighting::Binary,
        WeightingArg::Count => Weighting::CountSum,
    };
    config.k = k;
    config.lambda_a = lambda_a;
    config.lambda_r = lambda_r;
    config.max_iters = max_iters;
    config.tol = tol;
    config.epsilon = epsilon;
    config.restarts = restarts;
    config.seed = seed;
    config.variant = match variant {
        VariantArg::Mntd => Variant::Mntd,
        VariantArg::Nrd => Variant::Nrd,
        VariantArg::Merandom => Variant::Merandom,
    };
    config.runs = runs;
    config.truth = truth;
    config.zero_rows = match zero_rows {
        ZeroRowArg::Error => ZeroRowPolicy::Error,
        ZeroRowArg::First => ZeroRowPolicy::AssignFirst,
    };
    config.tensor_budget = tensor_budget;
    config.validate()?;
    Ok(config)
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Synth {
            nodes,
            communities,
            slices,
            p_in,
            p_out,
            migrate,
            seed,
            out,
        } => {
            let params = SbmParams {
                n_nodes: nodes,
                n_communities: communities,
                slices,
                p_in,
                p_out,
                migrate_fraction: migrate,
                seed,
            };
            let sbm = generate_dynamic_sbm(&params)?;
            let (events, truth) = sbm.write_files(&out)?;
            println!("wrote {} and {}", events.display(), truth.display());
            Ok(())
        }
        detect @ Command::Detect { .. } => {
            let config = detect_config(detect)?;
            let report = run_pipeline(&config)?;
            emit_report(&report, &config.out_dir).map_err(|e| e.in_stage("report"))?;
            let dataset = config
                .input
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("data");
            write_table(&[&report], dataset, std::io::stdout().lock())?;
            Ok(())
        }
    }
}

fn init_workers() -> Result<(), Error> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = init_workers().and_then(|_| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
