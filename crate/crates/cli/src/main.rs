use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmrf_cli::{
    cmd_evaluate, cmd_inspect, cmd_recommend, cmd_train, CliError, EvalConfig, EvalSet, Filters,
    TrainConfig,
};
use gmrf_core::model::SplitParams;
use gmrf_core::{LoadOptions, SolverKind};

#[derive(Parser)]
#[command(name = "gmrf", version, about = "Item-item collaborative filtering from implicit feedback")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Interaction file with `user,item[,value]` rows.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Skip the first line.
    #[arg(long)]
    header: bool,
    /// Keep raw values instead of mapping every interaction to 1.
    #[arg(long)]
    keep_values: bool,
}

impl InputArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            delimiter: self.delimiter,
            has_header: self.header,
            binarize: !self.keep_values,
        }
    }
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, default_value_t = 0.1)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    test_frac: f64,
    #[arg(long, default_value_t = 0.8)]
    fold_in_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SplitArgs {
    fn params(&self) -> SplitParams {
        SplitParams {
            val_frac: self.val_frac,
            test_frac: self.test_frac,
            fold_in_frac: self.fold_in_frac,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a weight matrix and write a model file.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        model: PathBuf,
        /// dense | dense-mean-constrained | sparse
        #[arg(long, default_value = "dense")]
        solver: SolverKind,
        #[arg(long, default_value_t = 100.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
        /// Do not center item columns.
        #[arg(long)]
        no_center: bool,
        /// Fraction of off-diagonal pairs kept in the sparsity pattern.
        #[arg(long, default_value_t = 0.005)]
        density: f64,
        /// Maximum neighbors per item.
        #[arg(long, default_value_t = 1000)]
        cap: usize,
        /// Fraction of each seed's neighbors estimated jointly with it.
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        /// Exponent of the reported block cost estimate.
        #[arg(long, default_value_t = 3.0)]
        omega: f64,
        #[arg(long, default_value_t = 0)]
        min_user_items: usize,
        #[arg(long, default_value_t = 0)]
        min_item_users: usize,
        /// Train on every user instead of the training split.
        #[arg(long)]
        all_users: bool,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Score held-out users and write a metric report.
    Evaluate {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "20,50,100")]
        k: Vec<usize>,
        /// validation | test
        #[arg(long, default_value = "test")]
        set: EvalSet,
        /// Override the split stored in the model.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        val_frac: Option<f64>,
        #[arg(long)]
        test_frac: Option<f64>,
        #[arg(long)]
        fold_in_frac: Option<f64>,
    },
    /// Write top-n recommendations for every user in a file.
    Recommend {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(short, long, default_value_t = 10)]
        n: usize,
    },
    /// Print a model's header and training report.
    Inspect { model: PathBuf },
}

fn split_override(
    model: &std::path::Path,
    seed: Option<u64>,
    val: Option<f64>,
    test: Option<f64>,
    fold: Option<f64>,
) -> Result<Option<SplitParams>, CliError> {
    if seed.is_none() && val.is_none() && test.is_none() && fold.is_none() {
        return Ok(None);
    }
    let base = gmrf_core::model::ModelFile::load_header(model)
        .map_err(|source| CliError::Phase {
            phase: "load model",
            source,
        })?
        .split
        .unwrap_or(SplitParams {
            val_frac: 0.1,
            test_frac: 0.1,
            fold_in_frac: 0.8,
            seed: 0,
        });
    Ok(Some(SplitParams {
        val_frac: val.unwrap_or(base.val_frac),
        test_frac: test.unwrap_or(base.test_frac),
        fold_in_frac: fold.unwrap_or(base.fold_in_frac),
        seed: seed.unwrap_or(base.seed),
    }))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            input,
            model,
            solver,
            lambda,
            alpha,
            no_center,
            density,
            cap,
            r,
            omega,
            min_user_items,
            min_item_users,
            all_users,
            split,
        } => {
            let cfg = TrainConfig {
                lambda,
                alpha,
                center: !no_center,
                solver,
                target_density: density,
                cap,
                r,
                omega,
                split: (!all_users).then(|| split.params()),
                filters: Filters {
                    min_user_items,
                    min_item_users,
                },
            };
            let report = cmd_train(&cfg, &input.data, &input.options(), &model)?;
            print!("{}", report.to_text());
        }
        Command::Evaluate {
            input,
            model,
            out,
            k,
            set,
            seed,
            val_frac,
            test_frac,
            fold_in_frac,
        } => {
            let cfg = EvalConfig {
                split: split_override(&model, seed, val_frac, test_frac, fold_in_frac)?,
                ks: k,
                set,
            };
            let report = cmd_evaluate(&model, &input.data, &input.options(), &cfg, &out)?;
            print!("{}", report.to_table());
        }
        Command::Recommend {
            input,
            model,
            out,
            n,
        } => cmd_recommend(&model, &input.data, &input.options(), n, &out)?,
        Command::Inspect { model } => print!("{}", cmd_inspect(&model)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
