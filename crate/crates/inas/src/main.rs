use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inas::config::ExperimentConfig;
use inas::{report, runner, space, AppError, Result};
use inas_core::arch::{BlockKind, BlockSpec, SearchGrid};
use inas_core::data::InputShape;

/// Active learning with incremental architecture search.
#[derive(Parser)]
#[command(name = "inas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the search grid with capacities; write its edge list and diagram.
    Space {
        #[arg(long, default_value = "residual-dense")]
        block_kind: BlockKind,
        #[arg(long, default_value_t = 16)]
        base_width: usize,
        #[arg(long, default_value_t = 12)]
        n_blocks: usize,
        #[arg(long, default_value_t = 5)]
        n_stacks: usize,
        /// Flat input dimension (dense family).
        #[arg(long, default_value_t = 8, conflicts_with = "image")]
        input_dim: usize,
        /// Image input as HxWxC (conv family), e.g. 32x32x3.
        #[arg(long)]
        image: Option<String>,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        /// Directory for edges.txt and grid.svg [default: <output root>/space].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory [default: <output root>/<name>-<strategy>-<mode>-seed<seed>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print AUC and AUC-GAIN of runs at a common budget.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        budget: f64,
    },
    /// Write curve CSVs, summary tables and SVG plots for runs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_image(s: &str) -> Result<InputShape> {
    let dims: Vec<usize> = s.split('x').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad_image(s))?;
    match dims[..] {
        [height, width, channels] => Ok(InputShape::Image { height, width, channels }),
        _ => Err(bad_image(s)),
    }
}

fn bad_image(s: &str) -> AppError {
    AppError::Usage(format!("--image expects HxWxC, got `{s}`"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Space { block_kind, base_width, n_blocks, n_stacks, input_dim, image, classes, out } => {
            let shape = match image {
                Some(s) => parse_image(&s)?,
                None => InputShape::Flat { dim: input_dim },
            };
            let block = BlockSpec::new(block_kind, 2, 2, base_width)?;
            let grid = SearchGrid::new(block, n_blocks, n_stacks)?;
            let rows = space::rows(&grid, shape, classes)?;
            print!("{}", space::table(&rows));
            let out = out.unwrap_or_else(|| inas::output_root().join("space"));
            write(&out.join("edges.txt"), &space::edge_list(&grid))?;
            write(&out.join("grid.svg"), &space::grid_svg(&grid))?;
            let (ok, missing) = inas_core::arch::verify_reachability(&grid);
            println!("reachable from (1,1): {ok} ({} unreachable)", missing.len());
            println!("wrote {}", out.display());
        }
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            let out = out.unwrap_or_else(|| inas::output_root().join(cfg.run_label()));
            let base = config.parent().unwrap_or(Path::new("."));
            let info = runner::run_experiment(&cfg, base, &out)?;
            for r in &info.rounds {
                println!(
                    "round {:>3}  labels {:>6}  arch ({},{})  test error {:.4}",
                    r.round, r.labels_used, r.arch.i, r.arch.j, r.test_error
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Compare { runs, budget } => {
            let loaded = report::load_runs(&runs)?;
            let rows = report::compare(&loaded, budget)?;
            print!("{}", report::compare_table(&rows));
            println!();
            print!("{}", report::summary_table(&report::summarize(&rows)));
        }
        Command::Report { runs, out } => {
            let files = report::report(&runs, &out)?;
            print!("{}", report::summary_table(&files.summary));
            println!("budget {}; wrote {}", files.budget, out.display());
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| AppError::Io { path: dir.into(), source })?;
    }
    std::fs::write(path, text).map_err(|source| AppError::Io { path: path.into(), source })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
