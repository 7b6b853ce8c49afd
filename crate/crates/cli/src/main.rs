mod commands;
mod config;
mod diagnose;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stinr::baselines::{MfConfig, SvtConfig};
use stinr::data::{GridLayout, MaskMode, WaveParams};

use crate::commands::{BaselineArgs, BaselineMethod, SynthKind};
use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Parser)]
#[command(
    name = "stinr",
    version,
    about = "Reconstruct sparsely observed spatiotemporal fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic field (and, for graph signals, its ring adjacency).
    Synth {
        #[command(subcommand)]
        kind: SynthCmd,
    },
    /// Fit a model from a run config.
    Train(RunArgs),
    /// Fit a vertex-time model with hidden sensors and report hidden-node metrics.
    Krige(RunArgs),
    /// Evaluate a saved model at raw grid coordinates.
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// CSV with one column per axis; a non-numeric first line is a header.
        #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
        coords: Option<PathBuf>,
        /// Evaluate the whole base grid refined by this factor instead.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model on a grid refined along each continuous axis.
    Upsample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        factor: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Matrix completion baselines.
    Baseline {
        #[command(subcommand)]
        method: BaselineCmd,
    },
    /// Spectra, low-rank summaries, kernel and Lipschitz checks.
    Diagnose {
        #[command(subcommand)]
        which: DiagnoseCmd,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config leaf, e.g. `--set train.steps=100`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum SynthCmd {
    /// A congestion wave moving through a speed field.
    Wave {
        #[arg(long, default_value_t = 64)]
        nx: usize,
        #[arg(long, default_value_t = 128)]
        nt: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = WaveParams::default().free_flow)]
        free_flow: f64,
        #[arg(long, default_value_t = WaveParams::default().congested)]
        congested: f64,
        #[arg(long, default_value_t = WaveParams::default().band_width)]
        band_width: f64,
        #[arg(long, default_value_t = WaveParams::default().wave_speed)]
        wave_speed: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// An exactly low-rank matrix.
    Lowrank {
        #[arg(long, default_value_t = 100)]
        rows: usize,
        #[arg(long, default_value_t = 120)]
        cols: usize,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// A band-limited signal on a ring graph.
    Graph {
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        #[arg(long, default_value_t = 96)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        bandwidth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Matrix,
    Long,
}

impl From<Layout> for GridLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Matrix => GridLayout::Matrix,
            Layout::Long => GridLayout::Long,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mask {
    Pointwise,
    ColumnDrop,
    RowDrop,
}

impl From<Mask> for MaskMode {
    fn from(m: Mask) -> Self {
        match m {
            Mask::Pointwise => MaskMode::Pointwise,
            Mask::ColumnDrop => MaskMode::ColumnDrop,
            Mask::RowDrop => MaskMode::RowDrop,
        }
    }
}

#[derive(Args)]
struct BaselineCommon {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Layout::Matrix)]
    layout: Layout,
    #[arg(long, value_enum, default_value_t = Mask::Pointwise)]
    mask: Mask,
    /// Training fraction for pointwise masks, hidden fraction for drop masks.
    #[arg(long, default_value_t = 0.15)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fail instead of warning when the solver stops before its tolerance.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: PathBuf,
}

impl BaselineCommon {
    fn into_args(self) -> BaselineArgs {
        BaselineArgs {
            data: self.data,
            layout: self.layout.into(),
            mask: self.mask.into(),
            rate: self.rate,
            seed: self.seed,
            strict: self.strict,
            out: self.out,
        }
    }
}

#[derive(Subcommand)]
enum BaselineCmd {
    /// Alternating least squares factorization.
    Mf {
        #[command(flatten)]
        common: BaselineCommon,
        #[arg(long, default_value_t = MfConfig::default().rank)]
        rank: usize,
        #[arg(long, default_value_t = MfConfig::default().ridge)]
        ridge: f64,
        #[arg(long, default_value_t = MfConfig::default().max_iterations)]
        max_iterations: usize,
        #[arg(long, default_value_t = MfConfig::default().tolerance)]
        tolerance: f64,
    },
    /// Singular value thresholding.
    Svt {
        #[command(flatten)]
        common: BaselineCommon,
        #[arg(long, default_value_t = SvtConfig::default().tau)]
        tau: f64,
        #[arg(long, default_value_t = SvtConfig::default().step)]
        step: f64,
        #[arg(long, default_value_t = SvtConfig::default().max_iterations)]
        max_iterations: usize,
        #[arg(long, default_value_t = SvtConfig::default().tolerance)]
        tolerance: f64,
    },
}

#[derive(Subcommand)]
enum DiagnoseCmd {
    /// Single-sided amplitude spectrum of one slice of a field.
    Spectrum {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Layout::Matrix)]
        layout: Layout,
        /// Axis the series runs along.
        #[arg(long, default_value_t = 1)]
        axis: usize,
        /// Position on the other axis.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nuclear norm and effective rank of fields or a model's base-grid prediction.
    Lowrank {
        #[arg(long)]
        data: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Layout::Matrix)]
        layout: Layout,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shift invariance and cosine form of the Fourier-feature kernel.
    Kernel {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0])]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 16)]
        rows: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Observed output differences against the Lipschitz bounds.
    Lipschitz {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { kind } => {
            let (kind, seed, out) = match kind {
                SynthCmd::Wave {
                    nx,
                    nt,
                    noise,
                    free_flow,
                    congested,
                    band_width,
                    wave_speed,
                    seed,
                    out,
                } => {
                    let params = WaveParams {
                        free_flow,
                        congested,
                        band_width,
                        wave_speed,
                        ..WaveParams::default()
                    };
                    (
                        SynthKind::Wave {
                            nx,
                            nt,
                            noise,
                            params,
                        },
                        seed,
                        out,
                    )
                }
                SynthCmd::Lowrank {
                    rows,
                    cols,
                    rank,
                    seed,
                    out,
                } => (SynthKind::LowRank { rows, cols, rank }, seed, out),
                SynthCmd::Graph {
                    nodes,
                    steps,
                    bandwidth,
                    seed,
                    out,
                } => (
                    SynthKind::Graph {
                        nodes,
                        steps,
                        bandwidth,
                    },
                    seed,
                    out,
                ),
            };
            commands::synth(kind, seed, &out)
        }
        Command::Train(a) => commands::train(&RunConfig::load(&a.config, &a.sets)?, false),
        Command::Krige(a) => commands::train(&RunConfig::load(&a.config, &a.sets)?, true),
        Command::Infer {
            model,
            coords,
            grid,
            out,
        } => match (coords, grid) {
            (Some(q), _) => commands::infer(&model, &q, &out),
            (None, Some(f)) => commands::upsample(&model, f, &out, "infer", "values.csv"),
            (None, None) => unreachable!("clap requires --coords or --grid"),
        },
        Command::Upsample { model, factor, out } => {
            commands::upsample(&model, factor, &out, "upsample", "upsampled.csv")
        }
        Command::Baseline { method } => match method {
            BaselineCmd::Mf {
                common,
                rank,
                ridge,
                max_iterations,
                tolerance,
            } => {
                let cfg = MfConfig {
                    rank,
                    ridge,
                    max_iterations,
                    tolerance,
                };
                commands::baseline(BaselineMethod::Mf(cfg), &common.into_args())
            }
            BaselineCmd::Svt {
                common,
                tau,
                step,
                max_iterations,
                tolerance,
            } => {
                let cfg = SvtConfig {
                    tau,
                    step,
                    max_iterations,
                    tolerance,
                };
                commands::baseline(BaselineMethod::Svt(cfg), &common.into_args())
            }
        },
        Command::Diagnose { which } => match which {
            DiagnoseCmd::Spectrum {
                data,
                layout,
                axis,
                index,
                out,
            } => diagnose::spectrum(&data, layout.into(), axis, index, &out),
            DiagnoseCmd::Lowrank {
                data,
                layout,
                model,
                out,
            } => diagnose::lowrank(&data, layout.into(), model.as_deref(), &out),
            DiagnoseCmd::Kernel {
                scales,
                rows,
                dim,
                points,
                seed,
                out,
            } => diagnose::kernel(scales, rows, dim, points, seed, &out),
            DiagnoseCmd::Lipschitz {
                model,
                pairs,
                seed,
                out,
            } => diagnose::lipschitz(&model, pairs, seed, &out),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
