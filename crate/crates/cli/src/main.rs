//! Command-line harness over the streaming pipeline simulator.
//!
//! Exit codes: 0 success, 2 config/schema violation, 3 declared service
//! target unmet or infeasible, 1 any other failure.

use streamsim_cli::{calibrate, presets, runner, scenario, tensor_io, trace};

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use streamsim_core::balance::{balance, uniform_partition};
use streamsim_core::costmodel::CommStrategy;
use streamsim_core::sim::{stage_profile_from_model, sweep, SweepGrid};

use runner::RunnerError;
use scenario::Scenario;

/// Environment variable naming the directory scenario paths resolve against.
const CONFIG_DIR_ENV: &str = "STREAMSIM_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "streamsim", version, about = "Streaming video pipeline simulator")]
struct Cli {
    /// Output directory for CSV reports and traces.
    #[arg(long, default_value = "out", global = true)]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario file or a named preset experiment.
    Run {
        /// TOML scenario path, resolved against STREAMSIM_CONFIG_DIR if
        /// relative and that variable is set.
        #[arg(long, conflicts_with = "preset")]
        scenario: Option<PathBuf>,
        /// Built-in experiment name.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Sweep device counts and denoise steps and write one CSV.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        gpus: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        steps: Vec<usize>,
        /// Resolutions as HxW.
        #[arg(long, value_delimiter = ',', default_value = "480x832")]
        resolutions: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "pipeline_p2p")]
        strategies: Vec<String>,
        #[arg(long, default_value_t = 100)]
        chunks: usize,
    },
    /// Print the block partition the load balancer picks for a device count.
    Balance {
        #[arg(long, default_value_t = 4)]
        gpus: usize,
        /// Optional scenario supplying device/model overrides.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Replay the calibrated throughput and first-frame fixtures.
    Calibrate,
    /// Write seeded binary oracle fixtures for the reference kernels.
    GenFixtures {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn resolve_scenario_path(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
            return Path::new(&dir).join(path);
        }
    }
    path.to_path_buf()
}

fn load_scenario(path: &Path) -> Result<Scenario, RunnerError> {
    let full = resolve_scenario_path(path);
    let text = std::fs::read_to_string(&full)
        .map_err(|e| RunnerError::Other(anyhow::anyhow!("reading {full:?}: {e}")))?;
    Scenario::parse(&text).map_err(RunnerError::Schema)
}

fn print_table(header: &[&str], rows: &[Vec<String>]) {
    println!("{}", header.join(","));
    for row in rows {
        println!("{}", row.join(","));
    }
}

fn parse_resolution(s: &str) -> Result<(usize, usize), RunnerError> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| RunnerError::Schema(format!("resolution '{s}' is not HxW")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| RunnerError::Schema(format!("bad resolution component '{v}'")))
    };
    Ok((parse(h)?, parse(w)?))
}

fn parse_strategy(s: &str) -> Result<CommStrategy, RunnerError> {
    match s {
        "pipeline_p2p" => Ok(CommStrategy::PipelineP2p),
        "ulysses" => Ok(CommStrategy::UlyssesAllToAll),
        "ring_kv" => Ok(CommStrategy::RingKv),
        other => Err(RunnerError::Schema(format!(
            "unknown strategy '{other}' (pipeline_p2p, ulysses, ring_kv)"
        ))),
    }
}

fn real_main(cli: Cli) -> Result<(), RunnerError> {
    match cli.cmd {
        Cmd::Run { scenario: Some(path), preset: None } => {
            let sc = load_scenario(&path)?;
            let out = runner::run_scenario(&sc, &cli.out_dir)?;
            print_table(
                &trace::report_csv_header(),
                &[trace::report_csv_row(&out.name, &out.report)],
            );
            eprintln!("wrote {:?} and {:?}", out.report_path, out.trace_path);
            Ok(())
        }
        Cmd::Run { scenario: None, preset: Some(name) } => {
            let out = presets::run_preset(&name)?;
            print_table(&out.header, &out.rows);
            std::fs::create_dir_all(&cli.out_dir)
                .map_err(|e| RunnerError::Other(e.into()))?;
            let path = cli.out_dir.join(format!("{}.csv", out.name));
            trace::write_table_csv(&path, &out.header, &out.rows)?;
            eprintln!("wrote {path:?}");
            Ok(())
        }
        Cmd::Run { .. } => {
            Err(RunnerError::Schema("run needs exactly one of --scenario or --preset".into()))
        }
        Cmd::Sweep { gpus, steps, resolutions, strategies, chunks } => {
            let grid = SweepGrid {
                gpu_counts: gpus,
                step_counts: steps,
                resolutions: resolutions
                    .iter()
                    .map(|s| parse_resolution(s))
                    .collect::<Result<_, _>>()?,
                strategies: strategies
                    .iter()
                    .map(|s| parse_strategy(s))
                    .collect::<Result<_, _>>()?,
                batch_b: 1,
                chunk_frames: 4,
                chunks,
                input_fps: 1e6,
                hidden_dim: runner::HIDDEN_DIM,
                dtype_bytes: runner::DTYPE_BYTES,
            };
            let dev = streamsim_core::costmodel::fixtures::h100();
            let model = streamsim_core::costmodel::fixtures::model_1p3b();
            let rows = sweep(&grid, &dev, &model)
                .map_err(|e| RunnerError::Schema(format!("{e:?}")))?;
            std::fs::create_dir_all(&cli.out_dir)
                .map_err(|e| RunnerError::Other(e.into()))?;
            let path = cli.out_dir.join("sweep.csv");
            trace::write_sweep_csv(&path, &rows)?;
            for r in &rows {
                println!(
                    "gpus={} steps={} {}x{} {:?} fps={:.3} ttff={:.4}",
                    r.gpus, r.steps, r.height, r.width, r.strategy,
                    r.report.steady_fps, r.report.ttff
                );
            }
            eprintln!("wrote {path:?}");
            Ok(())
        }
        Cmd::Balance { gpus, scenario: path } => {
            let (dev, model, shape) = match path {
                Some(p) => {
                    let sc = load_scenario(&p)?;
                    (sc.device(), sc.model(), sc.shape())
                }
                None => (
                    streamsim_core::costmodel::fixtures::h100(),
                    streamsim_core::costmodel::fixtures::model_1p3b(),
                    streamsim_core::costmodel::fixtures::chunk_480p(1, 2),
                ),
            };
            let profile = stage_profile_from_model(
                &dev,
                &model,
                &shape,
                shape.denoise_steps_n * shape.batch_b,
            );
            let uniform = uniform_partition(&profile, gpus)
                .map_err(|e| RunnerError::Schema(format!("{e:?}")))?;
            let balanced = balance(&profile, gpus)
                .map_err(|e| RunnerError::Schema(format!("{e:?}")))?;
            let blocks = profile.num_blocks();
            for (label, p) in [("uniform", &uniform), ("balanced", &balanced)] {
                let sizes: Vec<String> = p
                    .ranges(blocks)
                    .iter()
                    .map(|(lo, hi)| (hi - lo).to_string())
                    .collect();
                println!(
                    "{label}: blocks_per_stage=[{}] bottleneck={:.6}s",
                    sizes.join(","),
                    p.max_stage_time()
                );
            }
            Ok(())
        }
        Cmd::Calibrate => {
            println!("label,metric,simulated,target");
            for t in &calibrate::FPS_TARGETS {
                let report = calibrate::simulate_fps_target(t)
                    .map_err(RunnerError::Other)?;
                println!(
                    "{},steady_fps,{:.4},{:.2}",
                    t.label, report.steady_fps, t.target_fps
                );
            }
            let at16 = calibrate::simulate_ttff(&calibrate::TTFF_FIXTURE, 16.0)
                .map_err(RunnerError::Other)?;
            let at30 = calibrate::simulate_ttff(&calibrate::TTFF_FIXTURE, 30.0)
                .map_err(RunnerError::Other)?;
            println!("ttff_16fps,ttff_s,{at16:.4},0.47");
            println!("ttff_30fps,ttff_s,{at30:.4},0.37");
            Ok(())
        }
        Cmd::GenFixtures { seed } => {
            let written = tensor_io::gen_fixtures(&cli.out_dir, seed)
                .map_err(RunnerError::Other)?;
            for p in &written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
