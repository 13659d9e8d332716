//! Scenario execution: turn a parsed scenario into a pipeline, simulate it,
//! and write the report CSV and trace JSON.

use std::fmt;
use std::path::{Path, PathBuf};

use streamsim_core::balance::{balance, uniform_partition};
use streamsim_core::costmodel::{comm_cost, p2p_message_bytes, CommStrategy};
use streamsim_core::sim::{
    build_pipeline, run, stage_profile_from_model, CommSpec, Pipeline, RunLength, SimReport,
};
use streamsim_core::slo::SloTarget;

use crate::scenario::{Scenario, Strategy};
use crate::trace;

/// Default activation sizing for communication volume.
pub const HIDDEN_DIM: usize = 1536;
pub const DTYPE_BYTES: usize = 2;

#[derive(Debug)]
pub enum RunnerError {
    /// Config rejected before execution. Exit code 2.
    Schema(String),
    /// Pipeline ran but the declared service target was missed, or no
    /// feasible configuration exists. Exit code 3.
    SloUnmet(String),
    /// Everything else. Exit code 1.
    Other(anyhow::Error),
}

impl fmt::Display for RunnerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunnerError::Schema(m) => write!(f, "schema violation: {m}"),
            RunnerError::SloUnmet(m) => write!(f, "service target unmet: {m}"),
            RunnerError::Other(e) => write!(f, "{e}"),
        }
    }
}

impl RunnerError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunnerError::Schema(_) => 2,
            RunnerError::SloUnmet(_) => 3,
            RunnerError::Other(_) => 1,
        }
    }
}

impl From<anyhow::Error> for RunnerError {
    fn from(e: anyhow::Error) -> Self {
        RunnerError::Other(e)
    }
}

pub struct RunOutcome {
    pub name: String,
    pub report: SimReport,
    pub report_path: PathBuf,
    pub trace_path: PathBuf,
}

/// Build the pipeline a scenario describes.
pub fn build_scenario_pipeline(sc: &Scenario) -> Result<Pipeline, RunnerError> {
    let dev = sc.device();
    let model = sc.model();
    let shape = sc.shape();
    let gpus = sc.pipeline.gpus;
    let strategy: CommStrategy = sc.pipeline.strategy.into();
    let token_len = shape.with_batch(1).tokens(model.pixel_to_token_ratio) as usize;

    let mut pipe = if let Some(times) = &sc.pipeline.stage_times {
        let enc = sc
            .pipeline
            .vae_encode
            .unwrap_or(model.vae_encode_cost * shape.chunk_frames_t as f64);
        let dec = sc
            .pipeline
            .vae_decode
            .unwrap_or(model.vae_decode_cost * shape.chunk_frames_t as f64);
        let comm = if gpus > 1 && sc.pipeline.strategy == Strategy::PipelineP2p {
            CommSpec::from_device(&dev, p2p_message_bytes(token_len, HIDDEN_DIM, DTYPE_BYTES))
        } else {
            CommSpec::zero()
        };
        Pipeline::from_stage_times(times, enc, dec, &shape, comm)
            .map_err(|e| RunnerError::Schema(format!("{e:?}")))?
    } else {
        let effective = if sc.pipeline.stream_batch {
            shape.denoise_steps_n * shape.batch_b
        } else {
            1
        };
        let mut profile = stage_profile_from_model(&dev, &model, &shape, effective);
        if let Some(v) = sc.pipeline.vae_encode {
            profile.vae_encode_time = v;
        }
        if let Some(v) = sc.pipeline.vae_decode {
            profile.vae_decode_time = v;
        }
        match strategy {
            CommStrategy::PipelineP2p => {
                let partition = if sc.pipeline.auto_balance {
                    balance(&profile, gpus)
                } else {
                    uniform_partition(&profile, gpus)
                }
                .map_err(|e| RunnerError::Schema(format!("{e:?}")))?;
                let comm = if gpus > 1 {
                    CommSpec::from_device(
                        &dev,
                        p2p_message_bytes(token_len, HIDDEN_DIM, DTYPE_BYTES),
                    )
                } else {
                    CommSpec::zero()
                };
                build_pipeline(&partition, &profile, gpus, &shape, comm)
                    .map_err(|e| RunnerError::Schema(format!("{e:?}")))?
            }
            CommStrategy::UlyssesAllToAll | CommStrategy::RingKv => {
                let dit: f64 = profile.block_times.iter().sum();
                let per_step = comm_cost(
                    strategy,
                    token_len,
                    HIDDEN_DIM,
                    DTYPE_BYTES,
                    &dev,
                    model.num_blocks,
                    gpus,
                );
                Pipeline::from_stage_times(
                    &[dit / gpus as f64 + per_step],
                    profile.vae_encode_time,
                    profile.vae_decode_time,
                    &shape,
                    CommSpec::zero(),
                )
                .map_err(|e| RunnerError::Schema(format!("{e:?}")))?
            }
        }
    };
    if !sc.pipeline.stream_batch {
        pipe = pipe.without_stream_batch();
    }
    Ok(pipe)
}

/// Run one scenario and write `{name}_report.csv` and `{name}_trace.json`
/// into `out_dir`.
pub fn run_scenario(sc: &Scenario, out_dir: &Path) -> Result<RunOutcome, RunnerError> {
    let pipe = build_scenario_pipeline(sc)?;
    let length = match (sc.run.chunks, sc.run.seconds) {
        (Some(c), None) => RunLength::Chunks(c),
        (None, Some(s)) => RunLength::Seconds(s),
        _ => return Err(RunnerError::Schema("run must set exactly one length".into())),
    };
    let slo: Option<SloTarget> = sc.slo.as_ref().map(Into::into);
    let (report, spans) = run(&pipe, length, sc.stream.input_fps, slo.as_ref())
        .map_err(|e| RunnerError::Schema(format!("{e:?}")))?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| RunnerError::Other(anyhow::anyhow!("creating {out_dir:?}: {e}")))?;
    let report_path = out_dir.join(format!("{}_report.csv", sc.name));
    let trace_path = out_dir.join(format!("{}_trace.json", sc.name));
    trace::write_report_csv(&report_path, &[(sc.name.clone(), report.clone())])?;
    trace::write_chrome_trace(&trace_path, &spans)?;

    if let Some(slo) = &slo {
        let mut misses = Vec::new();
        if report.ttff > slo.ttff_budget {
            misses.push(format!("ttff {:.4} > budget {:.4}", report.ttff, slo.ttff_budget));
        }
        if report.steady_fps < slo.target_fps {
            misses.push(format!(
                "steady_fps {:.2} < target {:.2}",
                report.steady_fps, slo.target_fps
            ));
        }
        if report.slo_violations > 0 {
            misses.push(format!("{} chunk deadline violations", report.slo_violations));
        }
        if !misses.is_empty() {
            return Err(RunnerError::SloUnmet(misses.join("; ")));
        }
    }
    Ok(RunOutcome { name: sc.name.clone(), report, report_path, trace_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = 1
name = "smoke"
[stream]
input_fps = 1e6
steps = 2
[pipeline]
gpus = 2
[run]
chunks = 20
"#;

    #[test]
    fn scenario_runs_and_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let sc = Scenario::parse(BASE).unwrap();
        let out = run_scenario(&sc, dir.path()).unwrap();
        assert!(out.report.steady_fps > 0.0);
        assert!(out.report_path.exists());
        assert!(out.trace_path.exists());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let sc = Scenario::parse(BASE).unwrap();
        let o1 = run_scenario(&sc, d1.path()).unwrap();
        let o2 = run_scenario(&sc, d2.path()).unwrap();
        assert_eq!(
            std::fs::read(&o1.report_path).unwrap(),
            std::fs::read(&o2.report_path).unwrap()
        );
        assert_eq!(
            std::fs::read(&o1.trace_path).unwrap(),
            std::fs::read(&o2.trace_path).unwrap()
        );
    }

    #[test]
    fn unreachable_slo_reports_unmet() {
        let text = BASE.replace(
            "[run]",
            "[slo]\ntarget_fps = 1e9\nper_frame_deadline = 1e-9\nttff_budget = 1e-9\n[run]",
        );
        let sc = Scenario::parse(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        match run_scenario(&sc, dir.path()) {
            Err(e) => assert_eq!(e.exit_code(), 3),
            Ok(_) => panic!("expected unmet target"),
        }
    }

    #[test]
    fn sequence_parallel_strategy_builds_single_stage() {
        let text = BASE.replace("gpus = 2", "gpus = 4\nstrategy = \"ulysses\"");
        let sc = Scenario::parse(&text).unwrap();
        let pipe = build_scenario_pipeline(&sc).unwrap();
        assert_eq!(pipe.stages.len(), 1);
    }
}
