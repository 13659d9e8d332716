//! Canned experiments. Each preset produces a small named table that the
//! CLI prints and writes as CSV.

use anyhow::{bail, Result};
use streamsim_core::balance::{balance, uniform_partition, BlockCostProfile};
use streamsim_core::costmodel::{
    comm_cost, fixtures, ttff_estimate, CommStrategy, StreamShape,
};
use streamsim_core::sim::{
    build_pipeline, run, stage_profile_from_model, sweep, CommSpec, RunLength,
    SweepGrid,
};

use crate::calibrate;

/// One rendered preset result.
pub struct PresetOutput {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub const PRESET_NAMES: [&str; 5] =
    ["ttff_bars", "fps_scaling", "balance_before_after", "stream_batch", "comm_compare"];

pub fn run_preset(name: &str) -> Result<PresetOutput> {
    match name {
        "ttff_bars" => ttff_bars(),
        "fps_scaling" => fps_scaling(),
        "balance_before_after" => balance_before_after(),
        "stream_batch" => stream_batch(),
        "comm_compare" => comm_compare(),
        other => bail!("unknown preset '{other}', expected one of {PRESET_NAMES:?}"),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// First-frame latency bars: streaming pipeline at two camera rates against
/// a chunkwise baseline and a whole-clip single-pass estimate.
fn ttff_bars() -> Result<PresetOutput> {
    let dev = fixtures::h100();
    let model = fixtures::model_1p3b();
    let full_shape = StreamShape {
        batch_b: 1,
        chunk_frames_t: 81,
        height_h: 480,
        width_w: 832,
        denoise_steps_n: 1,
        latent_channels_c: 16,
    };
    let full_clip = ttff_estimate(&dev, &model, &full_shape, 16.0, true)?;
    let rows = vec![
        vec![
            "streaming_16fps".into(),
            fmt(16.0),
            fmt(calibrate::simulate_ttff(&calibrate::TTFF_FIXTURE, 16.0)?),
        ],
        vec![
            "streaming_30fps".into(),
            fmt(30.0),
            fmt(calibrate::simulate_ttff(&calibrate::TTFF_FIXTURE, 30.0)?),
        ],
        vec![
            "chunked_81f_30fps".into(),
            fmt(30.0),
            fmt(calibrate::simulate_ttff(&calibrate::chunked_baseline_fixture(), 30.0)?),
        ],
        vec!["full_clip_estimate".into(), fmt(16.0), fmt(full_clip)],
    ];
    Ok(PresetOutput { name: "ttff_bars", header: vec!["label", "input_fps", "ttff_s"], rows })
}

/// Steady throughput over device count and denoise steps at 480p.
fn fps_scaling() -> Result<PresetOutput> {
    let dev = fixtures::h100();
    let model = fixtures::model_1p3b();
    let grid = SweepGrid {
        gpu_counts: vec![1, 2, 3, 4],
        step_counts: vec![1, 2, 4],
        resolutions: vec![(480, 832)],
        strategies: vec![CommStrategy::PipelineP2p],
        batch_b: 1,
        chunk_frames: 4,
        chunks: 100,
        input_fps: 1e6,
        hidden_dim: 1536,
        dtype_bytes: 2,
    };
    let rows = sweep(&grid, &dev, &model)?
        .into_iter()
        .map(|r| {
            vec![
                r.gpus.to_string(),
                r.steps.to_string(),
                fmt(r.report.steady_fps),
                fmt(r.report.ttff),
            ]
        })
        .collect();
    Ok(PresetOutput {
        name: "fps_scaling",
        header: vec!["gpus", "steps", "steady_fps", "ttff_s"],
        rows,
    })
}

/// Codec-skewed profile used to show what load-aware partitioning buys:
/// coarse 20 ms transformer blocks with encode/decode pinned to the
/// endpoint devices at about 30% of their budget.
pub fn skewed_profile() -> BlockCostProfile {
    BlockCostProfile {
        block_times: vec![0.020; 12],
        vae_encode_time: 0.0514,
        vae_decode_time: 0.0514,
    }
}

fn balance_before_after() -> Result<PresetOutput> {
    let profile = skewed_profile();
    let shape = StreamShape {
        batch_b: 1,
        chunk_frames_t: 4,
        height_h: 480,
        width_w: 832,
        denoise_steps_n: 2,
        latent_channels_c: 16,
    };
    let mut rows = Vec::new();
    for (label, partition) in [
        ("uniform", uniform_partition(&profile, 4)?),
        ("balanced", balance(&profile, 4)?),
    ] {
        let pipe = build_pipeline(&partition, &profile, 4, &shape, CommSpec::zero())?;
        let (report, _) = run(&pipe, RunLength::Chunks(100), 1e6, None)?;
        let mean_bubble: f64 =
            report.bubble_fraction.iter().sum::<f64>() / report.bubble_fraction.len() as f64;
        rows.push(vec![
            label.into(),
            partition
                .stage_times
                .iter()
                .map(|t| format!("{t:.4}"))
                .collect::<Vec<_>>()
                .join(" "),
            fmt(partition.max_stage_time()),
            fmt(report.steady_fps),
            fmt(mean_bubble),
        ]);
    }
    Ok(PresetOutput {
        name: "balance_before_after",
        header: vec!["partition", "stage_times_s", "bottleneck_s", "steady_fps", "mean_bubble"],
        rows,
    })
}

/// Throughput with and without overlapped multi-stream batching across
/// denoise step counts. Transformer-only stage costs isolate the parameter
/// amortization effect from codec queueing.
fn stream_batch() -> Result<PresetOutput> {
    let dev = fixtures::h100();
    let model = fixtures::model_1p3b();
    let batch = 4usize;
    let mut rows = Vec::new();
    for steps in [1usize, 2, 4] {
        let shape = StreamShape {
            batch_b: batch,
            chunk_frames_t: 4,
            height_h: 480,
            width_w: 832,
            denoise_steps_n: steps,
            latent_channels_c: 16,
        };
        let mut sb_profile = stage_profile_from_model(&dev, &model, &shape, steps * batch);
        sb_profile.vae_encode_time = 0.0;
        sb_profile.vae_decode_time = 0.0;
        let mut base_profile =
            stage_profile_from_model(&dev, &model, &shape.with_batch(1), 1);
        base_profile.vae_encode_time = 0.0;
        base_profile.vae_decode_time = 0.0;

        let sb_pipe =
            build_pipeline(&balance(&sb_profile, 4)?, &sb_profile, 4, &shape, CommSpec::zero())?;
        let base_pipe = build_pipeline(
            &balance(&base_profile, 4)?,
            &base_profile,
            4,
            &shape.with_batch(1),
            CommSpec::zero(),
        )?
        .without_stream_batch();

        let (sb, _) = run(&sb_pipe, RunLength::Chunks(120), 1e6, None)?;
        let (base, _) = run(&base_pipe, RunLength::Chunks(120), 1e6, None)?;
        rows.push(vec![
            steps.to_string(),
            fmt(sb.steady_fps),
            fmt(base.steady_fps),
            fmt(sb.steady_fps / base.steady_fps),
        ]);
    }
    Ok(PresetOutput {
        name: "stream_batch",
        header: vec!["steps", "fps_overlapped", "fps_sequential", "ratio"],
        rows,
    })
}

/// Per-forward communication cost of the three multi-device strategies on
/// a 4-device 480p chunk.
fn comm_compare() -> Result<PresetOutput> {
    let dev = fixtures::h100();
    let model = fixtures::model_1p3b();
    let shape = fixtures::chunk_480p(1, 1);
    // Collectives fire once per latent frame, so size them per frame.
    let token_len =
        (shape.tokens(model.pixel_to_token_ratio) / shape.chunk_frames_t as f64) as usize;
    let gpus = 4;
    let pp = comm_cost(CommStrategy::PipelineP2p, token_len, 1536, 2, &dev, model.num_blocks, gpus);
    let rows = [CommStrategy::PipelineP2p, CommStrategy::UlyssesAllToAll, CommStrategy::RingKv]
        .iter()
        .map(|&s| {
            let cost = comm_cost(s, token_len, 1536, 2, &dev, model.num_blocks, gpus);
            vec![format!("{s:?}"), fmt(cost * 1e3), fmt(cost / pp)]
        })
        .collect();
    Ok(PresetOutput {
        name: "comm_compare",
        header: vec!["strategy", "comm_ms_per_forward", "ratio_vs_p2p"],
        rows,
    })
}
