//! Output writers: report/row CSVs and browser trace-event JSON timelines.
//! All writers are deterministic for identical inputs.

use anyhow::{Context, Result};
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use streamsim_core::costmodel::CommStrategy;
use streamsim_core::sim::{Queue, SimReport, SweepRow, TraceSpan};

fn strategy_label(s: CommStrategy) -> &'static str {
    match s {
        CommStrategy::PipelineP2p => "pipeline_p2p",
        CommStrategy::UlyssesAllToAll => "ulysses",
        CommStrategy::RingKv => "ring_kv",
    }
}

pub fn report_csv_header() -> Vec<&'static str> {
    vec![
        "label",
        "ttff_s",
        "steady_fps",
        "latency_p50_s",
        "latency_p95_s",
        "latency_max_s",
        "slo_violations",
        "chunks",
        "frames",
        "makespan_s",
    ]
}

pub fn report_csv_row(label: &str, r: &SimReport) -> Vec<String> {
    report_record(label, r)
}

fn report_record(label: &str, r: &SimReport) -> Vec<String> {
    vec![
        label.to_string(),
        format!("{:.6}", r.ttff),
        format!("{:.4}", r.steady_fps),
        format!("{:.6}", r.per_chunk_latency.p50),
        format!("{:.6}", r.per_chunk_latency.p95),
        format!("{:.6}", r.per_chunk_latency.max),
        r.slo_violations.to_string(),
        r.chunks_completed.to_string(),
        r.frames_emitted.to_string(),
        format!("{:.6}", r.makespan),
    ]
}

pub fn write_report_csv(path: &Path, rows: &[(String, SimReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(report_csv_header())?;
    for (label, report) in rows {
        w.write_record(report_record(label, report))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["gpus", "steps", "height", "width", "strategy"];
    header.extend(report_csv_header().into_iter().skip(1));
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![
            row.gpus.to_string(),
            row.steps.to_string(),
            row.height.to_string(),
            row.width.to_string(),
            strategy_label(row.strategy).to_string(),
        ];
        rec.extend(report_record("", &row.report).into_iter().skip(1));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Generic small table: one header row plus stringly records.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Timeline in the browser trace-event format (load via about://tracing or
/// Perfetto): one complete event per span, one thread row per device queue.
pub fn write_chrome_trace(path: &Path, spans: &[TraceSpan]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    let events: Vec<serde_json::Value> = spans
        .iter()
        .map(|s| {
            let queue = match s.queue {
                Queue::Compute => "compute",
                Queue::Transfer => "transfer",
            };
            json!({
                "name": format!(
                    "s{} c{} l{}",
                    s.step.stream_id, s.step.chunk_seq, s.step.noise_level_index
                ),
                "cat": queue,
                "ph": "X",
                "ts": s.start * 1e6,
                "dur": (s.end - s.start) * 1e6,
                "pid": 0,
                "tid": s.device * 2 + usize::from(s.queue == Queue::Transfer),
            })
        })
        .collect();
    serde_json::to_writer(&mut out, &json!({ "traceEvents": events }))?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use streamsim_core::costmodel::StreamShape;
    use streamsim_core::sim::{run, CommSpec, Pipeline, RunLength};

    fn sample() -> (SimReport, Vec<TraceSpan>) {
        let shape = StreamShape {
            batch_b: 2,
            chunk_frames_t: 4,
            height_h: 480,
            width_w: 832,
            denoise_steps_n: 2,
            latent_channels_c: 16,
        };
        let pipe =
            Pipeline::from_stage_times(&[0.02, 0.03], 0.01, 0.01, &shape, CommSpec::zero())
                .unwrap();
        run(&pipe, RunLength::Chunks(12), 100.0, None).unwrap()
    }

    #[test]
    fn writers_are_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (report, spans) = sample();
        let mut outputs = Vec::new();
        for i in 0..2 {
            let csv_path = dir.path().join(format!("r{i}.csv"));
            let json_path = dir.path().join(format!("t{i}.json"));
            write_report_csv(&csv_path, &[("x".to_string(), report.clone())]).unwrap();
            write_chrome_trace(&json_path, &spans).unwrap();
            outputs.push((std::fs::read(csv_path).unwrap(), std::fs::read(json_path).unwrap()));
        }
        assert_eq!(outputs[0], outputs[1]);
    }

    #[test]
    fn trace_json_is_valid_and_ordered() {
        let dir = tempfile::tempdir().unwrap();
        let (_, spans) = sample();
        let path = dir.path().join("trace.json");
        write_chrome_trace(&path, &spans).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let events = value["traceEvents"].as_array().unwrap();
        assert_eq!(events.len(), spans.len());
        assert!(events.iter().all(|e| e["ph"] == "X" && e["dur"].as_f64().unwrap() >= 0.0));
    }
}
