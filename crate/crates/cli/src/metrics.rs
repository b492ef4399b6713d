//! CSV output: per-TTI metrics, per-policy summaries and pre-training curves.

use std::io::Write;

use puncture_core::engine::{PretrainReport, RunSummary};
use puncture_core::TtiTrace;

/// Bumped whenever a column of `metrics.csv` changes meaning or position.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

pub const METRICS_HEADER: [&str; 10] = [
    "tti",
    "policy",
    "reward",
    "goodput_scs",
    "goodput_bits",
    "queue_len",
    "gen_time_us",
    "branch_time_us",
    "decode_bitmap",
    "seed",
];

/// `'1'` per decoded user, `'0'` per failed one, in user order.
pub fn decode_bitmap(trace: &TtiTrace) -> String {
    trace.outcome.0.iter().map(|&ok| if ok { '1' } else { '0' }).collect()
}

/// Formats with negative zero folded into zero.
fn num(v: f64) -> String {
    (v + 0.0).to_string()
}

/// Writes one metrics row per trace. Timing columns stay empty unless `timing`
/// is set, so untimed output is reproducible byte for byte.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
    timing: bool,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W, timing: bool) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(METRICS_HEADER)?;
        Ok(Self { inner, timing })
    }

    pub fn write(&mut self, policy: &str, seed: u64, trace: &TtiTrace) -> csv::Result<()> {
        let (gen, branches) = if self.timing {
            let b: Vec<String> = trace.branch_time_us.iter().map(|t| format!("{t:.3}")).collect();
            (format!("{:.3}", trace.codebook_time_us), b.join(";"))
        } else {
            (String::new(), String::new())
        };
        self.inner.write_record([
            trace.tti.to_string(),
            policy.to_string(),
            num(trace.reward),
            trace.goodput_scs.to_string(),
            num(trace.goodput_bits),
            trace.arrivals.queue_len_after.to_string(),
            gen,
            branches,
            decode_bitmap(trace),
            seed.to_string(),
        ])
    }

    pub fn finish(mut self) -> csv::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| csv::Error::from(e.into_error()))
    }
}

pub fn write_summary<W: Write>(out: W, rows: &[(String, RunSummary)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "ttis", "mean_reward", "mean_goodput_scs", "mean_goodput_bits"])?;
    for (policy, s) in rows {
        w.write_record([
            policy.clone(),
            s.ttis.to_string(),
            num(s.mean_reward),
            num(s.mean_goodput_scs),
            num(s.mean_goodput_bits),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reward_curve<W: Write>(out: W, report: &PretrainReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "stage", "reward", "moving_avg"])?;
    let mut stage = 0usize;
    for (i, (r, m)) in report.rewards.iter().zip(&report.moving_avg).enumerate() {
        while stage + 1 < report.stage_ends.len() && i as u64 >= report.stage_ends[stage] {
            stage += 1;
        }
        w.write_record([i.to_string(), stage.to_string(), num(*r), num(*m)])?;
    }
    w.flush()?;
    Ok(())
}
