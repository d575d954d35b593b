//! Stable CSV schemas for the benchmark harness.

use std::fmt::Write as _;

pub const CODEC_CSV_HEADER: &str = "codec,mode,rel_or_abs,bound,workers,compress_throughput_gbs,decompress_throughput_gbs,ratio,constant_block_pct";

pub const COLLECTIVE_CSV_HEADER: &str = "collective,variant,backend,n,data_bytes,total_s,compress_pct,commu_pct,comput_pct,other_pct,compress_ops,decompress_ops,rounds,payload_sent,payload_received";

#[derive(Debug, Clone, PartialEq)]
pub struct CodecRow {
    pub codec: String,
    pub mode: String,
    pub rel_or_abs: String,
    pub bound: f32,
    pub workers: usize,
    pub compress_throughput_gbs: f64,
    pub decompress_throughput_gbs: f64,
    pub ratio: f64,
    pub constant_block_pct: f64,
}

impl CodecRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.4},{:.4},{:.3},{:.2}",
            self.codec,
            self.mode,
            self.rel_or_abs,
            self.bound,
            self.workers,
            self.compress_throughput_gbs,
            self.decompress_throughput_gbs,
            self.ratio,
            self.constant_block_pct
        )
    }
}

/// Breakdown percentages are exhaustive and non-overlapping: compress
/// (all codec work), communication wait, computation (reduction), other.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveRow {
    pub collective: String,
    pub variant: String,
    pub backend: String,
    pub n: usize,
    pub data_bytes: u64,
    pub total_s: f64,
    pub compress_pct: f64,
    pub commu_pct: f64,
    pub comput_pct: f64,
    pub other_pct: f64,
    pub compress_ops: u64,
    pub decompress_ops: u64,
    pub rounds: u64,
    pub payload_sent: u64,
    pub payload_received: u64,
}

impl CollectiveRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.2},{:.2},{:.2},{:.2},{},{},{},{},{}",
            self.collective,
            self.variant,
            self.backend,
            self.n,
            self.data_bytes,
            self.total_s,
            self.compress_pct,
            self.commu_pct,
            self.comput_pct,
            self.other_pct,
            self.compress_ops,
            self.decompress_ops,
            self.rounds,
            self.payload_sent,
            self.payload_received
        )
    }
}

/// Split a wall-clock total into the four breakdown percentages; `other`
/// absorbs the remainder so the row sums to 100.
pub fn breakdown_pcts(total: f64, compress: f64, commu: f64, comput: f64) -> (f64, f64, f64, f64) {
    if total <= 0.0 {
        return (0.0, 0.0, 0.0, 100.0);
    }
    let compress_pct = 100.0 * (compress / total).clamp(0.0, 1.0);
    let commu_pct = 100.0 * (commu / total).clamp(0.0, 1.0);
    let comput_pct = 100.0 * (comput / total).clamp(0.0, 1.0);
    let other = (100.0 - compress_pct - commu_pct - comput_pct).max(0.0);
    (compress_pct, commu_pct, comput_pct, other)
}

pub fn rows_to_csv(header: &str, rows: &[String]) -> String {
    let mut out = String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{row}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakdown_sums_to_100() {
        let (a, b, c, d) = breakdown_pcts(1.0, 0.3, 0.4, 0.2);
        assert!((a + b + c + d - 100.0).abs() < 0.5);
        let (a, b, c, d) = breakdown_pcts(2.0, 0.1, 0.2, 0.05);
        assert!((a + b + c + d - 100.0).abs() < 0.5);
    }

    #[test]
    fn csv_field_counts_match_headers() {
        let row = CodecRow {
            codec: "zlite".into(),
            mode: "serial".into(),
            rel_or_abs: "rel".into(),
            bound: 1e-3,
            workers: 1,
            compress_throughput_gbs: 1.0,
            decompress_throughput_gbs: 2.0,
            ratio: 8.0,
            constant_block_pct: 10.0,
        };
        assert_eq!(
            row.to_csv().split(',').count(),
            CODEC_CSV_HEADER.split(',').count()
        );
        let row = CollectiveRow {
            collective: "allreduce".into(),
            variant: "z".into(),
            backend: "loopback".into(),
            n: 4,
            data_bytes: 1024,
            total_s: 0.5,
            compress_pct: 25.0,
            commu_pct: 25.0,
            comput_pct: 25.0,
            other_pct: 25.0,
            compress_ops: 3,
            decompress_ops: 3,
            rounds: 6,
            payload_sent: 100,
            payload_received: 100,
        };
        assert_eq!(
            row.to_csv().split(',').count(),
            COLLECTIVE_CSV_HEADER.split(',').count()
        );
    }
}
