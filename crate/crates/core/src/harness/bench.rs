use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::run::{random_params, run, Protocol, RunError};
use crate::graphs::{generate, GraphSpec};

/// A sweep: every graph spec, each with `trials` seeds and every source
/// count in `ks` (one pass with random counts when empty).
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub protocol: Protocol,
    pub specs: Vec<GraphSpec>,
    pub trials: usize,
    pub ks: Vec<usize>,
    /// Longest message length drawn.
    pub p: usize,
    pub seed: u64,
}

/// One CSV row. Column order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub family: String,
    pub n: usize,
    #[serde(rename = "D")]
    pub d: u64,
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(rename = "M")]
    pub m: u64,
    pub k: usize,
    #[serde(rename = "measuredRounds")]
    pub measured_rounds: u64,
    #[serde(rename = "upperBoundExpr")]
    pub upper_bound_expr: f64,
    #[serde(rename = "lowerBoundExpr")]
    pub lower_bound_expr: Option<u64>,
    pub ratio: f64,
}

pub const CSV_HEADER: [&str; 10] = [
    "family",
    "n",
    "D",
    "L",
    "M",
    "k",
    "measuredRounds",
    "upperBoundExpr",
    "lowerBoundExpr",
    "ratio",
];

struct Job {
    index: usize,
    spec: GraphSpec,
    k: Option<usize>,
}

fn run_job(cfg: &BenchConfig, job: &Job) -> Result<BenchRow, RunError> {
    let graph = generate(&job.spec).map_err(|e| RunError::Usage(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(
        cfg.seed
            .wrapping_mul(0x9E37_79B9)
            .wrapping_add(job.index as u64),
    );
    let params = random_params(cfg.protocol, &graph, job.k, cfg.p, &mut rng);
    let result = run(cfg.protocol, &graph, &params)?;
    let s = result.summary;
    if !s.failures.is_empty() {
        return Err(RunError::Usage(format!(
            "{} on {}: {}",
            cfg.protocol,
            job.spec,
            s.failures.join("; ")
        )));
    }
    Ok(BenchRow {
        family: job.spec.family.name().to_string(),
        n: s.n,
        d: s.d,
        l: s.l,
        m: s.m,
        k: s.k,
        measured_rounds: s.measured_rounds,
        upper_bound_expr: s.upper_expr,
        lower_bound_expr: s.lower_floor,
        ratio: s.measured_rounds as f64 / s.upper_expr,
    })
}

/// Runs the sweep in parallel. Rows come back in sweep order; on the first
/// failure the rows before it are returned with the error.
pub fn bench(cfg: &BenchConfig) -> (Vec<BenchRow>, Option<RunError>) {
    let ks: Vec<Option<usize>> = if cfg.ks.is_empty() {
        vec![None]
    } else {
        cfg.ks.iter().copied().map(Some).collect()
    };
    let mut jobs = Vec::new();
    for spec in &cfg.specs {
        for &k in &ks {
            for trial in 0..cfg.trials {
                let mut spec = spec.clone();
                spec.seed = spec.seed.wrapping_add(trial as u64);
                jobs.push(Job {
                    index: jobs.len(),
                    spec,
                    k,
                });
            }
        }
    }
    let results: Vec<Result<BenchRow, RunError>> =
        jobs.par_iter().map(|job| run_job(cfg, job)).collect();
    let mut rows = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => return (rows, Some(e)),
        }
    }
    (rows, None)
}

/// Writes the header and `rows`.
pub fn write_csv(rows: &[BenchRow], w: impl Write) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
