use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certify::certified_lower_bound_for;
use crate::error::{LabError, Result};
use crate::instance::{build_instance, Instance, Params};
use crate::metric::{distortion, Embedding};
use crate::report::{ext_f64, fmt_f64};

use super::projection::gaussian_projection;
use super::stress::{stress_minimize, OptimizerConfig};

pub const SWEEP_CSV_HEADER: [&str; 10] = [
    "k", "n", "p", "eps", "d", "method", "seed", "distortion", "cert_lb", "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gaussian,
    Stress,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gaussian => "gaussian",
            Method::Stress => "stress",
        }
    }
}

/// Grid of sweep cells: every combination of `ps x eps x ks x ds x methods x seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub ps: Vec<f64>,
    pub eps: Vec<f64>,
    pub ks: Vec<usize>,
    pub ds: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Record wall-clock time per cell. Off by default so reruns are
    /// byte-identical.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Gaussian, Method::Stress]
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ps.is_empty() || self.eps.is_empty() || self.ks.is_empty() || self.ds.is_empty() {
            return Err(LabError::Schema("sweep grid axes must be non-empty".into()));
        }
        if self.seeds.is_empty() || self.methods.is_empty() {
            return Err(LabError::Schema("sweep grid needs at least one seed and method".into()));
        }
        for &p in &self.ps {
            for &eps in &self.eps {
                for &k in &self.ks {
                    Params::new(p, eps, k)?;
                }
            }
        }
        if self.ds.contains(&0) {
            return Err(LabError::InvalidParams("d must be >= 1".into()));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub n: usize,
    pub p: f64,
    pub eps: f64,
    pub d: usize,
    pub method: Method,
    pub seed: u64,
    #[serde(with = "ext_f64")]
    pub distortion: f64,
    pub cert_lb: f64,
    pub wall_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRow {
    /// Whether the row is consistent with the certified bound.
    pub fn respects_certificate(&self, tol: f64) -> bool {
        self.error.is_some() || self.distortion >= self.cert_lb - tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

pub fn tradeoff_sweep(grid: &SweepGrid) -> Result<SweepResult> {
    tradeoff_sweep_with(grid, |_, _| Ok(()))
}

/// Runs the grid, calling `on_embedding` for every successful cell (used for
/// optional persistence). Cell failures are recorded in their row.
pub fn tradeoff_sweep_with<F>(grid: &SweepGrid, mut on_embedding: F) -> Result<SweepResult>
where
    F: FnMut(&SweepRow, &Embedding) -> Result<()>,
{
    grid.validate()?;
    let mut rows = Vec::new();
    for &p in &grid.ps {
        for &eps in &grid.eps {
            for &k in &grid.ks {
                let params = Params::new(p, eps, k)?;
                let inst = build_instance(&params);
                for &d in &grid.ds {
                    let cert_lb = if eps > 0.0 {
                        certified_lower_bound_for(p, eps, k, d)?
                    } else {
                        0.0
                    };
                    for &method in &grid.methods {
                        for &seed in &grid.seeds {
                            let started = Instant::now();
                            let outcome = inst
                                .as_ref()
                                .map_err(|e| LabError::InvalidParams(e.to_string()))
                                .and_then(|inst| run_cell(inst, d, method, seed, &grid.optimizer));
                            let wall_ms = grid
                                .record_timing
                                .then(|| started.elapsed().as_millis() as u64);
                            let n = inst.as_ref().map(|i| i.n()).unwrap_or(0);
                            let mut row = SweepRow {
                                k,
                                n,
                                p,
                                eps,
                                d,
                                method,
                                seed,
                                distortion: f64::NAN,
                                cert_lb,
                                wall_ms,
                                error: None,
                            };
                            match outcome {
                                Ok((emb, dist)) => {
                                    row.distortion = dist;
                                    on_embedding(&row, &emb)?;
                                }
                                Err(e) => row.error = Some(e.to_string()),
                            }
                            rows.push(row);
                        }
                    }
                }
            }
        }
    }
    Ok(SweepResult { rows })
}

fn run_cell(inst: &Instance, d: usize, method: Method, seed: u64, base: &OptimizerConfig) -> Result<(Embedding, f64)> {
    let emb = match method {
        Method::Gaussian => gaussian_projection(inst, d, seed)?,
        Method::Stress => {
            let cfg = OptimizerConfig {
                seed,
                ..base.clone()
            };
            stress_minimize(inst, d, &cfg)?
        }
    };
    let rep = distortion(inst, &emb)?;
    Ok((emb, rep.distortion))
}

/// Writes rows as CSV with the fixed header
/// `k,n,p,eps,d,method,seed,distortion,cert_lb,wall_ms`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.n.to_string(),
            fmt_f64(r.p),
            fmt_f64(r.eps),
            r.d.to_string(),
            r.method.name().to_string(),
            r.seed.to_string(),
            fmt_f64(r.distortion),
            fmt_f64(r.cert_lb),
            r.wall_ms.map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
