//! Empirical doubling checks on a finite instance.
//!
//! [`doubling_estimate`] greedily packs every ball `B(x, 2r)` with points at
//! mutual distance `> r`. A maximal such packing is also an `r`-cover of the
//! ball by balls centred in the set, so the largest packing size `λ̂` found
//! bounds the covering number of every probed ball from above.
//!
//! [`envelope_check`] verifies that every point introduced below an edge of
//! length `r` stays within `2·eps·r` of that edge's segment.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::instance::Instance;
use crate::metric::{lp_dist_unchecked, point_segment_distance};
use crate::report::fmt_f64;

/// Radii at which to probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusGrid {
    /// `r_min, 2 r_min, 4 r_min, ...` up to the largest pairwise distance.
    Auto,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub r: f64,
    pub worst_point: usize,
    pub packing_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingEstimate {
    /// Largest greedy packing of any `B(x, 2r)` at separation `> r`.
    pub lambda_hat: usize,
    /// `λ̂²`, the packing-based upper-bound surrogate for the doubling constant.
    pub lambda_hat_squared: usize,
    pub scales: Vec<f64>,
    pub table: Vec<ScaleRow>,
    pub convention: String,
}

const CONVENTION: &str = "lambda_hat = max over probed (x, r) of a greedy maximal subset of \
B(x, 2r) = {y : d(x, y) <= 2r} with pairwise distances > r, scanned in point-id order; \
such a set is an r-cover of the ball, so lambda_hat upper-bounds the number of radius-r \
balls (centred in the set) needed to cover each probed 2r-ball";

/// Doubling estimate for an arbitrary finite point set in ℓ_p.
pub fn doubling_estimate_points(points: &[Vec<f64>], p: f64, grid: &RadiusGrid) -> Result<DoublingEstimate> {
    let n = points.len();
    if n == 0 {
        return Err(LabError::InvalidParams("empty point set".into()));
    }
    let scales = match grid {
        RadiusGrid::Explicit(r) => {
            if r.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(LabError::InvalidParams("radii must be finite and > 0".into()));
            }
            r.clone()
        }
        RadiusGrid::Auto => auto_grid(points, p),
    };
    let dist = |i: usize, j: usize| lp_dist_unchecked(&points[i], &points[j], p);

    let mut table = Vec::with_capacity(scales.len());
    for &r in &scales {
        // When every ball is the whole set, the greedy packing does not depend on x.
        let whole = if n > 1 { greedy_pack(&(0..n).collect::<Vec<_>>(), r, &dist) } else { 1 };
        let per_point: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|x| {
                let ball: Vec<usize> = (0..n).filter(|&y| dist(x, y) <= 2.0 * r).collect();
                if ball.len() == n {
                    whole
                } else {
                    greedy_pack(&ball, r, &dist)
                }
            })
            .collect();
        let (worst_point, packing_size) = per_point
            .iter()
            .enumerate()
            .fold((0, 0), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
        table.push(ScaleRow {
            r,
            worst_point,
            packing_size,
        });
    }
    let lambda_hat = table.iter().map(|row| row.packing_size).max().unwrap_or(1).max(1);
    Ok(DoublingEstimate {
        lambda_hat,
        lambda_hat_squared: lambda_hat * lambda_hat,
        scales,
        table,
        convention: CONVENTION.to_string(),
    })
}

fn greedy_pack(ball: &[usize], r: f64, dist: &impl Fn(usize, usize) -> f64) -> usize {
    let mut centres: Vec<usize> = Vec::new();
    for &y in ball {
        if centres.iter().all(|&c| dist(c, y) > r) {
            centres.push(y);
        }
    }
    centres.len()
}

fn auto_grid(points: &[Vec<f64>], p: f64) -> Vec<f64> {
    let n = points.len();
    let (lo, hi) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for j in (i + 1)..n {
                let d = lp_dist_unchecked(&points[i], &points[j], p);
                if d > 0.0 {
                    lo = lo.min(d);
                }
                hi = hi.max(d);
            }
            (lo, hi)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), (c, d)| (a.min(c), b.max(d)));
    if !lo.is_finite() {
        return vec![1.0];
    }
    let mut out = Vec::new();
    let mut r = lo;
    while r <= hi {
        out.push(r);
        r *= 2.0;
    }
    out
}

/// Doubling estimate for the points of `inst` under its ℓ_p norm.
pub fn doubling_estimate(inst: &Instance, grid: &RadiusGrid) -> Result<DoublingEstimate> {
    let pts: Vec<Vec<f64>> = inst.points.iter().map(|p| p.coords.clone()).collect();
    doubling_estimate_points(&pts, inst.params.p, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub edge: usize,
    pub level: usize,
    pub length: f64,
    pub max_descendant_distance: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub rows: Vec<EnvelopeRow>,
    pub failures: usize,
    /// Largest ratio `max_descendant_distance / (eps·r)` over all edges.
    pub worst_ratio: f64,
}

impl EnvelopeReport {
    pub fn all_pass(&self) -> bool {
        self.failures == 0
    }
}

/// Checks, for every internal edge `{a, b}` of length `r`, that all points in
/// its subtree are within (strictly) `2·eps·r` of the segment `[a, b]`.
pub fn envelope_check(inst: &Instance) -> Result<EnvelopeReport> {
    let p = inst.params.p;
    let eps = inst.params.eps;
    let internal: Vec<usize> = inst
        .edges
        .iter()
        .filter(|e| inst.children(e.id).is_some())
        .map(|e| e.id)
        .collect();
    let rows: Vec<EnvelopeRow> = internal
        .par_iter()
        .map(|&id| {
            let e = &inst.edges[id];
            let (a, b) = (inst.coords(e.a), inst.coords(e.b));
            let length = inst.edge_length(id);
            let mut worst = 0.0f64;
            for w in inst.descendant_points(id) {
                worst = worst.max(point_segment_distance(inst.coords(w), a, b, p)?);
            }
            let bound = 2.0 * eps * length;
            Ok(EnvelopeRow {
                edge: id,
                level: e.level,
                length,
                max_descendant_distance: worst,
                bound,
                pass: if eps > 0.0 { worst < bound } else { worst <= 1e-12 * length },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = rows.iter().filter(|r| !r.pass).count();
    let worst_ratio = if eps > 0.0 {
        rows.iter()
            .map(|r| r.max_descendant_distance / (eps * r.length))
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(EnvelopeReport {
        rows,
        failures,
        worst_ratio,
    })
}

/// One row per probed radius: `r,worst_point,packing_size`.
pub fn write_doubling_csv<W: Write>(est: &DoublingEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "worst_point", "packing_size"])?;
    for row in &est.table {
        w.write_record([fmt_f64(row.r), row.worst_point.to_string(), row.packing_size.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per internal edge: `edge,level,length,max_descendant_distance,bound,pass`.
pub fn write_envelope_csv<W: Write>(rep: &EnvelopeReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["edge", "level", "length", "max_descendant_distance", "bound", "pass"])?;
    for row in &rep.rows {
        w.write_record([
            row.edge.to_string(),
            row.level.to_string(),
            fmt_f64(row.length),
            fmt_f64(row.max_descendant_distance),
            fmt_f64(row.bound),
            row.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
