//! Gradient-based adversary: minimizes a smooth soft-max of the pairwise
//! log distance ratios.
//!
//! For a pair `(i, j)` let `l_ij = ln ‖y_i - y_j‖_q - ln ‖x_i - x_j‖_p`. The
//! surrogate is
//!
//! ```text
//! S_T(y) = T · ln Σ_{i<j} ( exp(l_ij / T) + exp(-l_ij / T) )
//! ```
//!
//! which lies within `T·ln(2·#pairs)` of `max |l_ij|` and tends to it as
//! `T → 0`. Minimizing `max |l_ij|` over all rescalings is the same as
//! minimizing `ln(distortion) / 2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::instance::Instance;
use crate::metric::{abs_pow, distortion, lp_dist_unchecked, normalize_nonexpansive, DistortionReport, Embedding, EmbeddingMeta};
use crate::report::config_hash;

use super::projection::gaussian_projection;

/// Largest instance the stress minimizer accepts (pair tables are dense).
pub const STRESS_MAX_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// I.i.d. `N(0, 1/d)` coordinates.
    Gaussian,
    /// A Gaussian random projection of the source coordinates.
    ProjectionWarmStart,
    /// Source coordinates, truncated or zero-padded to `d` columns.
    Source,
    /// The recursive construction replayed in ℝ^d: each gadget's apexes are
    /// offset perpendicular to the image of their parent edge, on a side
    /// drawn from the seed. Equals the identity when `d >= k + 1`.
    Gadget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decay {
    /// `step_t = step_size / sqrt(t + 1)`.
    InvSqrt,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub restarts: usize,
    pub iterations: usize,
    /// Initial step, as a fraction of each point's nearest-neighbour distance.
    pub step_size: f64,
    pub decay: Decay,
    pub temperature: f64,
    pub init: Init,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            seed: 0,
            restarts: 5,
            iterations: 200,
            step_size: 0.5,
            decay: Decay::InvSqrt,
            temperature: 0.02,
            init: Init::Gadget,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.iterations == 0 {
            return Err(LabError::InvalidParams("restarts and iterations must be >= 1".into()));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(LabError::InvalidParams("temperature must be > 0".into()));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(LabError::InvalidParams("step_size must be > 0".into()));
        }
        Ok(())
    }

    fn step(&self, t: usize) -> f64 {
        match self.decay {
            Decay::InvSqrt => self.step_size / ((t + 1) as f64).sqrt(),
            Decay::Constant => self.step_size,
        }
    }
}

/// Value of the surrogate at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub surrogate: f64,
    pub max_log_ratio: f64,
    pub min_log_ratio: f64,
}

impl Evaluation {
    /// `ln(distortion) = max l - min l`; infinite if a pair collapsed.
    pub fn log_distortion(&self) -> f64 {
        self.max_log_ratio - self.min_log_ratio
    }
}

/// Pair tables for one `(instance, d, q)` combination. Images are passed as
/// flat row-major `n x d` slices.
#[derive(Debug)]
pub struct StressProblem {
    n: usize,
    d: usize,
    q: f64,
    offsets: Vec<usize>,
    /// `ln ‖x_i - x_j‖_p` per pair; NaN marks coincident source points.
    log_src: Vec<f64>,
    /// Distance from each point to its nearest distinct neighbour.
    local_scale: Vec<f64>,
}

impl StressProblem {
    pub fn new(inst: &Instance, d: usize, q: f64) -> Result<Self> {
        let n = inst.n();
        if d == 0 {
            return Err(LabError::InvalidParams("d must be >= 1".into()));
        }
        if n > STRESS_MAX_POINTS {
            return Err(LabError::Capacity(format!(
                "stress minimizer supports at most {STRESS_MAX_POINTS} points, instance has {n}"
            )));
        }
        let offsets: Vec<usize> = (0..n).map(|i| i * n - i * (i + 1) / 2).collect();
        let p = inst.params.p;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| {
                        let s = lp_dist_unchecked(inst.coords(i), inst.coords(j), p);
                        if s == 0.0 {
                            f64::NAN
                        } else {
                            s.ln()
                        }
                    })
                    .collect()
            })
            .collect();
        let log_src: Vec<f64> = rows.into_iter().flatten().collect();
        let mut local_scale = vec![f64::INFINITY; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let l = log_src[offsets[i] + j - i - 1];
                if !l.is_nan() {
                    let s = l.exp();
                    local_scale[i] = local_scale[i].min(s);
                    local_scale[j] = local_scale[j].min(s);
                }
            }
        }
        for s in &mut local_scale {
            if !s.is_finite() {
                *s = 1.0;
            }
        }
        Ok(StressProblem {
            n,
            d,
            q,
            offsets,
            log_src,
            local_scale,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn pair_count(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    fn row_slices<'b, T>(&self, buf: &'b mut [T], width: usize) -> Vec<&'b mut [T]> {
        let mut out = Vec::with_capacity(self.n);
        let mut rest = buf;
        for i in 0..self.n {
            let len = (self.n - i - 1) * width;
            let (head, tail) = rest.split_at_mut(len);
            out.push(head);
            rest = tail;
        }
        out
    }

    /// Evaluates the surrogate at `y` and, when `grad` is given, writes its
    /// gradient (same layout as `y`).
    pub fn evaluate(&self, y: &[f64], temperature: f64, grad: Option<&mut [f64]>) -> Result<Evaluation> {
        let (n, d, q) = (self.n, self.d, self.q);
        if y.len() != n * d {
            return Err(LabError::LengthMismatch {
                left: y.len(),
                right: n * d,
            });
        }
        let want_grad = grad.is_some();
        let mut ell = vec![0.0; self.pair_count()];
        let mut h = if want_grad {
            vec![0.0; self.pair_count() * d]
        } else {
            Vec::new()
        };

        // Pass 1: log ratios and, for the gradient, ∂l_ij/∂y_i.
        let ell_rows = self.row_slices(&mut ell, 1);
        let h_rows: Vec<&mut [f64]> = if want_grad {
            self.row_slices(&mut h, d)
        } else {
            (0..n).map(|_| &mut [][..]).collect()
        };
        let extremes: Vec<(f64, f64)> = ell_rows
            .into_par_iter()
            .zip(h_rows.into_par_iter())
            .enumerate()
            .map(|(i, (erow, hrow))| {
                let yi = &y[i * d..(i + 1) * d];
                let base = self.offsets[i];
                let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
                for (jj, slot) in erow.iter_mut().enumerate() {
                    let j = i + 1 + jj;
                    let ls = self.log_src[base + jj];
                    if ls.is_nan() {
                        *slot = f64::NAN;
                        continue;
                    }
                    let yj = &y[j * d..(j + 1) * d];
                    let raw: f64 = yi.iter().zip(yj).map(|(a, b)| abs_pow(a - b, q)).sum();
                    let (l, m, denom) = if raw.is_normal() && raw.is_finite() {
                        (raw.ln() / q - ls, 1.0, raw)
                    } else {
                        // Rescale by the largest coordinate gap to dodge under/overflow.
                        let m = yi.iter().zip(yj).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                        if m == 0.0 {
                            *slot = f64::NEG_INFINITY;
                            lo = f64::NEG_INFINITY;
                            continue;
                        }
                        let s: f64 = yi.iter().zip(yj).map(|(a, b)| abs_pow((a - b) / m, q)).sum();
                        (m.ln() + s.ln() / q - ls, m, m * s)
                    };
                    *slot = l;
                    hi = hi.max(l);
                    lo = lo.min(l);
                    if want_grad {
                        let hv = &mut hrow[jj * d..(jj + 1) * d];
                        for ((o, a), b) in hv.iter_mut().zip(yi).zip(yj) {
                            let z = (a - b) / m;
                            *o = z.signum() * abs_pow(z, q - 1.0) / denom;
                        }
                    }
                }
                (hi, lo)
            })
            .collect();
        let max_l = extremes.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        let min_l = extremes.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        if max_l == f64::NEG_INFINITY && min_l == f64::INFINITY {
            // no distinct pairs
            if let Some(g) = grad {
                g.fill(0.0);
            }
            return Ok(Evaluation {
                surrogate: 0.0,
                max_log_ratio: 0.0,
                min_log_ratio: 0.0,
            });
        }
        if !min_l.is_finite() || !max_l.is_finite() {
            return Ok(Evaluation {
                surrogate: f64::INFINITY,
                max_log_ratio: max_l,
                min_log_ratio: min_l,
            });
        }

        // Pass 2: log-sum-exp, shifted by the largest |l|. Each l is replaced by
        // exp((l - shift)/T) - exp((-l - shift)/T), the unnormalized ∂S/∂l.
        let t = temperature;
        let shift = max_l.max(-min_l);
        let product = (-2.0 * shift / t).exp();
        let row_sums: Vec<f64> = self
            .row_slices(&mut ell, 1)
            .into_par_iter()
            .map(|row| {
                let mut sum = 0.0;
                for l in row.iter_mut() {
                    if l.is_nan() {
                        *l = 0.0;
                        continue;
                    }
                    let up = ((*l - shift) / t).exp();
                    let down = if product.is_normal() && up.is_normal() {
                        product / up
                    } else {
                        ((-*l - shift) / t).exp()
                    };
                    sum += up + down;
                    *l = up - down;
                }
                sum
            })
            .collect();
        let total: f64 = row_sums.iter().sum();
        let surrogate = shift + t * total.ln();

        if let Some(g) = grad {
            g.fill(0.0);
            let inv = 1.0 / total;
            for i in 0..n {
                let base = self.offsets[i];
                for j in (i + 1)..n {
                    let idx = base + j - i - 1;
                    let wv = ell[idx] * inv;
                    if wv == 0.0 {
                        continue;
                    }
                    let hv = &h[idx * d..(idx + 1) * d];
                    for c in 0..d {
                        let delta = wv * hv[c];
                        g[i * d + c] += delta;
                        g[j * d + c] -= delta;
                    }
                }
            }
        }
        Ok(Evaluation {
            surrogate,
            max_log_ratio: max_l,
            min_log_ratio: min_l,
        })
    }
}

fn flatten(images: &[Vec<f64>]) -> Vec<f64> {
    images.iter().flatten().copied().collect()
}

fn unflatten(y: &[f64], d: usize) -> Vec<Vec<f64>> {
    y.chunks(d).map(|c| c.to_vec()).collect()
}

/// Surrogate value of `emb` at `temperature`.
pub fn surrogate_value(inst: &Instance, emb: &Embedding, temperature: f64) -> Result<f64> {
    emb.check_covers(inst)?;
    let prob = StressProblem::new(inst, emb.d, emb.q)?;
    Ok(prob.evaluate(&flatten(&emb.images), temperature, None)?.surrogate)
}

/// Gradient of the surrogate with respect to every image coordinate.
pub fn surrogate_gradient(inst: &Instance, emb: &Embedding, temperature: f64) -> Result<Vec<Vec<f64>>> {
    emb.check_covers(inst)?;
    let prob = StressProblem::new(inst, emb.d, emb.q)?;
    let mut g = vec![0.0; inst.n() * emb.d];
    let ev = prob.evaluate(&flatten(&emb.images), temperature, Some(&mut g))?;
    if !ev.surrogate.is_finite() {
        return Err(LabError::NonFinite("surrogate is infinite (collapsed pair)".into()));
    }
    Ok(unflatten(&g, emb.d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub initial_distortion: f64,
    pub best_distortion: f64,
    pub best_iteration: usize,
}

/// Result of [`stress_minimize_detailed`].
#[derive(Debug, Clone)]
pub struct StressRun {
    /// Best iterate across restarts, rescaled to be non-expansive.
    pub embedding: Embedding,
    pub report: DistortionReport,
    pub restarts: Vec<RestartSummary>,
}

fn initial_images(inst: &Instance, d: usize, cfg: &OptimizerConfig, restart: usize, rng: &mut ChaCha8Rng, local: &[f64]) -> Result<Vec<f64>> {
    let n = inst.n();
    let mut y = match cfg.init {
        Init::Gaussian => {
            let sd = 1.0 / (d as f64).sqrt();
            (0..n * d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        Init::ProjectionWarmStart => {
            let seed: u64 = rng.random();
            flatten(&gaussian_projection(inst, d, seed)?.images)
        }
        Init::Source => flatten(&Embedding::from_source(inst, d).images),
        Init::Gadget => gadget_images(inst, d, inst.params.p, rng),
    };
    if cfg.init == Init::Source && restart > 0 {
        jitter(&mut y, d, local, 0.05, rng);
    }
    Ok(y)
}

/// Replays the construction in ℝ^d. Level `i` offsets along axis
/// `1 + (i - 1) mod (d - 1)` made ℓ_2-orthogonal to the parent image (along
/// the parent itself when `d = 1`), scaled to ℓ_q length `eps·‖f(a) - f(b)‖_q`.
fn gadget_images(inst: &Instance, d: usize, q: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = inst.n();
    let eps = inst.params.eps;
    let exact = d > inst.params.k;
    let mut y = vec![0.0; n * d];
    y[0] = 1.0;
    y[d] = -1.0;
    for e in &inst.edges {
        let Some(dg) = inst.diagonal_of(e.id) else {
            continue;
        };
        let ch = inst.children(e.id).unwrap();
        let (s, t) = (inst.edges[ch[0]].b, inst.edges[ch[5]].a);
        let fa: Vec<f64> = y[e.a * d..(e.a + 1) * d].to_vec();
        let fb: Vec<f64> = y[e.b * d..(e.b + 1) * d].to_vec();
        let dir: Vec<f64> = fb.iter().zip(&fa).map(|(b, a)| b - a).collect();
        let len = crate::metric::lp_norm(&dir, q);
        let level = dg.level;
        let w = offset_direction(&dir, d, level);
        let wn = crate::metric::lp_norm(&w, q);
        let side = if exact || rng.random::<bool>() { 1.0 } else { -1.0 };
        let scale = if wn > 0.0 { side * eps * len / wn } else { 0.0 };
        for j in 0..d {
            let mid = 0.5 * fa[j] + 0.5 * fb[j];
            y[s * d + j] = 0.75 * fa[j] + 0.25 * fb[j];
            y[t * d + j] = 0.25 * fa[j] + 0.75 * fb[j];
            y[dg.u * d + j] = mid + scale * w[j];
            y[dg.v * d + j] = mid - scale * w[j];
        }
    }
    y
}

fn offset_direction(dir: &[f64], d: usize, level: usize) -> Vec<f64> {
    if d == 1 {
        return dir.to_vec();
    }
    let dd: f64 = dir.iter().map(|x| x * x).sum();
    let first = 1 + (level - 1) % (d - 1);
    // Try the level's axis first, then the others, until one is not parallel to dir.
    for shift in 0..d {
        let axis = (first + shift) % d;
        let mut w = vec![0.0; d];
        w[axis] = 1.0;
        if dd > 0.0 {
            let c = dir[axis] / dd;
            for (wj, dj) in w.iter_mut().zip(dir) {
                *wj -= c * dj;
            }
        }
        if w.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
            return w;
        }
    }
    vec![0.0; d]
}

fn jitter(y: &mut [f64], d: usize, local: &[f64], amount: f64, rng: &mut ChaCha8Rng) {
    for (chunk, r) in y.chunks_mut(d).zip(local) {
        for x in chunk {
            *x += amount * r * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

fn run_restart(
    inst: &Instance,
    prob: &StressProblem,
    d: usize,
    cfg: &OptimizerConfig,
    restart: usize,
) -> Result<(Vec<f64>, f64, RestartSummary)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut y = initial_images(inst, d, cfg, restart, &mut rng, &prob.local_scale)?;
    let mut grad = vec![0.0; y.len()];
    let mut ev = prob.evaluate(&y, cfg.temperature, Some(&mut grad))?;
    if !ev.log_distortion().is_finite() {
        // A coordinate truncation can merge points; separate them slightly.
        jitter(&mut y, d, &prob.local_scale, 1e-3, &mut rng);
        ev = prob.evaluate(&y, cfg.temperature, Some(&mut grad))?;
    }
    let initial = ev.log_distortion();
    let mut best = (y.clone(), initial, 0usize);
    for t in 0..cfg.iterations {
        if !ev.surrogate.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(LabError::NonFinite(format!(
                "restart {restart}, iteration {t}: surrogate {} with log ratios in [{}, {}]",
                ev.surrogate, ev.min_log_ratio, ev.max_log_ratio
            )));
        }
        let step = cfg.step(t);
        for ((yi, gi), r) in y.chunks_mut(d).zip(grad.chunks(d)).zip(&prob.local_scale) {
            let f = step * r * r;
            for (a, g) in yi.iter_mut().zip(gi) {
                *a -= f * g;
            }
        }
        let last = t + 1 == cfg.iterations;
        ev = prob.evaluate(&y, cfg.temperature, if last { None } else { Some(&mut grad) })?;
        let ld = ev.log_distortion();
        if ld < best.1 {
            best = (y.clone(), ld, t + 1);
        }
    }
    let summary = RestartSummary {
        restart,
        initial_distortion: initial.exp(),
        best_distortion: best.1.exp(),
        best_iteration: best.2,
    };
    Ok((best.0, best.1, summary))
}

/// Runs all restarts and returns the best iterate with per-restart summaries.
pub fn stress_minimize_detailed(inst: &Instance, d: usize, cfg: &OptimizerConfig) -> Result<StressRun> {
    cfg.validate()?;
    let q = inst.params.p;
    let prob = StressProblem::new(inst, d, q)?;
    let runs: Vec<Result<(Vec<f64>, f64, RestartSummary)>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(inst, &prob, d, cfg, r))
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut summaries = Vec::with_capacity(cfg.restarts);
    for run in runs {
        let (y, ld, s) = run?;
        summaries.push(s);
        // strict comparison keeps the earliest restart on ties
        if best.as_ref().is_none_or(|b| ld < b.1) {
            best = Some((y, ld));
        }
    }
    let (y, _) = best.expect("at least one restart");
    let raw = Embedding::new(
        d,
        q,
        EmbeddingMeta {
            method: "stress".into(),
            seed: Some(cfg.seed),
            config_hash: Some(config_hash(cfg)?),
        },
        unflatten(&y, d),
    )?;
    let embedding = normalize_nonexpansive(inst, &raw)?;
    let report = distortion(inst, &embedding)?;
    Ok(StressRun {
        embedding,
        report,
        restarts: summaries,
    })
}

/// Best non-expansive embedding found by soft-max stress minimization.
pub fn stress_minimize(inst: &Instance, d: usize, cfg: &OptimizerConfig) -> Result<Embedding> {
    Ok(stress_minimize_detailed(inst, d, cfg)?.embedding)
}
