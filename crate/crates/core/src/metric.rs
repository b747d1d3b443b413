//! ℓ_p geometry on finite point sets: norms, distortion of finite embeddings,
//! non-expansive rescaling and point-to-segment distances.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};
use crate::instance::Instance;
use crate::report::ext_f64;

/// Number of ternary-search rounds in [`point_segment_distance`].
pub const TERNARY_ITERATIONS: usize = 200;

/// `|x|^p`, using repeated multiplication when `p` is a small integer.
#[inline]
pub fn abs_pow(x: f64, p: f64) -> f64 {
    let ax = x.abs();
    if p == 2.0 {
        ax * ax
    } else if p.fract() == 0.0 && (1.0..=32.0).contains(&p) {
        ax.powi(p as i32)
    } else {
        ax.powf(p)
    }
}

/// ℓ_p norm of the difference `x - y` without checking lengths.
///
/// Factors out the largest coordinate before raising to `p`, so values far
/// outside `[1e-300^(1/p), 1e300^(1/p)]` neither overflow nor underflow.
#[inline]
pub(crate) fn lp_dist_unchecked(x: &[f64], y: &[f64], p: f64) -> f64 {
    let mut m = 0.0f64;
    for (a, b) in x.iter().zip(y) {
        m = m.max((a - b).abs());
    }
    if m == 0.0 || p.is_infinite() {
        return m;
    }
    if !m.is_finite() {
        return f64::INFINITY;
    }
    let s: f64 = x.iter().zip(y).map(|(a, b)| abs_pow((a - b) / m, p)).sum();
    m * s.powf(1.0 / p)
}

/// ℓ_p distance between two vectors of equal length, `p >= 1`.
pub fn lp_dist(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(LabError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if !(p >= 1.0) {
        return Err(LabError::InvalidParams(format!("norm exponent {p} < 1")));
    }
    Ok(lp_dist_unchecked(x, y, p))
}

/// ℓ_p norm of a single vector.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 || p.is_infinite() {
        return m;
    }
    let s: f64 = x.iter().map(|v| abs_pow(v / m, p)).sum();
    m * s.powf(1.0 / p)
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_l2_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Provenance of an embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct EmbeddingMeta {
    pub method: String,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

/// A finite map from point ids `0..n` to vectors in ℝ^d, evaluated under
/// the ℓ_q norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub d: usize,
    pub q: f64,
    pub meta: EmbeddingMeta,
    #[serde(serialize_with = "ser_images", deserialize_with = "de_images")]
    pub images: Vec<Vec<f64>>,
}

fn ser_images<S: Serializer>(images: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let map: BTreeMap<usize, &Vec<f64>> = images.iter().enumerate().collect();
    map.serialize(s)
}

fn de_images<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
    let map = BTreeMap::<usize, Vec<f64>>::deserialize(d)?;
    let n = map.len();
    let mut out = Vec::with_capacity(n);
    for (expect, (id, v)) in map.into_iter().enumerate() {
        if id != expect {
            return Err(serde::de::Error::custom(format!(
                "image ids must be contiguous from 0; missing id {expect}"
            )));
        }
        out.push(v);
    }
    Ok(out)
}

impl Embedding {
    pub fn new(d: usize, q: f64, meta: EmbeddingMeta, images: Vec<Vec<f64>>) -> Result<Self> {
        let emb = Embedding { d, q, meta, images };
        emb.check_shape()?;
        Ok(emb)
    }

    /// Source coordinates truncated or zero-padded to `d` columns. For
    /// `d >= k + 1` this is the identity embedding.
    pub fn from_source(inst: &Instance, d: usize) -> Self {
        let images = inst
            .points
            .iter()
            .map(|pt| {
                let mut v = vec![0.0; d];
                for (dst, src) in v.iter_mut().zip(&pt.coords) {
                    *dst = *src;
                }
                v
            })
            .collect();
        Embedding {
            d,
            q: inst.params.p,
            meta: EmbeddingMeta {
                method: "source".into(),
                seed: None,
                config_hash: None,
            },
            images,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn check_shape(&self) -> Result<()> {
        if self.d == 0 {
            return Err(LabError::InvalidParams("target dimension d must be >= 1".into()));
        }
        if !(self.q >= 1.0) {
            return Err(LabError::InvalidParams(format!("target exponent q={} < 1", self.q)));
        }
        for (id, v) in self.images.iter().enumerate() {
            if v.len() != self.d {
                return Err(LabError::Schema(format!(
                    "image {id} has length {} but d = {}",
                    v.len(),
                    self.d
                )));
            }
        }
        Ok(())
    }

    /// Checks that every point of `inst` has an image of length `d`.
    pub fn check_covers(&self, inst: &Instance) -> Result<()> {
        self.check_shape()?;
        if self.images.len() != inst.n() {
            return Err(LabError::Schema(format!(
                "embedding has {} images but instance has {} points",
                self.images.len(),
                inst.n()
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        let mut out = self.clone();
        for v in &mut out.images {
            for x in v.iter_mut() {
                *x *= factor;
            }
        }
        out
    }
}

/// Worst-case expansion and contraction of an embedding over all pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    #[serde(with = "ext_f64")]
    pub max_expansion: f64,
    #[serde(with = "ext_f64")]
    pub max_contraction: f64,
    #[serde(with = "ext_f64")]
    pub distortion: f64,
    pub argmax_expansion_pair: (usize, usize),
    pub argmax_contraction_pair: (usize, usize),
}

#[derive(Clone, Copy)]
struct Extreme {
    value: f64,
    pair: (usize, usize),
}

impl Extreme {
    const NONE: Extreme = Extreme {
        value: f64::NEG_INFINITY,
        pair: (usize::MAX, usize::MAX),
    };

    // Larger value wins; ties go to the lexicographically smaller pair, so the
    // reduction does not depend on evaluation order.
    fn merge(self, other: Extreme) -> Extreme {
        if other.value > self.value || (other.value == self.value && other.pair < self.pair) {
            other
        } else {
            self
        }
    }
}

/// Brute-force distortion of `images` (under ℓ_q) relative to `source`
/// (under ℓ_source_p). Pairs whose source points coincide are skipped.
pub fn distortion_between(
    source: &[Vec<f64>],
    source_p: f64,
    images: &[Vec<f64>],
    q: f64,
) -> Result<DistortionReport> {
    if source.len() != images.len() {
        return Err(LabError::LengthMismatch {
            left: source.len(),
            right: images.len(),
        });
    }
    let n = source.len();
    let rows: Vec<(Extreme, Extreme)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut exp = Extreme::NONE;
            let mut con = Extreme::NONE;
            for j in (i + 1)..n {
                let src = lp_dist_unchecked(&source[i], &source[j], source_p);
                if src == 0.0 {
                    continue;
                }
                let img = lp_dist_unchecked(&images[i], &images[j], q);
                exp = exp.merge(Extreme {
                    value: img / src,
                    pair: (i, j),
                });
                let c = if img == 0.0 { f64::INFINITY } else { src / img };
                con = con.merge(Extreme {
                    value: c,
                    pair: (i, j),
                });
            }
            (exp, con)
        })
        .collect();
    let (exp, con) = rows
        .into_iter()
        .fold((Extreme::NONE, Extreme::NONE), |(e, c), (re, rc)| {
            (e.merge(re), c.merge(rc))
        });
    if exp.pair.0 == usize::MAX {
        // Fewer than two distinct source points.
        return Ok(DistortionReport {
            max_expansion: 1.0,
            max_contraction: 1.0,
            distortion: 1.0,
            argmax_expansion_pair: (0, 0),
            argmax_contraction_pair: (0, 0),
        });
    }
    let distortion = if con.value.is_infinite() || exp.value.is_infinite() {
        f64::INFINITY
    } else {
        exp.value * con.value
    };
    Ok(DistortionReport {
        max_expansion: exp.value,
        max_contraction: con.value,
        distortion,
        argmax_expansion_pair: exp.pair,
        argmax_contraction_pair: con.pair,
    })
}

fn source_coords(inst: &Instance) -> Vec<Vec<f64>> {
    inst.points.iter().map(|p| p.coords.clone()).collect()
}

/// Distortion of `emb` on the points of `inst`, source measured in ℓ_p with
/// the instance's `p` and images in ℓ_q with the embedding's `q`.
pub fn distortion(inst: &Instance, emb: &Embedding) -> Result<DistortionReport> {
    emb.check_covers(inst)?;
    distortion_between(&source_coords(inst), inst.params.p, &emb.images, emb.q)
}

/// Rescales `emb` so that its maximum expansion is 1.
pub fn normalize_nonexpansive(inst: &Instance, emb: &Embedding) -> Result<Embedding> {
    let report = distortion(inst, emb)?;
    normalize_with_report(emb, &report)
}

pub(crate) fn normalize_with_report(emb: &Embedding, report: &DistortionReport) -> Result<Embedding> {
    let e = report.max_expansion;
    if !(e > 0.0) || !e.is_finite() {
        return Err(LabError::Precondition(format!(
            "cannot normalize an embedding with max expansion {e}"
        )));
    }
    if e == 1.0 {
        return Ok(emb.clone());
    }
    Ok(emb.scaled(1.0 / e))
}

/// Distance from `x` to the segment `[a, b]` in ℓ_p, found by ternary search
/// over the segment parameter (the distance is convex along a line).
pub fn point_segment_distance(x: &[f64], a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if x.len() != a.len() || a.len() != b.len() {
        return Err(LabError::LengthMismatch {
            left: x.len(),
            right: if x.len() != a.len() { a.len() } else { b.len() },
        });
    }
    if !(p >= 1.0) {
        return Err(LabError::InvalidParams(format!("norm exponent {p} < 1")));
    }
    if a == b {
        return Err(LabError::DegenerateSegment);
    }
    let mut buf = vec![0.0; a.len()];
    let mut at = |theta: f64| {
        for ((o, ai), bi) in buf.iter_mut().zip(a).zip(b) {
            *o = ai + theta * (bi - ai);
        }
        lp_dist_unchecked(x, &buf, p)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..TERNARY_ITERATIONS {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if at(m1) <= at(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let best = at(0.5 * (lo + hi)).min(at(0.0)).min(at(1.0));
    Ok(best)
}
