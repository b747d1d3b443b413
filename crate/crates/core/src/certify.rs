//! Potential-function auditor for embeddings of `A_k` into ℓ_p^d.
//!
//! For an edge `{a, b}` and an embedding `f`, the potential is
//!
//! ```text
//! Φ(a, b) = ‖f(a) - f(b)‖_2² / ‖a - b‖_p²
//! ```
//!
//! A non-expansive `f` into `d` coordinates keeps every potential below
//! `d^{1-2/p}`. When `eps <= d^{-1/p}·D^{-2/(p-2)}/c` with `c = 4^{p/(p-2)}`,
//! every internal edge of a distortion-`D` embedding has a child whose
//! potential is larger by at least `(eps/D)²`. Chaining this from the root
//! to level `k` and comparing with the cap bounds `D` from below.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::instance::{Diagonal, Instance, Params};
use crate::metric::{distortion, lp_dist_unchecked, sq_l2_dist, DistortionReport, Embedding};
use crate::report::ext_f64;

/// Relative tolerance for every Φ comparison.
pub const PHI_RTOL: f64 = 1e-9;

/// Slack allowed on the non-expansive and distortion preconditions.
pub const PRECONDITION_RTOL: f64 = 1e-9;

fn phi_tol(scale: f64) -> f64 {
    PHI_RTOL * scale.abs().max(1.0)
}

/// `c = 4^{p/(p-2)}`.
pub fn lemma_constant(p: f64) -> f64 {
    4f64.powf(p / (p - 2.0))
}

/// Upper bound `d^{1-2/p}` on the potential of any edge under a
/// non-expansive embedding into ℓ_p^d.
pub fn potential_cap(d: usize, p: f64) -> f64 {
    (d as f64).powf(1.0 - 2.0 / p)
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 2.0) || !p.is_finite() {
        return Err(LabError::InvalidParams(format!(
            "the potential argument needs a finite p > 2, got {p}"
        )));
    }
    Ok(())
}

/// `eps_threshold(d, D, p) = d^{-1/p}·D^{-2/(p-2)}/c`, without the `< 1/8` check.
pub fn eps_threshold(d: usize, distortion_bound: f64, p: f64) -> f64 {
    (d as f64).powf(-1.0 / p) * distortion_bound.powf(-2.0 / (p - 2.0)) / lemma_constant(p)
}

/// The largest `eps` for which the growth step is guaranteed at distortion
/// `D` in dimension `d`. Fails when the value is not a valid construction
/// parameter (`>= 1/8`).
pub fn epsilon_for(d: usize, distortion_bound: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    if d == 0 {
        return Err(LabError::InvalidParams("d must be >= 1".into()));
    }
    if !(distortion_bound >= 1.0) {
        return Err(LabError::InvalidParams(format!(
            "distortion bound must be >= 1, got {distortion_bound}"
        )));
    }
    let eps = eps_threshold(d, distortion_bound, p);
    if !(eps < 0.125) {
        return Err(LabError::InvalidParams(format!(
            "eps = {eps} for (d={d}, D={distortion_bound}, p={p}) is not below 1/8"
        )));
    }
    Ok(eps)
}

/// Parameters of one audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifierParams {
    /// Distortion bound `D` the audit assumes.
    pub distortion_bound: f64,
    /// Per-level potential increment `(eps/D)²`.
    pub alpha: f64,
    pub c: f64,
    pub eps_threshold: f64,
    pub eps: f64,
    pub p: f64,
    pub d: usize,
    /// Whether `eps <= eps_threshold`.
    pub applicable: bool,
}

impl CertifierParams {
    pub fn new(params: &Params, d: usize, distortion_bound: f64) -> Result<Self> {
        check_p(params.p)?;
        if params.eps <= 0.0 {
            return Err(LabError::InvalidParams(
                "the certifier needs eps > 0 (eps = 0 is a test-only mode)".into(),
            ));
        }
        if d == 0 {
            return Err(LabError::InvalidParams("d must be >= 1".into()));
        }
        if !(distortion_bound >= 1.0) || !distortion_bound.is_finite() {
            return Err(LabError::InvalidParams(format!(
                "distortion bound must be finite and >= 1, got {distortion_bound}"
            )));
        }
        let thr = eps_threshold(d, distortion_bound, params.p);
        Ok(CertifierParams {
            distortion_bound,
            alpha: (params.eps / distortion_bound).powi(2),
            c: lemma_constant(params.p),
            eps_threshold: thr,
            eps: params.eps,
            p: params.p,
            d,
            applicable: params.eps <= thr,
        })
    }
}

/// `Φ(a, b)` for edge `edge`.
pub fn edge_potential(inst: &Instance, emb: &Embedding, edge: usize) -> Result<f64> {
    emb.check_covers(inst)?;
    let e = inst
        .edges
        .get(edge)
        .ok_or_else(|| LabError::InvalidParams(format!("no edge {edge}")))?;
    potential(inst, emb, e.a, e.b)
}

fn potential(inst: &Instance, emb: &Embedding, a: usize, b: usize) -> Result<f64> {
    let src = lp_dist_unchecked(inst.coords(a), inst.coords(b), inst.params.p);
    if src == 0.0 {
        return Err(LabError::ZeroLength(a, b));
    }
    Ok(sq_l2_dist(&emb.images[a], &emb.images[b]) / (src * src))
}

/// `Δ_j(w) = (f_j(w) - (f_j(a) + f_j(b))/2) / ‖a - b‖_p` for `w = u` and `w = v`
/// of a diagonal whose parent edge is `{a, b}`.
pub fn compute_deltas(inst: &Instance, emb: &Embedding, diag: &Diagonal) -> Result<(Vec<f64>, Vec<f64>)> {
    emb.check_covers(inst)?;
    let parent = &inst.edges[diag.parent];
    let len = lp_dist_unchecked(inst.coords(parent.a), inst.coords(parent.b), inst.params.p);
    if len == 0.0 {
        return Err(LabError::ZeroLength(parent.a, parent.b));
    }
    let fa = &emb.images[parent.a];
    let fb = &emb.images[parent.b];
    let delta = |w: usize| -> Vec<f64> {
        emb.images[w]
            .iter()
            .zip(fa.iter().zip(fb))
            .map(|(fw, (x, y))| (fw - (x / 2.0 + y / 2.0)) / len)
            .collect()
    };
    Ok((delta(diag.u), delta(diag.v)))
}

/// `max(‖Δ(u)‖², ‖Δ(v)‖²)`; at least `(eps/D)²` for any non-expansive
/// embedding with distortion `D`.
pub fn diagonal_contribution(inst: &Instance, emb: &Embedding, diag: &Diagonal) -> Result<f64> {
    let (du, dv) = compute_deltas(inst, emb, diag)?;
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    Ok(sq(&du).max(sq(&dv)))
}

/// Intermediate quantities of the growth argument for one edge, scaled to
/// the parent length. Diagnostic only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub delta_sq_u: f64,
    pub delta_sq_v: f64,
    /// `4‖f(w) - f(x)‖² / ‖a - b‖²` for `(w, x)` in `(u,a), (u,b), (v,a), (v,b)`.
    pub phi_prime_half: [f64; 4],
    /// `16‖f(a) - f(s)‖² / ‖a - b‖²`.
    pub phi_prime_as: f64,
    /// `16‖f(u) - f(s)‖² / ‖a - b‖²`.
    pub phi_prime_us: f64,
}

/// An internal edge where no child reached the required potential although
/// the audit's preconditions held. Indicates a bug or a precondition breach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub edge: usize,
    pub level: usize,
    pub phi_parent: f64,
    pub required: f64,
    pub best_child: usize,
    pub best_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepOutcome {
    /// `child` has potential `phi >= Φ(parent) + alpha - tol`; `within_tolerance`
    /// is set when the margin is only met thanks to the tolerance.
    Grew {
        child: usize,
        phi: f64,
        margin: f64,
        within_tolerance: bool,
    },
    Violation(ViolationReport),
}

/// Largest potential over all edges against the cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapAudit {
    pub cap: f64,
    pub max_phi: f64,
    pub argmax_edge: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub edge: usize,
    pub level: usize,
    pub phi: f64,
}

/// Root-to-level-`k` chain of edges with growing potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialWitness {
    pub chain: Vec<ChainLink>,
    pub increments: Vec<f64>,
    pub violated: bool,
    pub first_violation_level: Option<usize>,
    pub tolerance_warnings: usize,
    pub cap: f64,
    pub cap_exceeded: bool,
}

impl PotentialWitness {
    pub fn final_phi(&self) -> f64 {
        self.chain.last().map(|l| l.phi).unwrap_or(0.0)
    }
}

/// Validated audit context: the embedding is non-expansive, its measured
/// distortion is within the assumed bound, and `eps` is below the threshold.
#[derive(Debug)]
pub struct Auditor<'a> {
    inst: &'a Instance,
    emb: &'a Embedding,
    cp: CertifierParams,
    report: DistortionReport,
}

impl<'a> Auditor<'a> {
    pub fn new(inst: &'a Instance, emb: &'a Embedding, cp: CertifierParams) -> Result<Self> {
        let report = distortion(inst, emb)?;
        Self::with_report(inst, emb, cp, report)
    }

    /// Like [`Auditor::new`] but reuses an already computed distortion report.
    pub fn with_report(
        inst: &'a Instance,
        emb: &'a Embedding,
        cp: CertifierParams,
        report: DistortionReport,
    ) -> Result<Self> {
        emb.check_covers(inst)?;
        if emb.q != inst.params.p {
            return Err(LabError::Precondition(format!(
                "target norm exponent {} differs from the source exponent {}",
                emb.q, inst.params.p
            )));
        }
        if emb.d != cp.d || inst.params.p != cp.p || inst.params.eps != cp.eps {
            return Err(LabError::Precondition(
                "certifier parameters do not match the instance and embedding".into(),
            ));
        }
        if report.max_expansion > 1.0 + PRECONDITION_RTOL {
            return Err(LabError::Precondition(format!(
                "embedding is not non-expansive (max expansion {})",
                report.max_expansion
            )));
        }
        if !(report.distortion <= cp.distortion_bound * (1.0 + PRECONDITION_RTOL)) {
            return Err(LabError::Precondition(format!(
                "measured distortion {} exceeds the assumed bound {}",
                report.distortion, cp.distortion_bound
            )));
        }
        if !cp.applicable {
            return Err(LabError::Precondition(format!(
                "eps = {} exceeds the growth threshold {}",
                cp.eps, cp.eps_threshold
            )));
        }
        Ok(Auditor {
            inst,
            emb,
            cp,
            report,
        })
    }

    pub fn params(&self) -> &CertifierParams {
        &self.cp
    }

    pub fn distortion_report(&self) -> &DistortionReport {
        &self.report
    }

    pub fn phi(&self, edge: usize) -> f64 {
        let e = &self.inst.edges[edge];
        // Source edges never have zero length once eps > 0.
        potential(self.inst, self.emb, e.a, e.b).unwrap_or(f64::NAN)
    }

    /// One growth step from `edge`: evaluates all six children and returns
    /// the one with the largest potential.
    pub fn lemma_step(&self, edge: usize) -> Result<StepOutcome> {
        let children = self
            .inst
            .children(edge)
            .ok_or_else(|| LabError::Precondition(format!("edge {edge} is a leaf")))?;
        let phi_parent = self.phi(edge);
        let (best_child, best_phi) = children
            .iter()
            .map(|&c| (c, self.phi(c)))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (c, v)| {
                if v > acc.1 {
                    (c, v)
                } else {
                    acc
                }
            });
        let required = phi_parent + self.cp.alpha;
        let margin = best_phi - required;
        if margin >= 0.0 {
            Ok(StepOutcome::Grew {
                child: best_child,
                phi: best_phi,
                margin,
                within_tolerance: false,
            })
        } else if margin >= -phi_tol(required) {
            Ok(StepOutcome::Grew {
                child: best_child,
                phi: best_phi,
                margin,
                within_tolerance: true,
            })
        } else {
            Ok(StepOutcome::Violation(ViolationReport {
                edge,
                level: self.inst.edges[edge].level,
                phi_parent,
                required,
                best_child,
                best_phi,
            }))
        }
    }

    /// Intermediate quantities of the growth argument at `edge`.
    pub fn diagnostics(&self, edge: usize) -> Result<StepDiagnostics> {
        let dg = self
            .inst
            .diagonal_of(edge)
            .ok_or_else(|| LabError::Precondition(format!("edge {edge} is a leaf")))?;
        let (du, dv) = compute_deltas(self.inst, self.emb, dg)?;
        let e = &self.inst.edges[edge];
        let ch = self.inst.children(edge).unwrap();
        let s = self.inst.edges[ch[0]].b;
        let len = self.inst.edge_length(edge);
        let img = |x: usize| &self.emb.images[x];
        let scaled = |factor: f64, x: usize, y: usize| factor * sq_l2_dist(img(x), img(y)) / (len * len);
        Ok(StepDiagnostics {
            delta_sq_u: du.iter().map(|x| x * x).sum(),
            delta_sq_v: dv.iter().map(|x| x * x).sum(),
            phi_prime_half: [
                scaled(4.0, dg.u, e.a),
                scaled(4.0, dg.u, e.b),
                scaled(4.0, dg.v, e.a),
                scaled(4.0, dg.v, e.b),
            ],
            phi_prime_as: scaled(16.0, e.a, s),
            phi_prime_us: scaled(16.0, dg.u, s),
        })
    }

    /// Follows [`Auditor::lemma_step`] from the root to level `k`.
    pub fn witness_chain(&self) -> Result<PotentialWitness> {
        let cap = potential_cap(self.cp.d, self.cp.p);
        let mut chain = vec![ChainLink {
            edge: 0,
            level: 0,
            phi: self.phi(0),
        }];
        let mut increments = Vec::new();
        let mut first_violation_level = None;
        let mut tolerance_warnings = 0;
        let mut current = 0;
        while self.inst.children(current).is_some() {
            let (next, phi) = match self.lemma_step(current)? {
                StepOutcome::Grew {
                    child,
                    phi,
                    within_tolerance,
                    ..
                } => {
                    if within_tolerance {
                        tolerance_warnings += 1;
                    }
                    (child, phi)
                }
                StepOutcome::Violation(v) => {
                    first_violation_level.get_or_insert(v.level);
                    (v.best_child, v.best_phi)
                }
            };
            increments.push(phi - chain.last().unwrap().phi);
            chain.push(ChainLink {
                edge: next,
                level: self.inst.edges[next].level,
                phi,
            });
            current = next;
        }
        let cap_exceeded = chain.iter().any(|l| l.phi > cap + phi_tol(cap));
        Ok(PotentialWitness {
            chain,
            increments,
            violated: first_violation_level.is_some(),
            first_violation_level,
            tolerance_warnings,
            cap,
            cap_exceeded,
        })
    }
}

pub fn lemma_step(inst: &Instance, emb: &Embedding, edge: usize, cp: &CertifierParams) -> Result<StepOutcome> {
    Auditor::new(inst, emb, *cp)?.lemma_step(edge)
}

pub fn witness_chain(inst: &Instance, emb: &Embedding, cp: &CertifierParams) -> Result<PotentialWitness> {
    Auditor::new(inst, emb, *cp)?.witness_chain()
}

/// Maximum potential over every edge, compared with `d^{1-2/p}`.
pub fn cap_audit(inst: &Instance, emb: &Embedding) -> Result<CapAudit> {
    emb.check_covers(inst)?;
    check_p(inst.params.p)?;
    let cap = potential_cap(emb.d, inst.params.p);
    let mut max_phi = f64::NEG_INFINITY;
    let mut argmax_edge = 0;
    for e in &inst.edges {
        let phi = potential(inst, emb, e.a, e.b)?;
        if phi > max_phi {
            max_phi = phi;
            argmax_edge = e.id;
        }
    }
    Ok(CapAudit {
        cap,
        max_phi,
        argmax_edge,
        pass: max_phi <= cap + phi_tol(cap),
    })
}

/// Distortion lower bound implied by the growth chain for any embedding of
/// an instance with parameters `(p, eps, k)` into ℓ_p^d.
///
/// If an embedding has distortion `D <= D_max = (d^{-1/p}/(c·eps))^{(p-2)/2}`
/// the growth step applies at every level, so `k·(eps/D)² <= d^{1-2/p}`,
/// i.e. `D >= eps·√k·d^{1/p-1/2}`. Hence every embedding has distortion at
/// least `min(D_max, eps·√k·d^{1/p-1/2})`. Returns 0 when that minimum is
/// below 1, since every distortion is at least 1 anyway.
pub fn certified_lower_bound_for(p: f64, eps: f64, k: usize, d: usize) -> Result<f64> {
    check_p(p)?;
    if !(eps > 0.0) {
        return Err(LabError::InvalidParams("certified bound needs eps > 0".into()));
    }
    if d == 0 {
        return Err(LabError::InvalidParams("d must be >= 1".into()));
    }
    let df = d as f64;
    let d_max = (df.powf(-1.0 / p) / (lemma_constant(p) * eps)).powf((p - 2.0) / 2.0);
    let from_levels = eps * (k as f64).sqrt() * df.powf(1.0 / p - 0.5);
    let bound = d_max.min(from_levels);
    Ok(if bound < 1.0 { 0.0 } else { bound })
}

pub fn certified_lower_bound(inst: &Instance, d: usize) -> Result<f64> {
    certified_lower_bound_for(inst.params.p, inst.params.eps, inst.params.k, d)
}

/// Full audit output, as written by the `certify` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certification {
    pub params: Params,
    pub cp: CertifierParams,
    pub witness: PotentialWitness,
    pub cap: CapAudit,
    pub certified_lower_bound: f64,
    #[serde(with = "ext_f64")]
    pub measured_distortion: f64,
    pub distortion_report: DistortionReport,
}

impl Certification {
    /// A hard violation: a failed growth step or a potential above the cap.
    pub fn has_violation(&self) -> bool {
        self.witness.violated || self.witness.cap_exceeded || !self.cap.pass
    }
}

/// Audits a (non-expansive) embedding with its own measured distortion as
/// the assumed bound.
pub fn certify(inst: &Instance, emb: &Embedding) -> Result<Certification> {
    let report = distortion(inst, emb)?;
    if !report.distortion.is_finite() {
        return Err(LabError::Precondition(
            "embedding collapses distinct points (infinite distortion)".into(),
        ));
    }
    let cp = CertifierParams::new(&inst.params, emb.d, report.distortion.max(1.0))?;
    let auditor = Auditor::with_report(inst, emb, cp, report.clone())?;
    let witness = auditor.witness_chain()?;
    Ok(Certification {
        params: inst.params,
        cp,
        witness,
        cap: cap_audit(inst, emb)?,
        certified_lower_bound: certified_lower_bound(inst, emb.d)?,
        measured_distortion: report.distortion,
        distortion_report: report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::build_instance;
    use crate::metric::EmbeddingMeta;
    use approx::assert_relative_eq;

    fn inst(p: f64, eps: f64, k: usize) -> Instance {
        build_instance(&Params::new(p, eps, k).unwrap()).unwrap()
    }

    #[test]
    fn potential_examples() {
        let a0 = inst(4.0, 1.0 / 16.0, 0);
        let emb = Embedding::new(1, 4.0, EmbeddingMeta::default(), vec![vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(edge_potential(&a0, &emb, 0).unwrap(), 1.0);
        let flat = Embedding::new(1, 4.0, EmbeddingMeta::default(), vec![vec![0.3], vec![0.3]]).unwrap();
        assert_eq!(edge_potential(&a0, &flat, 0).unwrap(), 0.0);

        let a2 = inst(4.0, 1.0 / 16.0, 2);
        let id = Embedding::from_source(&a2, 3);
        let sc = id.scaled(3.0);
        for e in 0..a2.edges.len() {
            let base = edge_potential(&a2, &id, e).unwrap();
            assert_relative_eq!(edge_potential(&a2, &sc, e).unwrap(), 9.0 * base, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_length_edge_is_an_error() {
        let a2 = inst(4.0, 0.0, 2);
        let id = Embedding::from_source(&a2, 3);
        // with eps = 0 the level-2 edges s-u and s-v of the same gadget coincide,
        // but every edge still has positive length; the diagonal has zero length.
        let dg = &a2.diagonals[0];
        assert_eq!(a2.coords(dg.u), a2.coords(dg.v));
        assert!(edge_potential(&a2, &id, 1).is_ok());
    }

    #[test]
    fn cap_values() {
        assert_eq!(potential_cap(1, 4.0), 1.0);
        assert_relative_eq!(potential_cap(16, 4.0), 4.0, max_relative = 1e-15);
        assert_relative_eq!(potential_cap(8, 3.0), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn epsilon_for_values() {
        assert_relative_eq!(epsilon_for(16, 2.0, 4.0).unwrap(), 1.0 / 64.0, max_relative = 1e-14);
        assert_relative_eq!(epsilon_for(8, 1.0, 3.0).unwrap(), 1.0 / 128.0, max_relative = 1e-14);
        assert_relative_eq!(epsilon_for(1, 1.0, 4.0).unwrap(), 1.0 / 16.0, max_relative = 1e-14);
        assert_relative_eq!(lemma_constant(4.0), 16.0, max_relative = 1e-15);
        assert_relative_eq!(lemma_constant(3.0), 64.0, max_relative = 1e-15);
        assert!(epsilon_for(1, 1.0, 2.0).is_err());
        assert!(epsilon_for(1, 0.5, 4.0).is_err());
        // p large: c -> 4 and eps -> 1/4 for d = D = 1, which is not < 1/8
        assert!(epsilon_for(1, 1.0, 100.0).is_err());
    }

    #[test]
    fn deltas_of_identity() {
        let a1 = inst(4.0, 1.0 / 16.0, 1);
        let id = Embedding::from_source(&a1, 2);
        let (du, dv) = compute_deltas(&a1, &id, &a1.diagonals[0]).unwrap();
        assert_eq!(du, vec![0.0, 1.0 / 16.0]);
        assert_eq!(dv, vec![0.0, -1.0 / 16.0]);

        let mut flat = id.clone();
        flat.images[4] = vec![0.0, 0.0];
        flat.images[5] = vec![0.0, 0.0];
        let (du, dv) = compute_deltas(&a1, &flat, &a1.diagonals[0]).unwrap();
        assert!(du.iter().chain(&dv).all(|&x| x == 0.0));
    }

    #[test]
    fn deltas_reconstruct_images() {
        let a3 = inst(4.0, 1.0 / 16.0, 3);
        let emb = crate::lab::gaussian_projection(&a3, 3, 11).unwrap();
        for dg in &a3.diagonals {
            let (du, dv) = compute_deltas(&a3, &emb, dg).unwrap();
            let par = &a3.edges[dg.parent];
            let len = a3.edge_length(dg.parent);
            for (w, delta) in [(dg.u, &du), (dg.v, &dv)] {
                for (j, dj) in delta.iter().enumerate() {
                    let rebuilt = emb.images[par.a][j] / 2.0 + emb.images[par.b][j] / 2.0 + dj * len;
                    assert!((rebuilt - emb.images[w][j]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn certifier_rejects_zero_eps_and_p2() {
        assert!(CertifierParams::new(&Params::new(4.0, 0.0, 1).unwrap(), 1, 1.0).is_err());
        assert!(certified_lower_bound_for(4.0, 0.0, 3, 1).is_err());
        assert!(certified_lower_bound_for(2.0, 0.1, 3, 1).is_err());
    }

    #[test]
    fn identity_of_a0_gives_trivial_witness() {
        let a0 = inst(4.0, 1.0 / 16.0, 0);
        let id = Embedding::from_source(&a0, 1);
        let cert = certify(&a0, &id).unwrap();
        assert_eq!(cert.witness.chain.len(), 1);
        assert!(cert.witness.increments.is_empty());
        assert!(!cert.has_violation());
    }

    #[test]
    fn identity_embedding_grows_at_every_edge() {
        // A_1 into ℓ_4^2 isometrically, with eps at the D = 1 threshold.
        let eps = epsilon_for(2, 1.0, 4.0).unwrap();
        let a1 = inst(4.0, eps, 1);
        let id = Embedding::from_source(&a1, 2);
        let cp = CertifierParams::new(&a1.params, 2, 1.0).unwrap();
        match lemma_step(&a1, &id, 0, &cp).unwrap() {
            StepOutcome::Grew { phi, .. } => assert!(phi >= 1.0 + cp.alpha),
            other => panic!("{other:?}"),
        }
        let w = witness_chain(&a1, &id, &cp).unwrap();
        assert!(!w.violated);
        assert!(w.final_phi() >= cp.alpha);
        assert!(!w.cap_exceeded);
    }

    #[test]
    fn expansive_embedding_is_a_precondition_error() {
        let eps = epsilon_for(2, 1.0, 4.0).unwrap();
        let a1 = inst(4.0, eps, 1);
        let big = Embedding::from_source(&a1, 2).scaled(2.0);
        let cp = CertifierParams::new(&a1.params, 2, 1.0).unwrap();
        assert!(matches!(lemma_step(&a1, &big, 0, &cp), Err(LabError::Precondition(_))));
    }

    #[test]
    fn leaf_step_is_precondition_error() {
        let eps = epsilon_for(2, 1.0, 4.0).unwrap();
        let a1 = inst(4.0, eps, 1);
        let id = Embedding::from_source(&a1, 2);
        let cp = CertifierParams::new(&a1.params, 2, 1.0).unwrap();
        assert!(matches!(lemma_step(&a1, &id, 3, &cp), Err(LabError::Precondition(_))));
    }

    #[test]
    fn eps_above_threshold_is_rejected() {
        let a1 = inst(4.0, 0.1, 1);
        let id = Embedding::from_source(&a1, 2);
        let cp = CertifierParams::new(&a1.params, 2, 1.0).unwrap();
        assert!(!cp.applicable);
        assert!(matches!(Auditor::new(&a1, &id, cp), Err(LabError::Precondition(_))));
    }

    #[test]
    fn certified_bound_inverts_level_count() {
        // eps at the threshold for (d, D, p) and k above d^{1-2/p}(D/eps)^2.
        for &(d, dist, p) in &[(1usize, 1.0f64, 4.0f64), (2, 1.5, 4.0), (3, 2.0, 3.0), (16, 2.0, 4.0)] {
            let eps = epsilon_for(d, dist, p).unwrap();
            let k_needed = potential_cap(d, p) * (dist / eps).powi(2);
            let k = k_needed.floor() as usize + 1;
            let b = certified_lower_bound_for(p, eps, k, d).unwrap();
            assert!(b >= dist * (1.0 - 1e-12), "d={d} D={dist} p={p}: {b}");
            // below the threshold the bound is weaker than D
            let b_low = certified_lower_bound_for(p, eps, (k_needed.floor() as usize).saturating_sub(1), d).unwrap();
            assert!(b_low < dist);
        }
    }

    #[test]
    fn certified_bound_monotone_on_grid() {
        for &p in &[3.0, 4.0, 8.0] {
            for &eps in &[1.0 / 64.0, 1.0 / 16.0, 0.1] {
                for d in 1..6 {
                    let mut prev = 0.0;
                    for k in 0..5000 {
                        let b = certified_lower_bound_for(p, eps, k, d).unwrap();
                        assert!(b >= prev);
                        let b_next_d = certified_lower_bound_for(p, eps, k, d + 1).unwrap();
                        assert!(b_next_d <= b);
                        prev = b;
                    }
                }
            }
        }
    }
}
