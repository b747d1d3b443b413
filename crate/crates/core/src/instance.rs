//! Recursive construction of the Laakso-type point set `A_k(eps)` in ℓ_p.
//!
//! `A_0` is the pair `{e_0, -e_0}` joined by the level-0 root edge. Level `i`
//! replaces every level `i-1` edge `{a, b}` by the gadget
//!
//! ```text
//!            u
//!          /   \
//!   a --- s     t --- b
//!          \   /
//!            v
//! ```
//!
//! with `s = 3a/4 + b/4`, `t = a/4 + 3b/4` and
//! `u, v = (a + b)/2 ± eps·‖a - b‖_p·e_i`. The six child edges are
//! `a-s, s-u, s-v, u-t, v-t, t-b`, and `{u, v}` is recorded as a diagonal.
//!
//! Coordinates live in ℝ^{k+1}: index 0 carries the root segment and index
//! `i` is consumed by the level-`i` gadgets.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::metric::lp_dist_unchecked;

/// Default cap on the number of points [`build_instance`] will allocate.
pub const DEFAULT_MAX_POINTS: usize = 1 << 20;

/// Format tag written into serialized instances.
pub const INSTANCE_FORMAT: &str = "laakso-instance/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    pub eps: f64,
    pub k: usize,
}

impl Params {
    pub fn new(p: f64, eps: f64, k: usize) -> Result<Self> {
        let params = Params { p, eps, k };
        params.validate()?;
        Ok(params)
    }

    /// `p > 2` and `0 <= eps < 1/8`. `eps = 0` is accepted as a degenerate
    /// test mode; the certifier rejects it separately.
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0) || !self.p.is_finite() {
            return Err(LabError::InvalidParams(format!(
                "p must be a finite real > 2, got {}",
                self.p
            )));
        }
        if !(self.eps >= 0.0 && self.eps < 0.125) {
            return Err(LabError::InvalidParams(format!(
                "eps must lie in [0, 1/8), got {}",
                self.eps
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.k + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: usize,
    pub birth_level: usize,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "root")]
    Root,
    #[serde(rename = "a-s")]
    AS,
    #[serde(rename = "s-u")]
    SU,
    #[serde(rename = "s-v")]
    SV,
    #[serde(rename = "u-t")]
    UT,
    #[serde(rename = "v-t")]
    VT,
    #[serde(rename = "t-b")]
    TB,
}

impl Role {
    /// Child roles in the order they are created.
    pub const CHILDREN: [Role; 6] = [Role::AS, Role::SU, Role::SV, Role::UT, Role::VT, Role::TB];

    /// Whether an edge in this role is a slanted gadget edge (touches `u` or `v`).
    pub fn is_slanted(self) -> bool {
        matches!(self, Role::SU | Role::SV | Role::UT | Role::VT)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub a: usize,
    pub b: usize,
    pub level: usize,
    pub parent: Option<usize>,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagonal {
    pub u: usize,
    pub v: usize,
    pub level: usize,
    pub parent: usize,
}

/// The four points added for one edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildPoints {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Computes the gadget points `s, t, u, v` for the edge `{a, b}` at `level`.
///
/// `a` and `b` must be zero at coordinate `level` and above, so that the
/// displacement along `e_level` is orthogonal to the edge.
pub fn child_points(a: &[f64], b: &[f64], level: usize, params: &Params) -> Result<ChildPoints> {
    params.validate()?;
    let dim = params.dim();
    if a.len() != dim || b.len() != dim {
        return Err(LabError::LengthMismatch {
            left: a.len().max(b.len()),
            right: dim,
        });
    }
    if level == 0 || level > params.k {
        return Err(LabError::InvalidParams(format!(
            "expansion level {level} outside [1, {}]",
            params.k
        )));
    }
    if a[level..].iter().chain(&b[level..]).any(|&x| x != 0.0) {
        return Err(LabError::Precondition(format!(
            "endpoints have nonzero coordinates at index >= {level}"
        )));
    }
    let len = lp_dist_unchecked(a, b, params.p);
    if len == 0.0 {
        return Err(LabError::DegenerateSegment);
    }
    let lerp = |wa: f64, wb: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect() };
    let s = lerp(0.75, 0.25);
    let t = lerp(0.25, 0.75);
    let mid = lerp(0.5, 0.5);
    let offset = params.eps * len;
    let mut u = mid.clone();
    let mut v = mid;
    u[level] = offset;
    v[level] = -offset;
    Ok(ChildPoints { s, t, u, v })
}

/// Point and edge counts predicted by the recursion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub n: u128,
    pub edges_per_level: Vec<u128>,
}

/// `n = 2 + 4(6^k - 1)/5` and `6^i` edges at level `i`. `None` if the counts
/// overflow `u128`.
pub fn closed_form_counts(k: usize) -> Option<Counts> {
    let mut edges_per_level = Vec::with_capacity(k + 1);
    let mut e: u128 = 1;
    for i in 0..=k {
        if i > 0 {
            e = e.checked_mul(6)?;
        }
        edges_per_level.push(e);
    }
    let n = 2 + 4 * ((e - 1) / 5);
    Some(Counts { n, edges_per_level })
}

/// An immutable, fully expanded instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub params: Params,
    pub points: Vec<Point>,
    /// Edges ordered by level; level `i` occupies `edge_range(i)`.
    pub edges: Vec<Edge>,
    /// Diagonals ordered by level; the diagonal created from edge `e` is
    /// `diagonals[diagonal_of[e]]`.
    pub diagonals: Vec<Diagonal>,
    /// Set when `eps = 0`, in which case each `u` and `v` coincide.
    pub degenerate: bool,
    children: Vec<Option<[usize; 6]>>,
    diagonal_of: Vec<Option<usize>>,
    level_start: Vec<usize>,
}

/// Options for [`build_instance_with`].
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub max_points: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

pub fn build_instance(params: &Params) -> Result<Instance> {
    build_instance_with(params, BuildOptions::default())
}

pub fn build_instance_with(params: &Params, opts: BuildOptions) -> Result<Instance> {
    params.validate()?;
    let counts = closed_form_counts(params.k)
        .ok_or_else(|| LabError::Capacity(format!("6^{} overflows", params.k)))?;
    if counts.n > opts.max_points as u128 {
        return Err(LabError::Capacity(format!(
            "k={} needs {} points, budget is {}",
            params.k, counts.n, opts.max_points
        )));
    }
    let n = counts.n as usize;
    let total_edges: usize = counts.edges_per_level.iter().map(|&e| e as usize).sum();
    let dim = params.dim();

    let mut points = Vec::with_capacity(n);
    let mut root_a = vec![0.0; dim];
    root_a[0] = 1.0;
    let mut root_b = vec![0.0; dim];
    root_b[0] = -1.0;
    points.push(Point {
        id: 0,
        birth_level: 0,
        coords: root_a,
    });
    points.push(Point {
        id: 1,
        birth_level: 0,
        coords: root_b,
    });

    let mut edges = Vec::with_capacity(total_edges);
    edges.push(Edge {
        id: 0,
        a: 0,
        b: 1,
        level: 0,
        parent: None,
        role: Role::Root,
    });
    let mut diagonals = Vec::with_capacity(total_edges.saturating_sub(1) / 6);
    let mut level_start = vec![0usize];

    for level in 1..=params.k {
        let prev = *level_start.last().unwrap()..edges.len();
        level_start.push(edges.len());
        for parent_id in prev {
            let (a, b) = (edges[parent_id].a, edges[parent_id].b);
            let cp = child_points(&points[a].coords, &points[b].coords, level, params)?;
            let base = points.len();
            let (s, t, u, v) = (base, base + 1, base + 2, base + 3);
            for coords in [cp.s, cp.t, cp.u, cp.v] {
                points.push(Point {
                    id: points.len(),
                    birth_level: level,
                    coords,
                });
            }
            let pairs = [(a, s), (s, u), (s, v), (u, t), (v, t), (t, b)];
            for (role, (x, y)) in Role::CHILDREN.into_iter().zip(pairs) {
                edges.push(Edge {
                    id: edges.len(),
                    a: x,
                    b: y,
                    level,
                    parent: Some(parent_id),
                    role,
                });
            }
            diagonals.push(Diagonal {
                u,
                v,
                level,
                parent: parent_id,
            });
        }
    }
    debug_assert_eq!(points.len(), n);
    Instance::assemble(*params, points, edges, diagonals)
}

impl Instance {
    /// Validates structure and builds the child/diagonal indices.
    fn assemble(
        params: Params,
        points: Vec<Point>,
        edges: Vec<Edge>,
        diagonals: Vec<Diagonal>,
    ) -> Result<Instance> {
        params.validate()?;
        let schema = |msg: String| LabError::Schema(msg);
        let counts = closed_form_counts(params.k).ok_or_else(|| schema("k too large".into()))?;
        if points.len() as u128 != counts.n {
            return Err(schema(format!(
                "expected {} points, found {}",
                counts.n,
                points.len()
            )));
        }
        for (i, pt) in points.iter().enumerate() {
            if pt.id != i {
                return Err(schema(format!("point at position {i} has id {}", pt.id)));
            }
            if pt.coords.len() != params.dim() {
                return Err(schema(format!("point {i} has {} coordinates", pt.coords.len())));
            }
            if pt.birth_level > params.k {
                return Err(schema(format!("point {i} born at level {}", pt.birth_level)));
            }
        }
        let mut level_start = Vec::with_capacity(params.k + 1);
        let mut children: Vec<Option<[usize; 6]>> = vec![None; edges.len()];
        let mut filled = vec![0u8; edges.len()];
        for (i, e) in edges.iter().enumerate() {
            if e.id != i {
                return Err(schema(format!("edge at position {i} has id {}", e.id)));
            }
            if e.a >= points.len() || e.b >= points.len() {
                return Err(schema(format!("edge {i} references a missing point")));
            }
            if i == 0 || edges[i - 1].level != e.level {
                if e.level != level_start.len() {
                    return Err(schema(format!("edge {i} breaks level ordering")));
                }
                level_start.push(i);
            }
            match (e.parent, e.role) {
                (None, Role::Root) if e.level == 0 => {}
                (Some(par), role) if role != Role::Root && par < i => {
                    if edges[par].level + 1 != e.level {
                        return Err(schema(format!("edge {i} parent level mismatch")));
                    }
                    let slot = Role::CHILDREN.iter().position(|r| *r == role).unwrap();
                    let entry = children[par].get_or_insert([usize::MAX; 6]);
                    if entry[slot] != usize::MAX {
                        return Err(schema(format!("edge {par} has two {role:?} children")));
                    }
                    entry[slot] = i;
                    filled[par] += 1;
                }
                _ => return Err(schema(format!("edge {i} has inconsistent parent/role"))),
            }
        }
        if level_start.len() != params.k + 1 {
            return Err(schema("edge levels do not cover 0..=k".into()));
        }
        for (lvl, start) in level_start.iter().enumerate() {
            let end = level_start.get(lvl + 1).copied().unwrap_or(edges.len());
            if (end - start) as u128 != counts.edges_per_level[lvl] {
                return Err(schema(format!("level {lvl} has {} edges", end - start)));
            }
        }
        for (i, e) in edges.iter().enumerate() {
            let expect = if e.level < params.k { 6 } else { 0 };
            if filled[i] != expect {
                return Err(schema(format!("edge {i} has {} children", filled[i])));
            }
        }
        let mut diagonal_of = vec![None; edges.len()];
        for (i, dg) in diagonals.iter().enumerate() {
            if dg.parent >= edges.len() || diagonal_of[dg.parent].is_some() {
                return Err(schema(format!("diagonal {i} has a bad parent")));
            }
            if edges[dg.parent].level + 1 != dg.level || dg.u >= points.len() || dg.v >= points.len() {
                return Err(schema(format!("diagonal {i} is inconsistent")));
            }
            diagonal_of[dg.parent] = Some(i);
        }
        let internal = edges.iter().filter(|e| e.level < params.k).count();
        if diagonals.len() != internal {
            return Err(schema(format!(
                "{} diagonals for {internal} internal edges",
                diagonals.len()
            )));
        }
        Ok(Instance {
            params,
            degenerate: params.eps == 0.0,
            points,
            edges,
            diagonals,
            children,
            diagonal_of,
            level_start,
        })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn root(&self) -> &Edge {
        &self.edges[0]
    }

    /// Edge ids of level `level`.
    pub fn edge_range(&self, level: usize) -> std::ops::Range<usize> {
        let start = self.level_start[level];
        let end = self
            .level_start
            .get(level + 1)
            .copied()
            .unwrap_or(self.edges.len());
        start..end
    }

    pub fn edges_at(&self, level: usize) -> &[Edge] {
        &self.edges[self.edge_range(level)]
    }

    /// Child edge ids in role order `a-s, s-u, s-v, u-t, v-t, t-b`.
    pub fn children(&self, edge: usize) -> Option<[usize; 6]> {
        self.children[edge]
    }

    pub fn diagonal_of(&self, edge: usize) -> Option<&Diagonal> {
        self.diagonal_of[edge].map(|i| &self.diagonals[i])
    }

    pub fn coords(&self, id: usize) -> &[f64] {
        &self.points[id].coords
    }

    /// ℓ_p length of an edge.
    pub fn edge_length(&self, edge: usize) -> f64 {
        let e = &self.edges[edge];
        lp_dist_unchecked(self.coords(e.a), self.coords(e.b), self.params.p)
    }

    /// Points introduced anywhere in the subtree below `edge`.
    pub fn descendant_points(&self, edge: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![edge];
        while let Some(e) = stack.pop() {
            if let Some(ch) = self.children[e] {
                // s is the b-end of a-s, t the a-end of t-b; u and v come from the diagonal.
                let dg = self.diagonal_of(e).expect("internal edge has a diagonal");
                out.push(self.edges[ch[0]].b);
                out.push(self.edges[ch[5]].a);
                out.push(dg.u);
                out.push(dg.v);
                stack.extend(ch.iter().rev());
            }
        }
        out.sort_unstable();
        out
    }

    pub fn to_json(&self) -> Result<String> {
        crate::report::to_stable_json(&InstanceDoc::from(self))
    }

    pub fn from_json(s: &str) -> Result<Instance> {
        let doc: InstanceDoc = serde_json::from_str(s)?;
        doc.into_instance()
    }
}

/// On-disk form of an [`Instance`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub format: String,
    pub params: Params,
    pub degenerate: bool,
    pub points: Vec<Point>,
    pub edges: Vec<Edge>,
    pub diagonals: Vec<Diagonal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl From<&Instance> for InstanceDoc {
    fn from(inst: &Instance) -> Self {
        InstanceDoc {
            format: INSTANCE_FORMAT.to_string(),
            params: inst.params,
            degenerate: inst.degenerate,
            points: inst.points.clone(),
            edges: inst.edges.clone(),
            diagonals: inst.diagonals.clone(),
            run_config: None,
        }
    }
}

impl InstanceDoc {
    pub fn into_instance(self) -> Result<Instance> {
        if self.format != INSTANCE_FORMAT {
            return Err(LabError::Schema(format!(
                "unsupported instance format {:?}",
                self.format
            )));
        }
        Instance::assemble(self.params, self.points, self.edges, self.diagonals)
    }
}
