//! Finite truncations of trees with root at infinity.
//!
//! A truncation stores each vertex's level explicitly together with its
//! predecessor and ordered successor list. Two shapes exist: slabs (all
//! vertices between two levels below a single top vertex) and balls of the
//! homogeneous tree around a center, with levels measured along a fixed
//! two-ended geodesic through the center.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FlowError, Result};

pub const DEFAULT_VERTEX_CAP: usize = 4_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub level: i64,
    pub pred: Option<VertexId>,
    pub succ: Vec<VertexId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Slab { level_top: i64, level_bot: i64 },
    Ball { center: VertexId, radius: u32 },
}

/// Successor counts for [`TruncatedTree::general_slab`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuccCounts {
    /// `counts[k]` successors for every vertex `k` levels below the top.
    PerLevel(Vec<u32>),
    /// One count per non-bottom vertex, in breadth-first construction order.
    PerVertex(Vec<u32>),
}

#[derive(Clone, Debug)]
pub struct TruncatedTree {
    vertices: Vec<Vertex>,
    shape: Shape,
    top: VertexId,
    degree_bound: usize,
    q: Option<u32>,
    // h such that every trapezoid R_h1^h2(x) with h2 <= fit[x] is complete.
    fit: Vec<u32>,
    // ball only: frame[radius + n] = x_n
    frame: Vec<VertexId>,
}

fn count_cap_check(count: u128, cap: usize) -> Result<()> {
    if count > cap as u128 {
        Err(FlowError::TooLarge { count, cap })
    } else {
        Ok(())
    }
}

impl TruncatedTree {
    /// Slab of the homogeneous tree `T_q` between `level_bot` and `level_top`.
    pub fn homogeneous_slab(q: u32, level_top: i64, level_bot: i64) -> Result<Self> {
        Self::homogeneous_slab_capped(q, level_top, level_bot, DEFAULT_VERTEX_CAP)
    }

    pub fn homogeneous_slab_capped(q: u32, level_top: i64, level_bot: i64, cap: usize) -> Result<Self> {
        if q < 2 {
            return Err(invalid(format!("branching q must be >= 2, got {q}")));
        }
        if level_top <= level_bot {
            return Err(invalid(format!("level_top {level_top} must exceed level_bot {level_bot}")));
        }
        let depth = (level_top - level_bot) as u64;
        let mut t = Self::slab_from_rule(level_top, level_bot, cap, |_, _| Ok(q), homogeneous_count(q, depth))?;
        t.q = Some(q);
        Ok(t)
    }

    /// Slab with arbitrary (positive) successor counts.
    pub fn general_slab(counts: &SuccCounts, level_top: i64, level_bot: i64) -> Result<Self> {
        Self::general_slab_capped(counts, level_top, level_bot, DEFAULT_VERTEX_CAP)
    }

    pub fn general_slab_capped(counts: &SuccCounts, level_top: i64, level_bot: i64, cap: usize) -> Result<Self> {
        if level_top <= level_bot {
            return Err(invalid(format!("level_top {level_top} must exceed level_bot {level_bot}")));
        }
        let depth = (level_top - level_bot) as usize;
        match counts {
            SuccCounts::PerLevel(c) => {
                if c.len() != depth {
                    return Err(invalid(format!("need {depth} per-level counts, got {}", c.len())));
                }
                if let Some(k) = c.iter().position(|&n| n == 0) {
                    return Err(invalid(format!("zero successor count at depth {k} above bottom")));
                }
                let mut total: u128 = 1;
                let mut width: u128 = 1;
                for &n in c {
                    width = width.saturating_mul(n as u128);
                    total = total.saturating_add(width);
                }
                Self::slab_from_rule(level_top, level_bot, cap, |k, _| Ok(c[k]), total)
            }
            SuccCounts::PerVertex(c) => {
                if let Some(i) = c.iter().position(|&n| n == 0) {
                    return Err(invalid(format!("zero successor count for vertex {i} above bottom")));
                }
                Self::slab_from_rule(
                    level_top,
                    level_bot,
                    cap,
                    |_, v| {
                        c.get(v)
                            .copied()
                            .ok_or_else(|| invalid(format!("missing successor count for vertex {v}")))
                    },
                    0,
                )
                .and_then(|t| {
                    let used = t.vertices.iter().filter(|v| !v.succ.is_empty()).count();
                    if used != c.len() {
                        Err(invalid(format!("{} successor counts given, {used} used", c.len())))
                    } else {
                        Ok(t)
                    }
                })
            }
        }
    }

    // `rule(depth_below_top, vertex_index)` gives the successor count.
    fn slab_from_rule<F>(level_top: i64, level_bot: i64, cap: usize, mut rule: F, predicted: u128) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<u32>,
    {
        count_cap_check(predicted, cap)?;
        let mut vertices = vec![Vertex { id: VertexId(0), level: level_top, pred: None, succ: Vec::new() }];
        let mut frontier = vec![0usize];
        let mut depth = 0usize;
        let mut level = level_top;
        while level > level_bot {
            let mut next = Vec::new();
            for &v in &frontier {
                let n = rule(depth, v)?;
                for _ in 0..n {
                    let id = vertices.len();
                    if id >= cap {
                        return Err(FlowError::TooLarge { count: id as u128 + 1, cap });
                    }
                    vertices.push(Vertex { id: VertexId(id as u32), level: level - 1, pred: Some(VertexId(v as u32)), succ: Vec::new() });
                    vertices[v].succ.push(VertexId(id as u32));
                    next.push(id);
                }
            }
            frontier = next;
            depth += 1;
            level -= 1;
        }
        let degree_bound = vertices.iter().map(|v| v.succ.len() + 1).max().unwrap_or(1);
        let mut t = TruncatedTree {
            vertices,
            shape: Shape::Slab { level_top, level_bot },
            top: VertexId(0),
            degree_bound,
            q: None,
            fit: Vec::new(),
            frame: Vec::new(),
        };
        t.compute_fit();
        Ok(t)
    }

    /// Ball of radius `radius` around a center `o` in `T_q`.
    pub fn ball(q: u32, radius: u32) -> Result<Self> {
        Self::ball_capped(q, radius, DEFAULT_VERTEX_CAP)
    }

    pub fn ball_capped(q: u32, radius: u32, cap: usize) -> Result<Self> {
        if q < 2 {
            return Err(invalid(format!("branching q must be >= 2, got {q}")));
        }
        count_cap_check(ball_count(q, radius), cap)?;
        let mut vertices = vec![Vertex { id: VertexId(0), level: 0, pred: None, succ: Vec::new() }];
        let mut dist = vec![0u32];
        let mut queue = VecDeque::from([0usize]);
        let push = |vertices: &mut Vec<Vertex>, dist: &mut Vec<u32>, level: i64, d: u32| -> usize {
            let id = vertices.len();
            vertices.push(Vertex { id: VertexId(id as u32), level, pred: None, succ: Vec::new() });
            dist.push(d);
            id
        };
        while let Some(u) = queue.pop_front() {
            let d = dist[u];
            if d == radius {
                continue;
            }
            let lvl = vertices[u].level;
            // upward neighbour, unless we came from it
            if vertices[u].pred.is_none() {
                let p = push(&mut vertices, &mut dist, lvl + 1, d + 1);
                vertices[u].pred = Some(VertexId(p as u32));
                vertices[p].succ.push(VertexId(u as u32));
                queue.push_back(p);
            }
            // downward neighbours not yet present
            let missing = q as usize - vertices[u].succ.len();
            for _ in 0..missing {
                let c = push(&mut vertices, &mut dist, lvl - 1, d + 1);
                vertices[c].pred = Some(VertexId(u as u32));
                vertices[u].succ.push(VertexId(c as u32));
                queue.push_back(c);
            }
        }
        let mut frame = vec![VertexId(0); 2 * radius as usize + 1];
        let r = radius as usize;
        let mut up = VertexId(0);
        let mut down = VertexId(0);
        for n in 1..=r {
            up = vertices[up.idx()].pred.expect("pred chain inside ball");
            down = vertices[down.idx()].succ[0];
            frame[r + n] = up;
            frame[r - n] = down;
        }
        let mut t = TruncatedTree {
            vertices,
            shape: Shape::Ball { center: VertexId(0), radius },
            top: VertexId(0),
            degree_bound: q as usize + 1,
            q: Some(q),
            fit: Vec::new(),
            frame,
        };
        t.compute_fit();
        Ok(t)
    }

    fn compute_fit(&mut self) {
        let order = self.ids_by_level_ascending();
        let mut fit = vec![1u32; self.vertices.len()];
        for id in order {
            let v = &self.vertices[id.idx()];
            if self.has_full_succ(id) {
                fit[id.idx()] = 1 + v.succ.iter().map(|c| fit[c.idx()]).min().unwrap_or(0);
            }
        }
        self.fit = fit;
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertices.len() as u32).map(VertexId)
    }

    pub fn contains(&self, x: VertexId) -> bool {
        x.idx() < self.vertices.len()
    }

    pub fn check(&self, x: VertexId) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(invalid(format!("vertex {x} not in truncation of {} vertices", self.len())))
        }
    }

    #[inline]
    pub fn vertex(&self, x: VertexId) -> &Vertex {
        &self.vertices[x.idx()]
    }

    #[inline]
    pub fn level(&self, x: VertexId) -> i64 {
        self.vertices[x.idx()].level
    }

    #[inline]
    pub fn pred(&self, x: VertexId) -> Option<VertexId> {
        self.vertices[x.idx()].pred
    }

    #[inline]
    pub fn succ(&self, x: VertexId) -> &[VertexId] {
        &self.vertices[x.idx()].succ
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn top(&self) -> VertexId {
        self.top
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    /// Branching number when the truncation comes from a homogeneous tree.
    pub fn q(&self) -> Option<u32> {
        self.q
    }

    pub fn is_slab(&self) -> bool {
        matches!(self.shape, Shape::Slab { .. })
    }

    pub fn level_bot(&self) -> i64 {
        match self.shape {
            Shape::Slab { level_bot, .. } => level_bot,
            Shape::Ball { radius, .. } => -(radius as i64),
        }
    }

    pub fn level_top(&self) -> i64 {
        match self.shape {
            Shape::Slab { level_top, .. } => level_top,
            Shape::Ball { radius, .. } => radius as i64,
        }
    }

    /// Whether every successor the ambient tree gives `x` is present.
    pub fn has_full_succ(&self, x: VertexId) -> bool {
        let v = &self.vertices[x.idx()];
        match self.shape {
            Shape::Slab { level_bot, .. } => v.level > level_bot,
            Shape::Ball { .. } => v.succ.len() == self.q.unwrap_or(0) as usize,
        }
    }

    pub fn is_bottom(&self, x: VertexId) -> bool {
        !self.has_full_succ(x)
    }

    /// Largest `h` such that the full downward cone of `x` to depth `h - 1`
    /// lies in the truncation.
    #[inline]
    pub fn fit_height(&self, x: VertexId) -> u32 {
        self.fit[x.idx()]
    }

    /// The vertex `k` predecessor steps above `x`, if inside the truncation.
    pub fn ancestor(&self, x: VertexId, k: u32) -> Option<VertexId> {
        let mut a = x;
        for _ in 0..k {
            a = self.pred(a)?;
        }
        Some(a)
    }

    /// Ids sorted by increasing level (ties by id). Bottom-up passes iterate this.
    pub fn ids_by_level_ascending(&self) -> Vec<VertexId> {
        let mut ids: Vec<VertexId> = self.ids().collect();
        ids.sort_by_key(|&x| (self.level(x), x));
        ids
    }

    pub fn bottom_vertices(&self) -> Vec<VertexId> {
        self.ids().filter(|&x| self.succ(x).is_empty()).collect()
    }

    /// Ball frame vertex `x_n`, for `|n| <= radius`.
    pub fn frame(&self, n: i64) -> Option<VertexId> {
        match self.shape {
            Shape::Ball { radius, .. } if n.unsigned_abs() <= radius as u64 => Some(self.frame[(radius as i64 + n) as usize]),
            _ => None,
        }
    }

    /// `x <= y`: `y` lies on the predecessor chain from `x` (inclusive).
    pub fn is_below(&self, x: VertexId, y: VertexId) -> bool {
        let ly = self.level(y);
        let mut a = x;
        while self.level(a) < ly {
            match self.pred(a) {
                Some(p) => a = p,
                None => return false,
            }
        }
        a == y
    }

    /// The lowest vertex above both `x` and `y`.
    pub fn confluent(&self, x: VertexId, y: VertexId) -> Result<VertexId> {
        let escape = || FlowError::WindowTooSmall(format!("confluent of {x} and {y} lies outside the truncation"));
        let (mut a, mut b) = (x, y);
        while self.level(a) < self.level(b) {
            a = self.pred(a).ok_or_else(escape)?;
        }
        while self.level(b) < self.level(a) {
            b = self.pred(b).ok_or_else(escape)?;
        }
        while a != b {
            a = self.pred(a).ok_or_else(escape)?;
            b = self.pred(b).ok_or_else(escape)?;
        }
        Ok(a)
    }

    /// `d(x,y) = 2ℓ(x∧y) − ℓ(x) − ℓ(y)`.
    pub fn geodesic_distance(&self, x: VertexId, y: VertexId) -> Result<u32> {
        let c = self.confluent(x, y)?;
        Ok((2 * self.level(c) - self.level(x) - self.level(y)) as u32)
    }

    /// `ρ(x,y) = e^{ℓ(x∧y)}` for `x != y`, `0` for `x == y`.
    pub fn gromov_distance(&self, x: VertexId, y: VertexId) -> Result<f64> {
        if x == y {
            return Ok(0.0);
        }
        Ok((self.level(self.confluent(x, y)?) as f64).exp())
    }

    /// Level of the confluent, which determines `ρ` exactly.
    pub fn gromov_exponent(&self, x: VertexId, y: VertexId) -> Result<Option<i64>> {
        if x == y {
            return Ok(None);
        }
        Ok(Some(self.level(self.confluent(x, y)?)))
    }

    /// Neighbours in canonical order: predecessor first, then successors.
    pub fn neighbours(&self, x: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.pred(x).into_iter().chain(self.succ(x).iter().copied())
    }

    /// Vertices `y <= x` with `d(x,y) = k`, in depth-first successor order.
    pub fn descendants_at(&self, x: VertexId, k: u32) -> Vec<VertexId> {
        let mut cur = vec![x];
        for _ in 0..k {
            let mut next = Vec::with_capacity(cur.len() * 2);
            for v in cur {
                next.extend_from_slice(self.succ(v));
            }
            cur = next;
        }
        cur
    }
}

/// `Σ_{k=0}^{depth} q^k`, saturating.
pub fn homogeneous_count(q: u32, depth: u64) -> u128 {
    let mut total: u128 = 0;
    let mut term: u128 = 1;
    for _ in 0..=depth {
        total = total.saturating_add(term);
        term = term.saturating_mul(q as u128);
    }
    total
}

/// `1 + (q+1)(q^r − 1)/(q − 1)`, saturating.
pub fn ball_count(q: u32, radius: u32) -> u128 {
    if radius == 0 {
        return 1;
    }
    let mut qr: u128 = 1;
    for _ in 0..radius {
        qr = qr.saturating_mul(q as u128);
    }
    1u128.saturating_add((q as u128 + 1).saturating_mul(qr - 1) / (q as u128 - 1))
}
