//! Flow measures: positive vertex functions with `μ(x) = Σ_{y∈s(x)} μ(y)`.

use std::sync::Arc;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{invalid, FlowError, Result};
use crate::numeric::{int, pow_i, rational_serde, Rational};
use crate::tree::{TruncatedTree, VertexId};

#[derive(Clone, Debug)]
pub struct FlowMeasure {
    tree: Arc<TruncatedTree>,
    values: Vec<Rational>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DoublingReport {
    pub is_locally_doubling: bool,
    #[serde(with = "rational_serde")]
    pub worst_ratio: Rational,
    pub witness_edge: Option<(VertexId, VertexId)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowCheck {
    pub ok: bool,
    pub first_violation: Option<VertexId>,
}

impl FlowMeasure {
    /// `μ(x) = q^{ℓ(x) − level_bot}` on slabs, `q^{ℓ(x)}` on balls.
    pub fn canonical(tree: Arc<TruncatedTree>) -> Result<Self> {
        let q = tree.q().ok_or_else(|| invalid("canonical flow needs a homogeneous tree"))?;
        let base = int(q as i64);
        let shift = if tree.is_slab() { tree.level_bot() } else { 0 };
        let values = tree.ids().map(|x| pow_i(&base, tree.level(x) - shift)).collect();
        Ok(FlowMeasure { tree, values })
    }

    /// Aggregates bottom values upward. `bottom` is indexed like
    /// [`TruncatedTree::bottom_vertices`].
    pub fn from_bottom(tree: Arc<TruncatedTree>, bottom: &[Rational]) -> Result<Self> {
        if !tree.is_slab() {
            return Err(invalid("flow_from_bottom needs a slab"));
        }
        let leaves = tree.bottom_vertices();
        if leaves.len() != bottom.len() {
            return Err(invalid(format!("{} bottom vertices, {} values", leaves.len(), bottom.len())));
        }
        let mut values = vec![Rational::zero(); tree.len()];
        for (x, v) in leaves.iter().zip(bottom) {
            if *v <= Rational::zero() {
                return Err(invalid(format!("bottom value at vertex {x} is not positive: {v}")));
            }
            values[x.idx()] = v.clone();
        }
        for x in tree.ids_by_level_ascending() {
            if !tree.succ(x).is_empty() {
                let s = tree.succ(x).iter().fold(Rational::zero(), |acc, c| acc + &values[c.idx()]);
                values[x.idx()] = s;
            }
        }
        Ok(FlowMeasure { tree, values })
    }

    /// Accepts an arbitrary positive vertex map only if the flow condition holds.
    pub fn from_values(tree: Arc<TruncatedTree>, values: Vec<Rational>) -> Result<Self> {
        if values.len() != tree.len() {
            return Err(invalid(format!("{} vertices, {} values", tree.len(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| *v <= Rational::zero()) {
            return Err(invalid(format!("value at vertex {i} is not positive")));
        }
        let m = FlowMeasure { tree, values };
        match m.validate().first_violation {
            Some(x) => Err(FlowError::FlowViolation(x)),
            None => Ok(m),
        }
    }

    /// Builds without validation; callers use [`FlowMeasure::validate`] to inspect.
    pub fn from_values_unchecked(tree: Arc<TruncatedTree>, values: Vec<Rational>) -> Self {
        FlowMeasure { tree, values }
    }

    pub fn tree(&self) -> &Arc<TruncatedTree> {
        &self.tree
    }

    #[inline]
    pub fn value(&self, x: VertexId) -> &Rational {
        &self.values[x.idx()]
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    /// Checks the flow condition exactly at every vertex with a full successor set.
    pub fn validate(&self) -> FlowCheck {
        let t = &self.tree;
        for x in t.ids() {
            if t.has_full_succ(x) && !t.succ(x).is_empty() {
                let s = t.succ(x).iter().fold(Rational::zero(), |acc, c| acc + &self.values[c.idx()]);
                if s != self.values[x.idx()] {
                    return FlowCheck { ok: false, first_violation: Some(x) };
                }
            }
        }
        FlowCheck { ok: true, first_violation: None }
    }

    pub fn set_measure(&self, set: &[VertexId]) -> Rational {
        set.iter().fold(Rational::zero(), |acc, x| acc + &self.values[x.idx()])
    }

    /// Largest parent/child mass ratio; locally doubling iff it is at most `threshold`.
    pub fn doubling_report(&self, threshold: &Rational) -> DoublingReport {
        let t = &self.tree;
        let mut worst = Rational::one();
        let mut witness = None;
        for x in t.ids() {
            for &c in t.succ(x) {
                let r = &self.values[x.idx()] / &self.values[c.idx()];
                if r > worst || witness.is_none() {
                    worst = r;
                    witness = Some((x, c));
                }
            }
        }
        DoublingReport { is_locally_doubling: &worst <= threshold, worst_ratio: worst, witness_edge: witness }
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.values.iter().map(|v| v.to_string()).collect()
    }
}
