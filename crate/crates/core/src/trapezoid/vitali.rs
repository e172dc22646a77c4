use serde::Serialize;

use super::{intersects, is_subset, Beta, Trapezoid};
use crate::measure::FlowMeasure;

#[derive(Clone, Debug, Serialize)]
pub struct VitaliOutcome {
    pub selected: Vec<Trapezoid>,
    /// For each input trapezoid, the selected one whose envelope contains it
    /// (`None` would falsify the covering guarantee).
    pub covered_by: Vec<(Trapezoid, Option<Trapezoid>)>,
}

impl VitaliOutcome {
    pub fn all_covered(&self) -> bool {
        self.covered_by.iter().all(|(_, c)| c.is_some())
    }
}

/// Greedy disjoint selection by decreasing root mass. Ties go to the lower
/// root index first, then to the smaller `(h1, h2)`.
pub fn vitali_select(beta: Beta, m: &FlowMeasure, family: &[Trapezoid]) -> VitaliOutcome {
    let t = m.tree();
    let mut order: Vec<&Trapezoid> = family.iter().collect();
    order.sort_by(|a, b| m.value(b.root).cmp(m.value(a.root)).then(a.cmp(b)));
    let mut selected: Vec<Trapezoid> = Vec::new();
    for r in order {
        if selected.iter().all(|s| !intersects(t, s, r)) {
            selected.push(*r);
        }
    }
    let covered_by = family
        .iter()
        .map(|r| {
            let c = selected.iter().find(|s| is_subset(t, r, &s.envelope(beta))).copied();
            (*r, c)
        })
        .collect();
    VitaliOutcome { selected, covered_by }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TruncatedTree;
    use std::sync::Arc;

    #[test]
    fn nested_and_disjoint() {
        let t = Arc::new(TruncatedTree::homogeneous_slab(2, 6, 0).unwrap());
        let m = FlowMeasure::canonical(t.clone()).unwrap();
        let beta = Beta::default();
        let x = t.top();
        let big = Trapezoid { root: x, h1: 1, h2: 4 };
        let small = Trapezoid { root: t.succ(x)[0], h1: 1, h2: 2 };
        let out = vitali_select(beta, &m, &[small, big]);
        assert_eq!(out.selected, vec![big]);
        assert!(out.all_covered());

        let single = vitali_select(beta, &m, &[small]);
        assert_eq!(single.selected, vec![small]);

        let a = Trapezoid { root: t.succ(x)[0], h1: 1, h2: 3 };
        let b = Trapezoid { root: t.succ(x)[1], h1: 1, h2: 3 };
        let out = vitali_select(beta, &m, &[a, b]);
        assert_eq!(out.selected.len(), 2);
    }
}
