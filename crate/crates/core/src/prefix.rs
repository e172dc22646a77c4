//! Trapezoid prefix sums `G(x,h) = Σ_{y<=x, d(x,y)<h} a(y)`.
//!
//! Built bottom-up with `G(x,h) = a(x) + Σ_{c∈s(x)} G(c,h−1)`, so any
//! trapezoid sum is `G(x,h2) − G(x,h1)`. Rows are stored only up to the fit
//! height of each vertex. Above a memory budget the table is not built and
//! sums are evaluated on demand by walking the cone.

use rayon::prelude::*;

use crate::numeric::Accum;
use crate::trapezoid::Trapezoid;
use crate::tree::{TruncatedTree, VertexId};

pub const DEFAULT_ENTRY_CAP: usize = 40_000_000;

pub struct PrefixSums<'t, A> {
    tree: &'t TruncatedTree,
    vals: Vec<A>,
    rows: Option<Vec<Vec<A>>>,
}

impl<'t, A: Accum> PrefixSums<'t, A> {
    pub fn new(tree: &'t TruncatedTree, vals: Vec<A>) -> Self {
        Self::with_cap(tree, vals, DEFAULT_ENTRY_CAP)
    }

    pub fn with_cap(tree: &'t TruncatedTree, vals: Vec<A>, cap: usize) -> Self {
        assert_eq!(vals.len(), tree.len());
        let entries: usize = tree.ids().map(|x| tree.fit_height(x) as usize + 1).sum();
        let rows = (entries <= cap).then(|| build_rows(tree, &vals));
        PrefixSums { tree, vals, rows }
    }

    pub fn is_tabulated(&self) -> bool {
        self.rows.is_some()
    }

    pub fn value(&self, x: VertexId) -> &A {
        &self.vals[x.idx()]
    }

    /// `G(x, h)` for `h <= fit_height(x)`.
    pub fn g(&self, x: VertexId, h: u32) -> A {
        match &self.rows {
            Some(rows) => rows[x.idx()][h as usize].clone(),
            None => self.walk(x, 0, h),
        }
    }

    /// Sum of `a` over the trapezoid, which must fit the truncation.
    pub fn sum(&self, r: &Trapezoid) -> A {
        match &self.rows {
            Some(rows) => {
                let row = &rows[r.root.idx()];
                row[r.h2 as usize].diff(&row[r.h1 as usize])
            }
            None => self.walk(r.root, r.h1, r.h2),
        }
    }

    fn walk(&self, x: VertexId, h1: u32, h2: u32) -> A {
        let mut acc = A::empty();
        let mut stack = vec![(x, 0u32)];
        while let Some((v, d)) = stack.pop() {
            if d >= h1 {
                acc.acc(&self.vals[v.idx()]);
            }
            if d + 1 < h2 {
                for &c in self.tree.succ(v) {
                    stack.push((c, d + 1));
                }
            }
        }
        acc
    }
}

fn build_rows<A: Accum>(t: &TruncatedTree, vals: &[A]) -> Vec<Vec<A>> {
    let mut rows: Vec<Vec<A>> = vec![Vec::new(); t.len()];
    // group by level, lowest first; a level only reads rows of the level below
    let order = t.ids_by_level_ascending();
    let mut start = 0;
    while start < order.len() {
        let lvl = t.level(order[start]);
        let mut end = start;
        while end < order.len() && t.level(order[end]) == lvl {
            end += 1;
        }
        let group = &order[start..end];
        let built: Vec<Vec<A>> = {
            let rows_ref = &rows;
            let make = |&x: &VertexId| {
                let h = t.fit_height(x) as usize;
                let mut row = Vec::with_capacity(h + 1);
                row.push(A::empty());
                for k in 1..=h {
                    let mut acc = vals[x.idx()].clone();
                    if k > 1 {
                        for c in t.succ(x) {
                            acc.acc(&rows_ref[c.idx()][k - 1]);
                        }
                    }
                    row.push(acc);
                }
                row
            };
            if group.len() >= 512 {
                group.par_iter().map(make).collect()
            } else {
                group.iter().map(make).collect()
            }
        };
        for (x, row) in group.iter().zip(built) {
            rows[x.idx()] = row;
        }
        start = end;
    }
    rows
}
