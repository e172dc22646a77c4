//! The envelope cover: a handful of admissible trapezoids with the same root
//! whose union contains the envelope and which overlap each other (and `R`)
//! in sets of comparable measure.

use serde::Serialize;

use super::{Beta, Trapezoid};
use crate::error::{invalid, FlowError, Result};
use crate::numeric::{int, ratio, Rational};
use crate::tree::TruncatedTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverCase {
    /// `h1 >= 3`: pieces `R0, R1, R2, R3`.
    Deep,
    /// `h1 = 1, h2 >= 3` or `h1 = 2`: pieces `R̄0, R̄1, R2, R3`.
    Shallow,
    /// `h1 = 1, h2 = 2`: pieces `R̄0, R̄1`.
    Minimal,
}

/// `μ(a ∩ b) = overlap · μ(x)`, where all pieces share the root `x`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OverlapCertificate {
    pub a: String,
    pub b: String,
    pub overlap: u32,
    /// `μ(a) / μ(a ∩ b)`.
    #[serde(with = "crate::numeric::rational_serde")]
    pub ratio: Rational,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeCover {
    pub trapezoid: Trapezoid,
    pub envelope: Trapezoid,
    pub case_tag: CoverCase,
    pub pieces: Vec<(String, Trapezoid)>,
    pub overlap_certificates: Vec<OverlapCertificate>,
    /// Union of the pieces contains the envelope.
    pub covers: bool,
    pub pieces_admissible: bool,
}

fn overlap(a: &Trapezoid, b: &Trapezoid) -> u32 {
    let lo = a.h1.max(b.h1);
    let hi = a.h2.min(b.h2);
    hi.saturating_sub(lo)
}

// Does the union of [h1, h2) over `pieces` contain [lo, hi)?
fn union_covers(pieces: &[Trapezoid], lo: u32, hi: u32) -> bool {
    let mut iv: Vec<(u32, u32)> = pieces.iter().map(|p| (p.h1, p.h2)).collect();
    iv.sort();
    let mut reach = lo;
    for (a, b) in iv {
        if a > reach {
            break;
        }
        reach = reach.max(b);
    }
    reach >= hi
}

impl EnvelopeCover {
    /// Builds the case-dependent cover of `R̃` for an admissible non-singleton `R`.
    pub fn new(beta: Beta, r: &Trapezoid) -> Result<Self> {
        if r.is_singleton() || !r.is_admissible(beta) {
            return Err(invalid(format!("{r} must be an admissible non-singleton trapezoid")));
        }
        let b = beta.get();
        let (h1, h2) = (r.h1, r.h2);
        let x = r.root;
        let s = h1 + h2;
        let mk = |lo: u32, hi: u32| Trapezoid { root: x, h1: lo, h2: hi };
        let r0 = mk(h1.div_ceil(b), h1);
        let r1 = mk(s.div_ceil(2 * b), s / 2);
        let r2 = mk(s / 2, (s / 2) * b);
        let r3 = mk(s.div_ceil(2) * (b / 2), s.div_ceil(2) * (b / 2) * b);
        let rb0 = mk(1, b);
        let rb1 = mk(b / 2, (b / 2) * b);
        let (case_tag, pieces): (CoverCase, Vec<(&str, Trapezoid)>) = if h1 >= 3 {
            (CoverCase::Deep, vec![("R0", r0), ("R1", r1), ("R2", r2), ("R3", r3)])
        } else if h1 == 1 && h2 == 2 {
            (CoverCase::Minimal, vec![("Rbar0", rb0), ("Rbar1", rb1)])
        } else {
            (CoverCase::Shallow, vec![("Rbar0", rb0), ("Rbar1", rb1), ("R2", r2), ("R3", r3)])
        };
        let pairs: &[(&str, &str)] = match case_tag {
            CoverCase::Deep => &[("R0", "R1"), ("R1", "R"), ("R2", "R"), ("R3", "R2")],
            CoverCase::Shallow => &[("Rbar0", "R"), ("Rbar1", "R2"), ("R2", "R"), ("R3", "R2")],
            CoverCase::Minimal => &[("Rbar0", "R"), ("Rbar1", "Rbar0")],
        };
        let lookup = |name: &str| -> Trapezoid {
            if name == "R" {
                *r
            } else {
                pieces.iter().find(|(n, _)| *n == name).map(|(_, p)| *p).expect("piece name")
            }
        };
        let mut overlap_certificates = Vec::new();
        for (a, bn) in pairs {
            let (pa, pb) = (lookup(a), lookup(bn));
            let ov = overlap(&pa, &pb);
            if ov == 0 {
                return Err(FlowError::Inapplicable(format!("cover pieces {a} and {bn} of {r} are disjoint")));
            }
            overlap_certificates.push(OverlapCertificate {
                a: a.to_string(),
                b: bn.to_string(),
                overlap: ov,
                ratio: ratio(pa.height() as i64, ov as i64),
            });
        }
        let env = r.envelope(beta);
        let traps: Vec<Trapezoid> = pieces.iter().map(|(_, p)| *p).collect();
        Ok(EnvelopeCover {
            trapezoid: *r,
            envelope: env,
            case_tag,
            covers: union_covers(&traps, env.h1, env.h2),
            pieces_admissible: traps.iter().all(|p| p.is_admissible(beta)),
            pieces: pieces.into_iter().map(|(n, p)| (n.to_string(), p)).collect(),
            overlap_certificates,
        })
    }

    pub fn piece(&self, name: &str) -> Option<&Trapezoid> {
        self.pieces.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    /// `μ(R0 ∩ R1) / μ(x)` in the deep case.
    pub fn r0_r1_overlap(&self) -> Option<u32> {
        self.overlap_certificates.iter().find(|c| c.a == "R0" && c.b == "R1").map(|c| c.overlap)
    }

    /// `μ(R0 ∩ R1) >= μ(x) h1 / β` (only meaningful in the deep case).
    pub fn deep_overlap_bound_holds(&self, beta: Beta) -> bool {
        match self.r0_r1_overlap() {
            Some(ov) => int(ov as i64) * int(beta.get() as i64) >= int(self.trapezoid.h1 as i64),
            None => self.case_tag != CoverCase::Deep,
        }
    }

    /// Whether every piece fits the truncation.
    pub fn materialize(&self, t: &TruncatedTree) -> Result<()> {
        for (n, p) in &self.pieces {
            if !p.fits(t) {
                return Err(FlowError::WindowTooSmall(format!("cover piece {n} = {p} of {}", self.trapezoid)));
            }
        }
        Ok(())
    }

    /// Largest `h2` among pieces (window depth needed to materialize).
    pub fn reach(&self) -> u32 {
        self.pieces.iter().map(|(_, p)| p.h2).max().unwrap_or(0)
    }

    /// `μ(a)/μ(a∩b)` for the named pair.
    pub fn ratio(&self, a: &str, b: &str) -> Option<&Rational> {
        self.overlap_certificates.iter().find(|c| c.a == a && c.b == b).map(|c| &c.ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::VertexId;

    fn tr(h1: u32, h2: u32) -> Trapezoid {
        Trapezoid { root: VertexId(0), h1, h2 }
    }

    #[test]
    fn deep_case_pieces() {
        let c = EnvelopeCover::new(Beta::default(), &tr(3, 6)).unwrap();
        assert_eq!(c.case_tag, CoverCase::Deep);
        let hs: Vec<_> = c.pieces.iter().map(|(_, p)| (p.h1, p.h2)).collect();
        assert_eq!(hs, vec![(1, 3), (1, 4), (4, 48), (30, 360)]);
        assert!(c.covers && c.pieces_admissible);
        // μ(R0∩R1) = 2 μ(x) >= μ(x)/4
        assert_eq!(c.r0_r1_overlap(), Some(2));
        assert!(c.deep_overlap_bound_holds(Beta::default()));
    }

    #[test]
    fn minimal_case_pieces() {
        let c = EnvelopeCover::new(Beta::default(), &tr(1, 2)).unwrap();
        assert_eq!(c.case_tag, CoverCase::Minimal);
        let hs: Vec<_> = c.pieces.iter().map(|(_, p)| (p.h1, p.h2)).collect();
        assert_eq!(hs, vec![(1, 12), (6, 72)]);
        assert_eq!(c.envelope, tr(1, 24));
        assert!(c.covers && c.pieces_admissible);
        assert_eq!(c.ratio("Rbar0", "R"), Some(&int(11)));
    }

    #[test]
    fn every_small_case_covers() {
        for b in [12u32, 13, 16, 25] {
            let beta = Beta::new(b).unwrap();
            for h1 in 1..40 {
                for h2 in 2 * h1..=b * h1 {
                    let c = EnvelopeCover::new(beta, &tr(h1, h2)).unwrap();
                    assert!(c.covers, "{b} {h1} {h2}");
                    assert!(c.pieces_admissible, "{b} {h1} {h2}");
                    assert!(c.deep_overlap_bound_holds(beta), "{b} {h1} {h2}");
                }
            }
        }
    }
}
