//! Vaccination functions and the pruning operator.
//!
//! A vaccination function maps time (days) to the immune proportion. Birth
//! `i` of a tree is deleted, together with all of its descendants, when its
//! coupling uniform satisfies `U_i <= alpha(b_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::BranchingTree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VaccinationFunction {
    /// `0` before `t0`, `c` from `t0` on.
    Step { c: f64, t0: f64 },
    /// Vaccination starting at `M` at rate `p0` per day for `tv` days, then
    /// holding the plateau `tv * p0`.
    Ramp {
        #[serde(rename = "M")]
        start: f64,
        tv: f64,
        p0: f64,
    },
    /// Right-continuous step function: `v[i]` on `[t[i], t[i+1])`, `0`
    /// before `t[0]`.
    Piecewise { t: Vec<f64>, v: Vec<f64> },
}

impl VaccinationFunction {
    pub fn step(c: f64, t0: f64) -> Result<Self> {
        let alpha = VaccinationFunction::Step { c, t0 };
        alpha.validate()?;
        Ok(alpha)
    }

    pub fn ramp(start: f64, tv: f64, p0: f64) -> Result<Self> {
        let alpha = VaccinationFunction::Ramp { start, tv, p0 };
        alpha.validate()?;
        Ok(alpha)
    }

    pub fn piecewise(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let alpha = VaccinationFunction::Piecewise { t, v };
        alpha.validate()?;
        Ok(alpha)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAlpha(msg));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        match self {
            VaccinationFunction::Step { c, t0 } => {
                if !unit(*c) {
                    return bad(format!("step coverage {c} not in [0, 1]"));
                }
                if !(*t0 >= 0.0 && t0.is_finite()) {
                    return bad(format!("step start {t0} must be a finite time >= 0"));
                }
            }
            VaccinationFunction::Ramp { start, tv, p0 } => {
                if !(*start >= 0.0 && *tv >= 0.0 && *p0 >= 0.0)
                    || !(start.is_finite() && tv.is_finite() && p0.is_finite())
                {
                    return bad(format!("ramp parameters must be finite and >= 0: M={start} tv={tv} p0={p0}"));
                }
                if tv * p0 > 1.0 + 1e-12 {
                    return bad(format!("ramp plateau tv*p0 = {} exceeds 1", tv * p0));
                }
            }
            VaccinationFunction::Piecewise { t, v } => {
                if t.is_empty() || t.len() != v.len() {
                    return bad("piecewise needs matching, nonempty `t` and `v`".into());
                }
                if !(t[0] >= 0.0) || t.iter().any(|x| !x.is_finite()) {
                    return bad("piecewise breakpoints must be finite and >= 0".into());
                }
                if t.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("piecewise breakpoints must be strictly increasing".into());
                }
                if let Some(x) = v.iter().find(|x| !unit(**x)) {
                    return bad(format!("piecewise value {x} not in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// alpha(t).
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            VaccinationFunction::Step { c, t0 } => {
                if t >= *t0 {
                    *c
                } else {
                    0.0
                }
            }
            VaccinationFunction::Ramp { start, tv, p0 } => {
                if t <= *start {
                    0.0
                } else if t <= start + tv {
                    p0 * (t - start)
                } else {
                    tv * p0
                }
            }
            VaccinationFunction::Piecewise { t: bp, v } => match bp.partition_point(|&b| b <= t) {
                0 => 0.0,
                k => v[k - 1],
            },
        }
    }

    /// lim_{s -> t-} alpha(s), for t > 0.
    fn left_limit(&self, t: f64) -> f64 {
        match self {
            VaccinationFunction::Step { c, t0 } => {
                if t > *t0 {
                    *c
                } else {
                    0.0
                }
            }
            VaccinationFunction::Ramp { .. } => self.eval(t),
            VaccinationFunction::Piecewise { t: bp, v } => match bp.partition_point(|&b| b < t) {
                0 => 0.0,
                k => v[k - 1],
            },
        }
    }

    /// Points where the function may change slope or jump. The function is
    /// affine between consecutive points and constant after the last one.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            VaccinationFunction::Step { t0, .. } => vec![*t0],
            VaccinationFunction::Ramp { start, tv, .. } => vec![*start, start + tv],
            VaccinationFunction::Piecewise { t, .. } => t.clone(),
        }
    }

    /// Long-run coverage, the value held after the last breakpoint.
    pub fn plateau(&self) -> f64 {
        match self {
            VaccinationFunction::Step { c, .. } => *c,
            VaccinationFunction::Ramp { tv, p0, .. } => tv * p0,
            VaccinationFunction::Piecewise { v, .. } => *v.last().unwrap_or(&0.0),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            VaccinationFunction::Step { c, t0 } => format!("step(c={c},t0={t0})"),
            VaccinationFunction::Ramp { start, tv, p0 } => format!("ramp(M={start},tv={tv},p0={p0})"),
            VaccinationFunction::Piecewise { t, v } => format!("piecewise(t={t:?},v={v:?})"),
        }
    }
}

/// `alpha ≺ other`: alpha(t) <= other(t) for every t >= 0.
///
/// Both functions are piecewise affine with finitely many breakpoints, so
/// comparing values and left limits on the union of breakpoints is exact.
pub fn precedes(alpha: &VaccinationFunction, other: &VaccinationFunction) -> bool {
    let mut points = vec![0.0];
    points.extend(alpha.breakpoints());
    points.extend(other.breakpoints());
    points.sort_by(f64::total_cmp);
    points.dedup();
    points.iter().all(|&t| {
        alpha.eval(t) <= other.eval(t) && (t == 0.0 || alpha.left_limit(t) <= other.left_limit(t))
    })
}

/// Births deleted from a tree under one vaccination function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    /// Indexed by individual id; initials are never deleted.
    deleted: Vec<bool>,
    surviving: usize,
}

impl PruneMask {
    /// Mask that keeps every individual of `tree`.
    pub fn empty(tree: &BranchingTree) -> Self {
        PruneMask { deleted: vec![false; tree.individuals().len()], surviving: tree.individuals().len() }
    }

    /// Builds a mask from explicit per-individual flags, closing it under
    /// descendants.
    pub fn from_deleted(tree: &BranchingTree, deleted: &[bool]) -> Result<Self> {
        if deleted.len() != tree.individuals().len() {
            return Err(Error::InvalidTree("mask length differs from tree size".into()));
        }
        if deleted[..tree.initials()].iter().any(|&d| d) {
            return Err(Error::InvalidTree("initial individuals cannot be pruned".into()));
        }
        let mut closed = deleted.to_vec();
        for ind in &tree.individuals()[tree.initials()..] {
            if let Some(p) = ind.parent {
                closed[ind.id] |= closed[p];
            }
        }
        let surviving = closed.iter().filter(|d| !**d).count();
        Ok(PruneMask { deleted: closed, surviving })
    }

    pub fn is_deleted(&self, id: usize) -> bool {
        self.deleted[id]
    }

    pub fn survives(&self, id: usize) -> bool {
        !self.deleted[id]
    }

    pub fn surviving_count(&self) -> usize {
        self.surviving
    }

    /// Deleted births as 1-based birth indices.
    pub fn deleted_births(&self, tree: &BranchingTree) -> Vec<usize> {
        let a = tree.initials();
        (a..self.deleted.len()).filter(|&id| self.deleted[id]).map(|id| id - a + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.deleted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deleted.is_empty()
    }
}

/// Derives the vaccinated process from the tree: birth `i` is deleted iff an
/// ancestor birth is deleted or `U_i <= alpha(b_i)`.
pub fn prune(tree: &BranchingTree, alpha: &VaccinationFunction) -> PruneMask {
    let individuals = tree.individuals();
    let mut deleted = vec![false; individuals.len()];
    let mut surviving = tree.initials();
    for ind in &individuals[tree.initials()..] {
        let parent = ind.parent.expect("non-initial individuals have parents");
        let u = ind.coupling_uniform.expect("births carry coupling uniforms");
        let gone = deleted[parent] || u <= alpha.eval(ind.birth_time);
        deleted[ind.id] = gone;
        if !gone {
            surviving += 1;
        }
    }
    PruneMask { deleted, surviving }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reproduction::{LifetimeLaw, OffspringLaw, Placement, ReproductionLaw};
    use crate::tree::{simulate_tree, SimCaps};
    use proptest::prelude::*;

    fn chain() -> BranchingTree {
        let law = ReproductionLaw {
            lifetime: LifetimeLaw::Fixed { value: 2.0 },
            offspring: Some(OffspringLaw::Fixed { count: 1 }),
            placement: Placement::AtDeath,
        };
        let mut tree = simulate_tree(&law, 1, SimCaps::new(7.0, 100).unwrap(), 0).unwrap();
        for (i, u) in [0.5, 0.9, 0.2].into_iter().enumerate() {
            tree.set_coupling_uniform(i + 1, u).unwrap();
        }
        tree
    }

    #[test]
    fn ramp_values() {
        let r = VaccinationFunction::ramp(2.0, 5.0, 0.1).unwrap();
        assert!((r.eval(4.0) - 0.2).abs() < 1e-15);
        assert!((r.eval(100.0) - 0.5).abs() < 1e-15);
        assert_eq!(r.eval(2.0), 0.0);
        assert_eq!(r.eval(0.0), 0.0);
        assert!(VaccinationFunction::ramp(0.0, 11.0, 0.1).is_err());
    }

    #[test]
    fn step_is_right_continuous() {
        let s = VaccinationFunction::step(0.6, 0.0).unwrap();
        for t in [0.0, 1.0, 1e6] {
            assert_eq!(s.eval(t), 0.6);
        }
        let s = VaccinationFunction::step(0.6, 3.0).unwrap();
        assert_eq!(s.eval(2.999), 0.0);
        assert_eq!(s.eval(3.0), 0.6);
        let p = VaccinationFunction::piecewise(vec![1.0, 4.0], vec![0.3, 0.1]).unwrap();
        assert_eq!(p.eval(0.5), 0.0);
        assert_eq!(p.eval(1.0), 0.3);
        assert_eq!(p.eval(3.9), 0.3);
        assert_eq!(p.eval(4.0), 0.1);
    }

    #[test]
    fn invalid_functions() {
        assert!(VaccinationFunction::step(1.2, 0.0).is_err());
        assert!(VaccinationFunction::step(0.5, -1.0).is_err());
        assert!(VaccinationFunction::piecewise(vec![2.0, 1.0], vec![0.1, 0.2]).is_err());
        assert!(VaccinationFunction::piecewise(vec![1.0], vec![0.1, 0.2]).is_err());
        assert!(VaccinationFunction::piecewise(vec![1.0], vec![1.5]).is_err());
    }

    #[test]
    fn precedence_examples() {
        let s = |c| VaccinationFunction::step(c, 0.0).unwrap();
        assert!(precedes(&s(0.3), &s(0.6)));
        assert!(!precedes(&s(0.6), &s(0.3)));
        let r = |p0| VaccinationFunction::ramp(0.0, 5.0, p0).unwrap();
        assert!(precedes(&r(0.1), &r(0.2)));
        assert!(!precedes(&r(0.2), &r(0.1)));
        // a later step is dominated even with a higher level only if levels allow it
        let late = VaccinationFunction::step(0.5, 3.0).unwrap();
        assert!(precedes(&late, &s(0.5)));
        assert!(!precedes(&s(0.5), &late));
        // a ramp crossing a step: neither dominates
        let ramp = VaccinationFunction::ramp(0.0, 10.0, 0.1).unwrap();
        assert!(!precedes(&ramp, &s(0.5)));
        assert!(!precedes(&s(0.5), &ramp));
        // a jump that only violates through the left limit
        let a = VaccinationFunction::piecewise(vec![0.0, 2.0], vec![0.5, 0.0]).unwrap();
        let b = VaccinationFunction::ramp(0.0, 2.0, 0.25).unwrap();
        assert!(!precedes(&a, &b));
    }

    #[test]
    fn prune_examples() {
        let tree = chain();
        let none = prune(&tree, &VaccinationFunction::step(0.0, 0.0).unwrap());
        assert_eq!(none.surviving_count(), 4);
        assert!(none.deleted_births(&tree).is_empty());

        let all = prune(&tree, &VaccinationFunction::step(1.0, 0.0).unwrap());
        assert_eq!(all.surviving_count(), 1);
        assert_eq!(all.deleted_births(&tree), vec![1, 2, 3]);

        let mask = prune(&tree, &VaccinationFunction::step(0.6, 0.0).unwrap());
        assert_eq!(mask.deleted_births(&tree), vec![1, 2, 3]);

        // only U_3 = 0.2 falls at or below 0.4
        let mask = prune(&tree, &VaccinationFunction::step(0.4, 0.0).unwrap());
        assert_eq!(mask.deleted_births(&tree), vec![3]);
    }

    #[test]
    fn boundary_deletes_on_equality() {
        let tree = chain();
        let mask = prune(&tree, &VaccinationFunction::step(0.5, 0.0).unwrap());
        assert!(mask.is_deleted(1));
    }

    fn arb_alpha() -> impl Strategy<Value = VaccinationFunction> {
        prop_oneof![
            (0.0..=1.0f64, 0.0..20.0f64).prop_map(|(c, t0)| VaccinationFunction::Step { c, t0 }),
            (0.0..20.0f64, 0.0..0.2f64, 0.0..30.0f64).prop_map(|(start, p0, tv)| {
                let tv = if p0 > 0.0 { tv.min(1.0 / p0) } else { tv };
                VaccinationFunction::Ramp { start, tv, p0 }
            }),
            proptest::collection::vec((0.1..5.0f64, 0.0..=1.0f64), 1..5).prop_map(|steps| {
                let mut t = Vec::new();
                let mut acc = 0.0;
                for (dt, _) in &steps {
                    acc += dt;
                    t.push(acc);
                }
                VaccinationFunction::Piecewise { t, v: steps.into_iter().map(|s| s.1).collect() }
            }),
        ]
    }

    proptest! {
        #[test]
        fn precedes_implies_pointwise_domination(a in arb_alpha(), b in arb_alpha(),
                                                 ts in proptest::collection::vec(0.0..60.0f64, 50)) {
            if precedes(&a, &b) {
                for t in ts {
                    prop_assert!(a.eval(t) <= b.eval(t));
                }
            }
            prop_assert!(precedes(&a, &a));
        }

        #[test]
        fn pruning_is_nested(seed in 0u64..10_000, a in arb_alpha(), b in arb_alpha()) {
            let law = ReproductionLaw::bellman_harris(4.0, 3.0, 1.3);
            let tree = simulate_tree(&law, 2, SimCaps::new(25.0, 2_000).unwrap(), seed).unwrap();
            let (lo, hi) = if precedes(&a, &b) { (a, b) } else if precedes(&b, &a) { (b, a) } else {
                let c = VaccinationFunction::Step { c: 1.0, t0: 0.0 };
                (a, c)
            };
            let small = prune(&tree, &lo);
            let big = prune(&tree, &hi);
            for id in 0..tree.individuals().len() {
                prop_assert!(!small.is_deleted(id) || big.is_deleted(id));
            }
            // survivors form a subtree containing the initials
            for ind in tree.individuals() {
                if big.survives(ind.id) {
                    if let Some(p) = ind.parent { prop_assert!(big.survives(p)); }
                }
            }
            prop_assert_eq!(prune(&tree, &hi), big);
        }
    }
}
