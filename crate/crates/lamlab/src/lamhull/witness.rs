//! Witness trees: exact convex decompositions certifying a lamination
//! level.
//!
//! If the zero matrix has lamination level `L`, it can be written as a
//! binary tree of rank-one convex splits: the root value `0` splits along
//! some axis into two endpoints of a maximal segment of the previous
//! iterate, those endpoints split again, and so on down to points of the
//! original set. The tree is extracted by walking the hull tower backwards
//! through box provenance, and every split is exact rational arithmetic, so
//! the decomposition can be re-verified bottom-up.
//!
//! Two structural facts the field constructions rely on are automatic here.
//! Each non-root split's direction differs from its parent's: the child is
//! an *endpoint* of its parent's maximal segment, so it cannot be interior
//! to a segment of the same direction one iterate down (that segment would
//! extend the parent's). And every split is strict (`λ ∈ (0, 1)`,
//! endpoints distinct), because the split value would otherwise already
//! belong to the previous iterate, contradicting minimality of its level.

use serde_json::{json, Value};

use crate::matgeom::{convex_combination, Axis, DiagMatQ};
use crate::{Error, Result};

use super::boxset::{lamination_tower, maximal_interval, BoxOrigin, BoxSet, Rat};
use super::coord::rat_to_json;

/// One node of a witness tree. A `Split` satisfies
/// `value = λ · left.value + (1 − λ) · right.value` with the two child
/// values differing only in the `dir` entry, ordered so that `left` carries
/// the smaller one.
#[derive(Debug, Clone, PartialEq)]
pub enum WitnessNode {
    Leaf {
        value: DiagMatQ,
    },
    Split {
        value: DiagMatQ,
        lambda: Rat,
        dir: Axis,
        left: Box<WitnessNode>,
        right: Box<WitnessNode>,
    },
}

/// Shape of the top of a witness tree; this is what the finite-element
/// constructions dispatch on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopConfig {
    /// Level 0: the zero matrix belongs to the set itself.
    Member,
    /// Level 1: a single split between two points of the set.
    Segment,
    /// Level ≥ 2 with both root children composite: the cell construction
    /// places one sub-laminate in each quadrant of a rectangle.
    Quad,
    /// Level ≥ 2 with exactly one root child a point of the set: the cell
    /// construction is built on a half-plane and folded across its edge.
    Fold,
}

impl TopConfig {
    pub fn label(self) -> &'static str {
        match self {
            TopConfig::Member => "member",
            TopConfig::Segment => "segment",
            TopConfig::Quad => "quad",
            TopConfig::Fold => "fold",
        }
    }
}

/// A verified-extractable decomposition of the zero matrix over a set.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessTree {
    pub root: WitnessNode,
    pub level: u32,
    pub config: TopConfig,
}

impl WitnessNode {
    pub fn value(&self) -> &DiagMatQ {
        match self {
            WitnessNode::Leaf { value } | WitnessNode::Split { value, .. } => value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, WitnessNode::Leaf { .. })
    }

    pub fn depth(&self) -> u32 {
        match self {
            WitnessNode::Leaf { .. } => 0,
            WitnessNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// All leaf values, left to right (with repetitions).
    pub fn leaves(&self) -> Vec<&DiagMatQ> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a DiagMatQ>) {
        match self {
            WitnessNode::Leaf { value } => out.push(value),
            WitnessNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Re-verify the decomposition bottom-up with exact arithmetic: every
    /// split must be a strict rank-one convex combination along its axis,
    /// with children ordered by the split coordinate.
    pub fn verify(&self) -> Result<()> {
        let WitnessNode::Split { value, lambda, dir, left, right } = self else {
            return Ok(());
        };
        let (f, g) = (left.value(), right.value());
        if f.entry(dir.other()) != g.entry(dir.other()) {
            return Err(Error::Provenance(format!(
                "split children ({}, {}) and ({}, {}) are not rank-one compatible along E{}",
                f.d1, f.d2, g.d1, g.d2, dir.label()
            )));
        }
        if f.entry(*dir) >= g.entry(*dir) {
            return Err(Error::Provenance(format!(
                "split children out of order along E{}: {} vs {}",
                dir.label(),
                f.entry(*dir),
                g.entry(*dir)
            )));
        }
        let zero = Rat::from_integer(0.into());
        let one = Rat::from_integer(1.into());
        if *lambda <= zero || *lambda >= one {
            return Err(Error::Provenance(format!("split weight {lambda} not strictly inside (0, 1)")));
        }
        if &convex_combination(f, g, lambda) != value {
            return Err(Error::Provenance(format!(
                "split value ({}, {}) does not equal the weighted combination of its children",
                value.d1, value.d2
            )));
        }
        left.verify()?;
        right.verify()
    }

    fn to_json(&self) -> Value {
        match self {
            WitnessNode::Leaf { value } => json!({
                "value": [rat_to_json(&value.d1), rat_to_json(&value.d2)],
            }),
            WitnessNode::Split { value, lambda, dir, left, right } => json!({
                "value": [rat_to_json(&value.d1), rat_to_json(&value.d2)],
                "lambda": rat_to_json(lambda),
                "dir": format!("E{}", dir.label()),
                "left": left.to_json(),
                "right": right.to_json(),
            }),
        }
    }
}

impl WitnessTree {
    /// Distinct leaf values, sorted.
    pub fn unique_leaves(&self) -> Vec<DiagMatQ> {
        let mut leaves: Vec<DiagMatQ> = self.root.leaves().into_iter().cloned().collect();
        leaves.sort_by(|a, b| (&a.d1, &a.d2).cmp(&(&b.d1, &b.d2)));
        leaves.dedup();
        leaves
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaves().len()
    }

    pub fn verify(&self) -> Result<()> {
        self.root.verify()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "level": self.level,
            "config": self.config.label(),
            "leaf_count": self.leaf_count(),
            "root": self.root.to_json(),
        })
    }
}

fn min_level(p: &DiagMatQ, tower: &[BoxSet]) -> Option<usize> {
    tower.iter().position(|s| s.contains(p))
}

fn resolve(p: &DiagMatQ, j: usize, tower: &[BoxSet]) -> Result<WitnessNode> {
    if j == 0 {
        return Ok(WitnessNode::Leaf { value: p.clone() });
    }
    let cur = &tower[j];
    let prev = &tower[j - 1];
    // The first generated box (in sorted order) containing p fixes the
    // split direction deterministically. Boxes carried from the previous
    // iterate cannot contain p — p's level would not be minimal.
    let dir = cur
        .boxes()
        .iter()
        .zip(cur.origins())
        .find_map(|(b, o)| match o {
            BoxOrigin::Generated { dir, .. } if b.contains_point(p) => Some(*dir),
            _ => None,
        })
        .ok_or_else(|| {
            Error::Provenance(format!(
                "no generated box of iterate {j} contains ({}, {})",
                p.d1, p.d2
            ))
        })?;
    let (f, g) = maximal_interval(p, dir, prev)?;
    let (fa, ga, c) = (f.entry(dir), g.entry(dir), p.entry(dir));
    if c <= fa || c >= ga {
        // Would place p in the previous iterate (or outside its own box).
        return Err(Error::Provenance(format!(
            "split value ({}, {}) is not interior to its maximal segment at iterate {j}",
            p.d1, p.d2
        )));
    }
    let lambda = (ga - c) / (ga - fa);
    let jf = min_level(&f, tower)
        .filter(|&l| l < j)
        .ok_or_else(|| Error::Provenance("segment endpoint missing from earlier iterates".into()))?;
    let jg = min_level(&g, tower)
        .filter(|&l| l < j)
        .ok_or_else(|| Error::Provenance("segment endpoint missing from earlier iterates".into()))?;
    let left = resolve(&f, jf, tower)?;
    let right = resolve(&g, jg, tower)?;
    Ok(WitnessNode::Split {
        value: p.clone(),
        lambda,
        dir,
        left: Box::new(left),
        right: Box::new(right),
    })
}

/// Extract a witness tree for the zero matrix over `k`, iterating at most
/// `cap` times.
pub fn extract_witness(k: &BoxSet, cap: u32) -> Result<WitnessTree> {
    let zero = DiagMatQ::zero();
    let tower = lamination_tower(k, cap);
    let Some(level) = tower.iter().position(|s| s.contains(&zero)) else {
        return Err(Error::LevelExceedsCap { cap });
    };
    let root = resolve(&zero, level, &tower)?;
    let config = match &root {
        WitnessNode::Leaf { .. } => TopConfig::Member,
        WitnessNode::Split { left, right, .. } => match (left.is_leaf(), right.is_leaf()) {
            (true, true) => TopConfig::Segment,
            (false, false) => TopConfig::Quad,
            _ => TopConfig::Fold,
        },
    };
    debug_assert!(matches!(config, TopConfig::Member) == (level == 0));
    debug_assert!(matches!(config, TopConfig::Segment) == (level == 1));
    Ok(WitnessTree { root, level: level as u32, config })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamhull::boxset::{lamination_hull, Box2, Interval};
    use crate::lamhull::staircase::staircase;
    use num::{BigInt, BigRational};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn q(n: i64, d: i64) -> Rat {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn pt(x: i64, y: i64) -> DiagMatQ {
        DiagMatQ::new(q(x, 1), q(y, 1))
    }

    #[test]
    fn vertical_pair_gives_a_balanced_segment_split() {
        let k = BoxSet::from_points(&[pt(0, -1), pt(0, 1)]);
        let w = extract_witness(&k, 16).unwrap();
        assert_eq!(w.level, 1);
        assert_eq!(w.config, TopConfig::Segment);
        w.verify().unwrap();
        let WitnessNode::Split { lambda, dir, .. } = &w.root else {
            panic!("expected a split at the root")
        };
        assert_eq!(*dir, Axis::E2);
        assert_eq!(*lambda, q(1, 2));
        assert_eq!(w.unique_leaves(), vec![pt(0, -1), pt(0, 1)]);
    }

    #[test]
    fn four_corners_give_a_quad_tree_with_all_corners_as_leaves() {
        let k = BoxSet::from_points(&[pt(1, 1), pt(1, -1), pt(-1, 1), pt(-1, -1)]);
        let w = extract_witness(&k, 16).unwrap();
        assert_eq!(w.level, 2);
        assert_eq!(w.config, TopConfig::Quad);
        assert_eq!(w.root.depth(), 2);
        assert_eq!(w.leaf_count(), 4);
        w.verify().unwrap();
        assert_eq!(
            w.unique_leaves(),
            vec![pt(-1, -1), pt(-1, 1), pt(1, -1), pt(1, 1)]
        );
    }

    #[test]
    fn staircase_three_folds_with_one_terminal_at_the_root() {
        let k = staircase(3).unwrap();
        let w = extract_witness(&k, 16).unwrap();
        assert_eq!(w.level, 3);
        assert_eq!(w.config, TopConfig::Fold);
        w.verify().unwrap();
        // Every original point appears as a leaf.
        assert_eq!(w.unique_leaves().len(), 4);
        for leaf in w.unique_leaves() {
            assert!(k.contains(&leaf));
        }
    }

    #[test]
    fn member_and_unreachable_cases() {
        let k = BoxSet::from_points(&[pt(0, 0), pt(2, 3)]);
        let w = extract_witness(&k, 16).unwrap();
        assert_eq!(w.level, 0);
        assert_eq!(w.config, TopConfig::Member);
        assert!(w.root.is_leaf());

        let k = BoxSet::from_points(&[pt(1, 1)]);
        assert!(matches!(
            extract_witness(&k, 16),
            Err(Error::LevelExceedsCap { cap: 16 })
        ));
    }

    #[test]
    fn random_witnesses_are_sound() {
        let mut rng = StdRng::seed_from_u64(0x77e5);
        let mut finite = 0;
        for _ in 0..80 {
            let n_boxes = rng.random_range(1..=5);
            let mut boxes = Vec::with_capacity(n_boxes);
            for _ in 0..n_boxes {
                let degenerate = rng.random_bool(0.6);
                let x0 = q(rng.random_range(-8..=8), 2);
                let y0 = q(rng.random_range(-8..=8), 2);
                let (x1, y1) = if degenerate {
                    (x0.clone(), y0.clone())
                } else {
                    (q(rng.random_range(-8..=8), 2), q(rng.random_range(-8..=8), 2))
                };
                boxes.push(Box2::new(Interval::new(x0, x1), Interval::new(y0, y1)));
            }
            let k = BoxSet::from_boxes(boxes);
            let w = match extract_witness(&k, 8) {
                Ok(w) => w,
                Err(Error::LevelExceedsCap { .. }) => continue,
                Err(e) => panic!("unexpected extraction failure: {e}"),
            };
            finite += 1;
            w.verify().unwrap();
            assert_eq!(w.root.value(), &DiagMatQ::zero());
            assert!(w.leaf_count() as u32 <= 2u32.pow(w.level.max(1)));
            let leaves = w.unique_leaves();
            for leaf in &leaves {
                assert!(k.contains(leaf), "leaf outside the original set");
            }
            // The leaves alone must reach zero within the same level.
            let hull = lamination_hull(&BoxSet::from_points(&leaves), w.level);
            assert!(hull.contains(&DiagMatQ::zero()));
        }
        assert!(finite >= 20, "want a healthy share of finite-level cases, got {finite}");
    }
}
