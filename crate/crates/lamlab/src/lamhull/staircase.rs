//! Staircase point families: `n + 1` points whose lamination level is
//! exactly `n`.
//!
//! The family is built as a zigzag chain. Start from the vertical pair
//! `{(0, -1), (0, 1)}` (level 1). Each further step replaces the current
//! "active" endpoint by two new points on an axis-parallel segment through
//! it — horizontal on odd steps, vertical on even steps — so resolving the
//! zero matrix needs one more iteration each time: the *inner* new point is
//! a terminal of the chain and the *outer* one becomes the next active
//! endpoint, one integer step further left (odd) or up (even).
//!
//! Two placement rules keep the level from collapsing. Inner coordinates
//! are chosen *fresh* (sharing no axis value with any existing point), or
//! an unintended pair would become rank-one compatible. And each inner
//! point stays strictly inside the gap between the chain's current and
//! previous column (odd steps) resp. level (even steps): the segment it
//! spans with the outer point then crosses exactly one earlier chain line,
//! so the hull tower unrolls the chain one step per iteration instead of
//! skipping ahead. (Taking the inner bound from further back fails: the
//! segment would reach across an older terminal's line and hand it a
//! shortcut.) Inner points take the first fresh dyadic in their gap
//! (midpoint first, then halves, quarters, … in ascending order); outer
//! points take the first fresh integer marching outward.
//!
//! The exact level is re-verified at construction time, so a returned set
//! is guaranteed correct by direct computation, not by the chain argument
//! alone.

use num::{BigInt, BigRational};

use crate::matgeom::{DiagMat, DiagMatQ};
use crate::{Error, Result};

use super::boxset::{lamination_level, BoxSet, Level, Rat};

/// Largest supported staircase size. The construction itself scales
/// further, but levels are re-verified by computing the full hull tower,
/// which is what this bound keeps cheap.
pub const MAX_STAIRCASE_N: u32 = 20;

fn int(v: i64) -> Rat {
    BigRational::from_integer(BigInt::from(v))
}

fn is_fresh(v: &Rat, taken: &[Rat]) -> bool {
    taken.iter().all(|t| t != v)
}

/// First fresh dyadic rational in the open interval `(lo, hi)`: the
/// midpoint, then denominators 2, 4, 8, … with ascending numerators.
fn first_fresh_dyadic(lo: &Rat, hi: &Rat, taken: &[Rat]) -> Rat {
    debug_assert!(lo < hi);
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let mid = (lo + hi) * &half;
    if is_fresh(&mid, taken) {
        return mid;
    }
    let mut denom = BigInt::from(2);
    for _ in 0..64 {
        let d = BigRational::from_integer(denom.clone());
        let mut k: BigInt = (lo * &d).floor().to_integer() + 1;
        let k_hi = (hi * &d).ceil().to_integer() - 1;
        while k <= k_hi {
            let v = BigRational::new(k.clone(), denom.clone());
            if &v > lo && &v < hi && is_fresh(&v, taken) {
                return v;
            }
            k += 1;
        }
        denom *= 2;
    }
    unreachable!("no fresh dyadic in ({lo}, {hi})");
}

/// First fresh integer at or below `start` (`step = -1`) or at or above it
/// (`step = +1`).
fn first_fresh_int(start: BigInt, step: i64, taken: &[Rat]) -> Rat {
    let mut k = start;
    loop {
        let v = BigRational::from_integer(k.clone());
        if is_fresh(&v, taken) {
            return v;
        }
        k += step;
    }
}

/// The `n + 1`-point staircase of lamination level exactly `n`, `1 ≤ n ≤`
/// [`MAX_STAIRCASE_N`].
pub fn staircase(n: u32) -> Result<BoxSet> {
    if n < 1 || n > MAX_STAIRCASE_N {
        return Err(Error::Parameter(format!(
            "staircase size must be between 1 and {MAX_STAIRCASE_N}, got {n}"
        )));
    }
    let mut terminals: Vec<DiagMatQ> = vec![DiagMat::new(int(0), int(-1))];
    let mut active = DiagMat::new(int(0), int(1));
    // The chain line one step back in each direction: the column the chain
    // occupied before the last horizontal move, and the level it occupied
    // before the last vertical move. Inner points must stay strictly inside
    // the gap between the active coordinate and this rail.
    let mut prev_col = int(0);
    let mut prev_level = int(-1);

    for s in 1..n {
        let taken_x: Vec<Rat> = terminals.iter().map(|p| p.d1.clone()).collect();
        let taken_y: Vec<Rat> = terminals.iter().map(|p| p.d2.clone()).collect();
        if s % 2 == 1 {
            // Horizontal split through the active point: inner to the
            // right, short of the previous column; outer marches left.
            let x_in = if s == 1 {
                int(1)
            } else {
                first_fresh_dyadic(&active.d1, &prev_col, &taken_x)
            };
            let x_out = first_fresh_int(active.d1.to_integer() - 1, -1, &taken_x);
            terminals.push(DiagMat::new(x_in, active.d2.clone()));
            prev_col = active.d1.clone();
            active = DiagMat::new(x_out, active.d2.clone());
        } else {
            // Vertical split: inner below, short of the previous level;
            // outer marches up.
            let y_in = first_fresh_dyadic(&prev_level, &active.d2, &taken_y);
            let y_out = first_fresh_int(active.d2.to_integer() + 1, 1, &taken_y);
            terminals.push(DiagMat::new(active.d1.clone(), y_in));
            prev_level = active.d2.clone();
            active = DiagMat::new(active.d1.clone(), y_out);
        }
    }
    terminals.push(active);

    let set = BoxSet::from_points(&terminals);
    debug_assert_eq!(set.len() as u32, n + 1);
    // Re-verify the defining property by direct hull computation.
    let level = lamination_level(&set, n);
    assert!(
        level == Level::Finite(n),
        "staircase construction invariant violated for n = {n}: got {level:?}"
    );
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamhull::oracle::{faithful_lattice_denom, oracle_level};

    fn q(n: i64, d: i64) -> Rat {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn points_of(s: &BoxSet) -> Vec<(Rat, Rat)> {
        s.boxes().iter().map(|b| {
            let p = b.as_point().expect("staircase sets are point sets");
            (p.d1, p.d2)
        }).collect()
    }

    #[test]
    fn small_staircases_are_the_expected_point_sets() {
        // Frozen by hand from the zigzag rules: midpoints of unit gaps are
        // always fresh here, so the inner points land on half-integers.
        let expect: [&[(i64, i64, i64, i64)]; 5] = [
            &[(0, 1, -1, 1), (0, 1, 1, 1)],
            &[(-1, 1, 1, 1), (0, 1, -1, 1), (1, 1, 1, 1)],
            &[(-1, 1, 0, 1), (-1, 1, 2, 1), (0, 1, -1, 1), (1, 1, 1, 1)],
            &[(-2, 1, 2, 1), (-1, 1, 0, 1), (-1, 2, 2, 1), (0, 1, -1, 1), (1, 1, 1, 1)],
            &[
                (-2, 1, 3, 2),
                (-2, 1, 3, 1),
                (-1, 1, 0, 1),
                (-1, 2, 2, 1),
                (0, 1, -1, 1),
                (1, 1, 1, 1),
            ],
        ];
        for (i, pts) in expect.iter().enumerate() {
            let n = i as u32 + 1;
            let want: Vec<(Rat, Rat)> =
                pts.iter().map(|&(xn, xd, yn, yd)| (q(xn, xd), q(yn, yd))).collect();
            assert_eq!(points_of(&staircase(n).unwrap()), want, "staircase({n})");
        }
    }

    #[test]
    fn levels_are_exact_up_to_eight() {
        for n in 1..=8 {
            let k = staircase(n).unwrap();
            assert_eq!(k.len() as u32, n + 1);
            assert_eq!(lamination_level(&k, 16), Level::Finite(n), "staircase({n})");
        }
    }

    #[test]
    fn levels_agree_with_the_lattice_oracle() {
        for n in 1..=6 {
            let k = staircase(n).unwrap();
            let d = faithful_lattice_denom(&k);
            assert_eq!(
                oracle_level(&k, 10, &d).unwrap(),
                Level::Finite(n),
                "staircase({n}) vs lattice oracle"
            );
        }
    }

    #[test]
    fn out_of_range_sizes_are_rejected() {
        assert!(staircase(0).is_err());
        assert!(staircase(MAX_STAIRCASE_N + 1).is_err());
    }
}
