//! Brute-force lattice model of the lamination iteration.
//!
//! Used as an independent cross-check of the box algebra in
//! [`super::boxset`]: instead of manipulating boxes, the set is rasterized
//! onto a finite lattice and one iteration fills, in every lattice row and
//! every lattice column, the span between the leftmost and rightmost (resp.
//! bottom- and top-most) occupied points — which is exactly the union of all
//! pairwise rank-one segments inside that line. Row fills and column fills
//! of one iteration are both computed from the same snapshot.
//!
//! The model is faithful when the lattice spacing strictly refines the
//! coordinate grid: every coordinate of the input must be an integer
//! multiple of `1/d` where `d` is at least **twice** the least common
//! denominator of the coordinates. Iterated hulls never introduce new
//! coordinates (every step takes minima, maxima and intersections of
//! existing ones), so a union of boxes with corners on the coordinate grid
//! is uniquely determined by which half-spacing lattice points it contains:
//! the lattice hits the relative interior of every cell, edge and vertex of
//! the grid complex. [`faithful_lattice_denom`] computes such a `d`.

use num::integer::lcm;
use num::{BigInt, BigRational, Signed, Zero};

use crate::matgeom::DiagMatQ;
use crate::{Error, Result};

use super::boxset::{Box2, BoxSet, Level};

/// A finite lattice `{(x0 + i)/d} × {(y0 + j)/d}` with an occupancy flag
/// per point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    d: BigInt,
    x0: BigInt,
    y0: BigInt,
    nx: usize,
    ny: usize,
    cells: Vec<bool>,
}

/// Twice the least common denominator of all coordinates of `s` — the
/// coarsest lattice on which the grid model of `s` is faithful.
pub fn faithful_lattice_denom(s: &BoxSet) -> BigInt {
    let mut l = BigInt::from(1);
    let (xs, ys) = s.coordinates();
    for v in xs.iter().chain(ys.iter()) {
        l = lcm(l, v.denom().abs());
    }
    l * 2
}

/// `v * d` as an exact integer, or an error if `v` is not on the lattice.
fn scaled_int(v: &BigRational, d: &BigInt) -> Result<BigInt> {
    let num = v.numer() * d;
    if (&num % v.denom()).is_zero() {
        Ok(num / v.denom())
    } else {
        Err(Error::Parameter(format!(
            "coordinate {v} is not an integer multiple of 1/{d}"
        )))
    }
}

fn to_usize(i: &BigInt) -> usize {
    use num::ToPrimitive;
    i.to_usize().expect("lattice index fits in usize")
}

impl Grid {
    /// Rasterize `s` onto the lattice of spacing `1/d` spanning its
    /// bounding box. Fails if some coordinate is off-lattice.
    pub fn rasterize(s: &BoxSet, d: &BigInt) -> Result<Grid> {
        let (xs, ys) = s.coordinates();
        if xs.is_empty() {
            return Err(Error::Parameter("cannot rasterize an empty set".into()));
        }
        let x0 = scaled_int(&xs[0], d)?;
        let y0 = scaled_int(&ys[0], d)?;
        let xmax = scaled_int(xs.last().unwrap(), d)?;
        let ymax = scaled_int(ys.last().unwrap(), d)?;
        let nx = to_usize(&(&xmax - &x0)) + 1;
        let ny = to_usize(&(&ymax - &y0)) + 1;
        let mut g = Grid { d: d.clone(), x0, y0, nx, ny, cells: vec![false; nx * ny] };
        for b in s.boxes() {
            g.fill_box(b)?;
        }
        Ok(g)
    }

    /// Rasterize `s` into the frame (origin, extent, spacing) of `self`.
    /// Fails if `s` has coordinates off-lattice or outside the frame.
    pub fn rasterize_in_frame(&self, s: &BoxSet) -> Result<Grid> {
        let mut g = Grid { cells: vec![false; self.nx * self.ny], ..self.clone() };
        for b in s.boxes() {
            g.fill_box(b)?;
        }
        Ok(g)
    }

    fn fill_box(&mut self, b: &Box2) -> Result<()> {
        let xl = &scaled_int(&b.x.lo, &self.d)? - &self.x0;
        let xh = &scaled_int(&b.x.hi, &self.d)? - &self.x0;
        let yl = &scaled_int(&b.y.lo, &self.d)? - &self.y0;
        let yh = &scaled_int(&b.y.hi, &self.d)? - &self.y0;
        if xl.is_negative() || yl.is_negative() {
            return Err(Error::Parameter("box lies outside the lattice frame".into()));
        }
        let (xl, xh, yl, yh) = (to_usize(&xl), to_usize(&xh), to_usize(&yl), to_usize(&yh));
        if xh >= self.nx || yh >= self.ny {
            return Err(Error::Parameter("box lies outside the lattice frame".into()));
        }
        for iy in yl..=yh {
            for ix in xl..=xh {
                self.cells[iy * self.nx + ix] = true;
            }
        }
        Ok(())
    }

    fn at(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.nx + ix]
    }

    /// One lamination iteration on the lattice: fill the min–max span of
    /// every occupied row and column, reading only the pre-step occupancy.
    pub fn step(&self) -> Grid {
        let mut next = self.clone();
        for iy in 0..self.ny {
            let row = &self.cells[iy * self.nx..(iy + 1) * self.nx];
            if let Some(first) = row.iter().position(|&c| c) {
                let last = row.iter().rposition(|&c| c).unwrap();
                next.cells[iy * self.nx + first..=iy * self.nx + last].fill(true);
            }
        }
        for ix in 0..self.nx {
            let mut first = None;
            let mut last = 0;
            for iy in 0..self.ny {
                if self.at(ix, iy) {
                    first.get_or_insert(iy);
                    last = iy;
                }
            }
            if let Some(first) = first {
                for iy in first..=last {
                    next.cells[iy * self.nx + ix] = true;
                }
            }
        }
        next
    }

    /// Whether the lattice point at `p` is occupied. Off-lattice or
    /// out-of-frame points are simply not in the set.
    pub fn contains(&self, p: &DiagMatQ) -> bool {
        let Ok(x) = scaled_int(&p.d1, &self.d) else { return false };
        let Ok(y) = scaled_int(&p.d2, &self.d) else { return false };
        let ix = x - &self.x0;
        let iy = y - &self.y0;
        if ix.is_negative() || iy.is_negative() {
            return false;
        }
        let (ix, iy) = (to_usize(&ix), to_usize(&iy));
        ix < self.nx && iy < self.ny && self.at(ix, iy)
    }

    pub fn same_cells(&self, other: &Grid) -> bool {
        self.cells == other.cells
    }
}

/// The `iterations`-th iterated hull in the lattice model (stops early once
/// the occupancy stabilizes — the iteration is monotone).
pub fn grid_hull_oracle(k: &BoxSet, iterations: u32, d: &BigInt) -> Result<Grid> {
    let mut g = Grid::rasterize(k, d)?;
    for _ in 0..iterations {
        let next = g.step();
        if next.same_cells(&g) {
            break;
        }
        g = next;
    }
    Ok(g)
}

/// Lamination level of the zero matrix in the lattice model.
pub fn oracle_level(k: &BoxSet, cap: u32, d: &BigInt) -> Result<Level> {
    let zero = DiagMatQ::zero();
    let mut g = Grid::rasterize(k, d)?;
    for i in 0..=cap {
        if g.contains(&zero) {
            return Ok(Level::Finite(i));
        }
        let next = g.step();
        if next.same_cells(&g) {
            return Ok(Level::ExceedsCap);
        }
        g = next;
    }
    Ok(Level::ExceedsCap)
}

/// Whether `s` occupies exactly the same lattice points as `g` (with `s`
/// rasterized into `g`'s frame).
pub fn grid_matches_set(g: &Grid, s: &BoxSet) -> Result<bool> {
    Ok(g.same_cells(&g.rasterize_in_frame(s)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamhull::boxset::{lamination_hull, lamination_level, BoxSet, Interval};
    use crate::matgeom::DiagMat;
    use num::BigRational;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn vertical_pair_fills_the_segment_and_nothing_else() {
        let k = BoxSet::from_points(&[DiagMat::new(q(0, 1), q(-1, 1)), DiagMat::new(q(0, 1), q(1, 1))]);
        let d = faithful_lattice_denom(&k);
        assert_eq!(d, BigInt::from(2));
        let g = grid_hull_oracle(&k, 1, &d).unwrap();
        assert!(g.contains(&DiagMatQ::zero()));
        assert!(g.contains(&DiagMat::new(q(0, 1), q(1, 2))));
        assert_eq!(oracle_level(&k, 16, &d).unwrap(), Level::Finite(1));
    }

    #[test]
    fn oracle_agrees_with_box_algebra_on_random_small_sets() {
        let mut rng = StdRng::seed_from_u64(0x1a41);
        for case in 0..60 {
            let n_boxes = rng.random_range(1..=5);
            let mut boxes = Vec::with_capacity(n_boxes);
            for _ in 0..n_boxes {
                // Quarter-integer coordinates in [-3, 3]; about half the
                // boxes are degenerate points.
                let degenerate = rng.random_bool(0.5);
                let x0 = q(rng.random_range(-12..=12), 4);
                let y0 = q(rng.random_range(-12..=12), 4);
                let (x1, y1) = if degenerate {
                    (x0.clone(), y0.clone())
                } else {
                    (q(rng.random_range(-12..=12), 4), q(rng.random_range(-12..=12), 4))
                };
                boxes.push(Box2::new(Interval::new(x0, x1), Interval::new(y0, y1)));
            }
            let k = BoxSet::from_boxes(boxes);
            let d = faithful_lattice_denom(&k);
            let iters = rng.random_range(0..=3);
            let hull = lamination_hull(&k, iters);
            let grid = grid_hull_oracle(&k, iters, &d).unwrap();
            assert!(
                grid_matches_set(&grid, &hull).unwrap(),
                "case {case}: box-algebra hull disagrees with lattice oracle \
                 (iters = {iters}, seed set = {})",
                k.to_json()
            );
            assert_eq!(
                lamination_level(&k, 8),
                oracle_level(&k, 8, &d).unwrap(),
                "case {case}: level disagrees"
            );
        }
    }
}
