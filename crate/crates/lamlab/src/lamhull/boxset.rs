//! Finite unions of axis-aligned boxes with exact rational coordinates, and
//! the iterated lamination step on them.
//!
//! Sets of diagonal matrices are represented as finite unions of closed
//! axis-aligned boxes (points and segments are degenerate boxes). One
//! lamination step adjoins, for every pair of boxes whose projections on one
//! axis overlap, the box swept by the axis-parallel segments joining them:
//! two points with equal second coordinate are rank-one compatible along
//! `E1`, so the segments between two boxes with overlapping y-ranges sweep
//! `[min x_lo, max x_hi] × (Y₁ ∩ Y₂)`, and symmetrically for `E2`. No other
//! coordinates can appear, so every iterated hull lives on the coordinate
//! grid of the seed set; internally the step runs on coordinate *indices*
//! and only materializes rationals at the end.

use std::collections::HashMap;

use num::BigRational;
use serde_json::{json, Value};

use crate::matgeom::{Axis, DiagMat, DiagMatQ};
use crate::{Error, Result};

use super::coord::{rat_from_json, rat_to_json};

pub type Rat = BigRational;

/// Closed interval with rational endpoints, `lo ≤ hi`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: Rat,
    pub hi: Rat,
}

impl Interval {
    /// Interval spanned by two endpoints given in either order.
    pub fn new(a: Rat, b: Rat) -> Interval {
        if a <= b {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    pub fn point(v: Rat) -> Interval {
        Interval { lo: v.clone(), hi: v }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: &Rat) -> bool {
        &self.lo <= v && v <= &self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = (&self.lo).max(&other.lo);
        let hi = (&self.hi).min(&other.hi);
        if lo <= hi {
            Some(Interval { lo: lo.clone(), hi: hi.clone() })
        } else {
            None
        }
    }
}

/// Closed axis-aligned box, possibly degenerate (segment or point).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Box2 {
    pub x: Interval,
    pub y: Interval,
}

impl Box2 {
    pub fn new(x: Interval, y: Interval) -> Box2 {
        Box2 { x, y }
    }

    pub fn point(p: &DiagMatQ) -> Box2 {
        Box2 { x: Interval::point(p.d1.clone()), y: Interval::point(p.d2.clone()) }
    }

    pub fn interval(&self, axis: Axis) -> &Interval {
        match axis {
            Axis::E1 => &self.x,
            Axis::E2 => &self.y,
        }
    }

    pub fn contains_point(&self, p: &DiagMatQ) -> bool {
        self.x.contains(&p.d1) && self.y.contains(&p.d2)
    }

    pub fn contains_box(&self, other: &Box2) -> bool {
        self.x.contains_interval(&other.x) && self.y.contains_interval(&other.y)
    }

    pub fn is_point(&self) -> bool {
        self.x.is_point() && self.y.is_point()
    }

    pub fn as_point(&self) -> Option<DiagMatQ> {
        if self.is_point() {
            Some(DiagMat::new(self.x.lo.clone(), self.y.lo.clone()))
        } else {
            None
        }
    }

    /// Sort key order used throughout: `(x_lo, y_lo, x_hi, y_hi)`.
    pub fn key(&self) -> (&Rat, &Rat, &Rat, &Rat) {
        (&self.x.lo, &self.y.lo, &self.x.hi, &self.y.hi)
    }
}

/// How a box entered its [`BoxSet`].
///
/// `Generated` boxes remember the *input indices* of the pair of boxes in
/// the previous iterate that produced them, plus the sweep direction. That
/// provenance is what lets witness extraction walk back down the tower.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxOrigin {
    /// Part of the user-supplied set.
    Seed,
    /// Carried over unchanged from the previous iterate.
    Carried,
    /// Swept between boxes `parents.0` and `parents.1` of the previous
    /// iterate, along `dir`.
    Generated { parents: (usize, usize), dir: Axis },
}

impl BoxOrigin {
    fn rank(&self) -> (u8, usize, usize, u8) {
        match self {
            BoxOrigin::Seed => (0, 0, 0, 0),
            BoxOrigin::Carried => (1, 0, 0, 0),
            BoxOrigin::Generated { parents, dir } => (2, parents.0, parents.1, dir.label()),
        }
    }
}

/// A normalized union of boxes: deduplicated, no box contained in another,
/// sorted by `(x_lo, y_lo, x_hi, y_hi)`. Tagged with the iteration level it
/// represents (0 for a seed set).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxSet {
    boxes: Vec<Box2>,
    origins: Vec<BoxOrigin>,
    level: u32,
}

/// Prefix a coordinate-parse error with the JSON field it came from.
fn in_field(key: &str, index: usize, e: Error) -> Error {
    match e {
        Error::Parameter(msg) => {
            Error::Parameter(format!("field \"{key}\"[{index}]: {msg}"))
        }
        other => other,
    }
}

impl BoxSet {
    pub fn from_boxes(boxes: Vec<Box2>) -> BoxSet {
        let entries = boxes.into_iter().map(|b| (b, BoxOrigin::Seed)).collect();
        normalize_entries(entries, 0)
    }

    pub fn from_points(points: &[DiagMatQ]) -> BoxSet {
        BoxSet::from_boxes(points.iter().map(Box2::point).collect())
    }

    pub fn boxes(&self) -> &[Box2] {
        &self.boxes
    }

    pub fn origins(&self) -> &[BoxOrigin] {
        &self.origins
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn contains(&self, p: &DiagMatQ) -> bool {
        self.boxes.iter().any(|b| b.contains_point(p))
    }

    /// All coordinate values appearing in the set, per axis, sorted and
    /// deduplicated.
    pub fn coordinates(&self) -> (Vec<Rat>, Vec<Rat>) {
        let mut xs = Vec::with_capacity(2 * self.boxes.len());
        let mut ys = Vec::with_capacity(2 * self.boxes.len());
        for b in &self.boxes {
            xs.push(b.x.lo.clone());
            xs.push(b.x.hi.clone());
            ys.push(b.y.lo.clone());
            ys.push(b.y.hi.clone());
        }
        xs.sort();
        xs.dedup();
        ys.sort();
        ys.dedup();
        (xs, ys)
    }

    /// Same boxes with the same point-set, ignoring level tags and origins.
    pub fn same_boxes(&self, other: &BoxSet) -> bool {
        self.boxes == other.boxes
    }

    /// Parse from the JSON interchange form
    /// `{"points": [[a, b], ...], "boxes": [[x_lo, x_hi, y_lo, y_hi], ...]}`.
    pub fn from_json(v: &Value) -> Result<BoxSet> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Parameter("expected a JSON object with \"points\"/\"boxes\"".into()))?;
        for key in obj.keys() {
            if key != "points" && key != "boxes" {
                return Err(Error::Parameter(format!("unknown field {key:?} in set description")));
            }
        }
        let mut boxes = Vec::new();
        if let Some(pts) = obj.get("points") {
            let arr = pts
                .as_array()
                .ok_or_else(|| Error::Parameter("field \"points\" must be an array".into()))?;
            for (i, p) in arr.iter().enumerate() {
                let pair = p.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                    Error::Parameter(format!("field \"points\"[{i}] must be a [d1, d2] pair"))
                })?;
                let d1 = rat_from_json(&pair[0]).map_err(|e| in_field("points", i, e))?;
                let d2 = rat_from_json(&pair[1]).map_err(|e| in_field("points", i, e))?;
                boxes.push(Box2::point(&DiagMat::new(d1, d2)));
            }
        }
        if let Some(bx) = obj.get("boxes") {
            let arr = bx
                .as_array()
                .ok_or_else(|| Error::Parameter("field \"boxes\" must be an array".into()))?;
            for (i, b) in arr.iter().enumerate() {
                let quad = b.as_array().filter(|a| a.len() == 4).ok_or_else(|| {
                    Error::Parameter(format!(
                        "field \"boxes\"[{i}] must be a [x_lo, x_hi, y_lo, y_hi] quadruple"
                    ))
                })?;
                let xl = rat_from_json(&quad[0]).map_err(|e| in_field("boxes", i, e))?;
                let xh = rat_from_json(&quad[1]).map_err(|e| in_field("boxes", i, e))?;
                let yl = rat_from_json(&quad[2]).map_err(|e| in_field("boxes", i, e))?;
                let yh = rat_from_json(&quad[3]).map_err(|e| in_field("boxes", i, e))?;
                if xl > xh || yl > yh {
                    return Err(Error::Parameter(format!(
                        "field \"boxes\"[{i}] has inverted bounds"
                    )));
                }
                boxes.push(Box2::new(Interval::new(xl, xh), Interval::new(yl, yh)));
            }
        }
        if boxes.is_empty() {
            return Err(Error::Parameter("set description contains no points or boxes".into()));
        }
        Ok(BoxSet::from_boxes(boxes))
    }

    pub fn from_json_str(s: &str) -> Result<BoxSet> {
        let v: Value =
            serde_json::from_str(s).map_err(|e| Error::Parameter(format!("invalid JSON: {e}")))?;
        BoxSet::from_json(&v)
    }

    /// Emit the JSON interchange form. Degenerate point boxes go under
    /// `"points"`, everything else under `"boxes"`; either key is omitted
    /// when empty.
    pub fn to_json(&self) -> Value {
        let mut points = Vec::new();
        let mut boxes = Vec::new();
        for b in &self.boxes {
            if let Some(p) = b.as_point() {
                points.push(json!([rat_to_json(&p.d1), rat_to_json(&p.d2)]));
            } else {
                boxes.push(json!([
                    rat_to_json(&b.x.lo),
                    rat_to_json(&b.x.hi),
                    rat_to_json(&b.y.lo),
                    rat_to_json(&b.y.hi)
                ]));
            }
        }
        let mut obj = serde_json::Map::new();
        if !points.is_empty() {
            obj.insert("points".into(), Value::Array(points));
        }
        if !boxes.is_empty() {
            obj.insert("boxes".into(), Value::Array(boxes));
        }
        Value::Object(obj)
    }
}

/// Re-normalize a set (deduplicate, drop boxes contained in another box,
/// sort). Idempotent; the level tag is preserved.
pub fn normalize(s: &BoxSet) -> BoxSet {
    let entries = s.boxes.iter().cloned().zip(s.origins.iter().copied()).collect();
    normalize_entries(entries, s.level)
}

// ---------------------------------------------------------------------------
// Integer-indexed kernel.
//
// All step/normalize arithmetic is min/max/intersection of existing
// coordinates, so boxes are mapped to indices into the sorted coordinate
// lists and everything below runs on `u32` quadruples.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct IBox {
    xl: u32,
    xh: u32,
    yl: u32,
    yh: u32,
}

impl IBox {
    /// Sort key `(x_lo, y_lo, x_hi, y_hi)`.
    fn key(self) -> (u32, u32, u32, u32) {
        (self.xl, self.yl, self.xh, self.yh)
    }
}

struct Indexed {
    xs: Vec<Rat>,
    ys: Vec<Rat>,
    iboxes: Vec<IBox>,
}

fn index_boxes(boxes: &[Box2]) -> Indexed {
    let mut xs = Vec::with_capacity(2 * boxes.len());
    let mut ys = Vec::with_capacity(2 * boxes.len());
    for b in boxes {
        xs.push(b.x.lo.clone());
        xs.push(b.x.hi.clone());
        ys.push(b.y.lo.clone());
        ys.push(b.y.hi.clone());
    }
    xs.sort();
    xs.dedup();
    ys.sort();
    ys.dedup();
    let pos = |list: &[Rat], v: &Rat| list.binary_search(v).expect("coordinate indexed") as u32;
    let iboxes = boxes
        .iter()
        .map(|b| IBox {
            xl: pos(&xs, &b.x.lo),
            xh: pos(&xs, &b.x.hi),
            yl: pos(&ys, &b.y.lo),
            yh: pos(&ys, &b.y.hi),
        })
        .collect();
    Indexed { xs, ys, iboxes }
}

fn materialize(ib: IBox, xs: &[Rat], ys: &[Rat]) -> Box2 {
    Box2 {
        x: Interval { lo: xs[ib.xl as usize].clone(), hi: xs[ib.xh as usize].clone() },
        y: Interval { lo: ys[ib.yl as usize].clone(), hi: ys[ib.yh as usize].clone() },
    }
}

/// Deduplicate (keeping the lowest-ranked origin), drop contained boxes,
/// sort, and assemble a `BoxSet` at the given level.
fn normalize_entries(entries: Vec<(Box2, BoxOrigin)>, level: u32) -> BoxSet {
    let boxes: Vec<Box2> = entries.iter().map(|(b, _)| b.clone()).collect();
    let idx = index_boxes(&boxes);
    let kept = normalize_indexed(
        idx.iboxes
            .iter()
            .copied()
            .zip(entries.iter().map(|(_, o)| *o))
            .collect(),
    );
    let mut out_boxes = Vec::with_capacity(kept.len());
    let mut out_origins = Vec::with_capacity(kept.len());
    for (ib, origin) in kept {
        out_boxes.push(materialize(ib, &idx.xs, &idx.ys));
        out_origins.push(origin);
    }
    BoxSet { boxes: out_boxes, origins: out_origins, level }
}

/// Kernel normalize on index quadruples. Returns survivors sorted by key.
fn normalize_indexed(entries: Vec<(IBox, BoxOrigin)>) -> Vec<(IBox, BoxOrigin)> {
    // Deduplicate, preferring Seed over Carried over Generated so that a
    // regenerated copy of an existing box never shadows the original.
    let mut best: HashMap<IBox, BoxOrigin> = HashMap::with_capacity(entries.len());
    for (ib, origin) in entries {
        best.entry(ib)
            .and_modify(|o| {
                if origin.rank() < o.rank() {
                    *o = origin;
                }
            })
            .or_insert(origin);
    }

    // Group by x-interval; inside a group keep only y-maximal intervals.
    // Sorting a group by (yl asc, yh desc) makes a box contained in an
    // earlier one exactly when its yh does not exceed the running maximum.
    let mut groups: HashMap<(u32, u32), Vec<(u32, u32, BoxOrigin)>> = HashMap::new();
    for (ib, origin) in best {
        groups.entry((ib.xl, ib.xh)).or_default().push((ib.yl, ib.yh, origin));
    }
    let mut group_list: Vec<((u32, u32), Vec<(u32, u32, BoxOrigin)>)> = groups.into_iter().collect();
    group_list.sort_by_key(|(k, _)| *k);
    for (_, g) in group_list.iter_mut() {
        g.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut kept: Vec<(u32, u32, BoxOrigin)> = Vec::with_capacity(g.len());
        let mut max_hi: Option<u32> = None;
        for &(yl, yh, origin) in g.iter() {
            if max_hi.map_or(true, |m| yh > m) {
                kept.push((yl, yh, origin));
                max_hi = Some(yh);
            }
        }
        *g = kept; // yl ascending, yh strictly ascending
    }

    // Cross-group containment: a survivor of group A dies if some group B
    // with a strictly larger x-interval has a y-interval containing it. In
    // each group's kept list yh increases with yl, so the best candidate is
    // the last interval with yl ≤ the query's yl.
    let mut out: Vec<(IBox, BoxOrigin)> = Vec::new();
    for (ai, (ax, ag)) in group_list.iter().enumerate() {
        'abox: for &(yl, yh, origin) in ag {
            for (bi, (bx, bg)) in group_list.iter().enumerate() {
                if ai == bi || !(bx.0 <= ax.0 && ax.1 <= bx.1) {
                    continue;
                }
                let k = bg.partition_point(|&(byl, _, _)| byl <= yl);
                if k > 0 && bg[k - 1].1 >= yh {
                    continue 'abox; // contained in a strictly larger box
                }
            }
            out.push((IBox { xl: ax.0, xh: ax.1, yl, yh }, origin));
        }
    }
    out.sort_by_key(|(ib, origin)| (ib.key(), origin.rank()));
    out
}

/// One lamination step.
///
/// For every (unordered) pair of boxes with overlapping y-ranges the swept
/// box `[min x_lo, max x_hi] × (Y₁ ∩ Y₂)` is adjoined (direction `E1`), and
/// symmetrically for overlapping x-ranges (direction `E2`); the input boxes
/// are carried over, and the union is normalized. The result's level tag is
/// the input's plus one, and generated boxes carry their parent pair.
pub fn lamination_step(s: &BoxSet) -> BoxSet {
    let idx = index_boxes(&s.boxes);
    let n = idx.iboxes.len();
    let mut entries: Vec<(IBox, BoxOrigin)> = Vec::with_capacity(2 * n);
    for ib in &idx.iboxes {
        entries.push((*ib, BoxOrigin::Carried));
    }
    for i in 0..n {
        let a = idx.iboxes[i];
        for j in i..n {
            let b = idx.iboxes[j];
            // Overlapping y-ranges: sweep along E1 (horizontal segments).
            let yl = a.yl.max(b.yl);
            let yh = a.yh.min(b.yh);
            if yl <= yh {
                entries.push((
                    IBox { xl: a.xl.min(b.xl), xh: a.xh.max(b.xh), yl, yh },
                    BoxOrigin::Generated { parents: (i, j), dir: Axis::E1 },
                ));
            }
            // Overlapping x-ranges: sweep along E2 (vertical segments).
            let xl = a.xl.max(b.xl);
            let xh = a.xh.min(b.xh);
            if xl <= xh {
                entries.push((
                    IBox { xl, xh, yl: a.yl.min(b.yl), yh: a.yh.max(b.yh) },
                    BoxOrigin::Generated { parents: (i, j), dir: Axis::E2 },
                ));
            }
        }
    }
    let kept = normalize_indexed(entries);
    let mut out_boxes = Vec::with_capacity(kept.len());
    let mut out_origins = Vec::with_capacity(kept.len());
    for (ib, origin) in kept {
        out_boxes.push(materialize(ib, &idx.xs, &idx.ys));
        out_origins.push(origin);
    }
    BoxSet { boxes: out_boxes, origins: out_origins, level: s.level + 1 }
}

/// The `i`-th iterated hull.
pub fn lamination_hull(k: &BoxSet, i: u32) -> BoxSet {
    let mut cur = normalize(k);
    for _ in 0..i {
        let next = lamination_step(&cur);
        if next.same_boxes(&cur) {
            // Fixed point: all further iterates are equal; keep the level
            // tag honest.
            return BoxSet { boxes: next.boxes, origins: next.origins, level: i + k.level() };
        }
        cur = next;
    }
    cur
}

/// Successive iterates `K⁽⁰⁾, K⁽¹⁾, …` until the zero matrix appears, the
/// sequence stabilizes, or `cap` iterations have been done. Used by level
/// computation and witness extraction, which need the whole tower.
pub fn lamination_tower(k: &BoxSet, cap: u32) -> Vec<BoxSet> {
    let zero = DiagMatQ::zero();
    let mut tower = vec![normalize(k)];
    while tower.len() <= cap as usize {
        let last = tower.last().unwrap();
        if last.contains(&zero) {
            break;
        }
        let next = lamination_step(last);
        if next.same_boxes(last) {
            break;
        }
        tower.push(next);
    }
    tower
}

/// Lamination level of the zero matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// `0 ∈ K⁽ᴸ⁾` with `L` minimal.
    Finite(u32),
    /// Zero not reached within the iteration cap (possibly never).
    ExceedsCap,
}

/// Smallest `i ≤ cap` with `0 ∈ K⁽ⁱ⁾`, or [`Level::ExceedsCap`].
pub fn lamination_level(k: &BoxSet, cap: u32) -> Level {
    let zero = DiagMatQ::zero();
    let tower = lamination_tower(k, cap);
    for (i, s) in tower.iter().enumerate() {
        if s.contains(&zero) {
            return Level::Finite(i as u32);
        }
    }
    Level::ExceedsCap
}

/// The maximal segment of `S` through `a` in direction `axis`: the smallest
/// and largest points of `S` on the axis-parallel line through `a`.
///
/// Errors if the line misses `S` entirely. The returned pair `(f, g)` is
/// ordered by the coordinate along `axis`, so ties and orientations are
/// deterministic; `a` need not lie between them (callers check).
pub fn maximal_interval(a: &DiagMatQ, axis: Axis, s: &BoxSet) -> Result<(DiagMatQ, DiagMatQ)> {
    let cross = axis.other();
    let fixed = a.entry(cross);
    let mut lo: Option<Rat> = None;
    let mut hi: Option<Rat> = None;
    for b in &s.boxes {
        if !b.interval(cross).contains(fixed) {
            continue;
        }
        let along = b.interval(axis);
        if lo.as_ref().map_or(true, |l| &along.lo < l) {
            lo = Some(along.lo.clone());
        }
        if hi.as_ref().map_or(true, |h| &along.hi > h) {
            hi = Some(along.hi.clone());
        }
    }
    match (lo, hi) {
        (Some(lo), Some(hi)) => {
            let mk = |v: Rat| match axis {
                Axis::E1 => DiagMat::new(v, fixed.clone()),
                Axis::E2 => DiagMat::new(fixed.clone(), v),
            };
            Ok((mk(lo), mk(hi)))
        }
        _ => Err(Error::Parameter(format!(
            "no point of the set lies on the {:?}-line through ({}, {})",
            axis, a.d1, a.d2
        ))),
    }
}
