//! Piecewise-affine laminate fields realizing a witness tree.
//!
//! A witness tree certifies that the zero matrix decomposes through `L`
//! nested rank-one convex splits into values of a target set Σ. This module
//! turns that certificate into a concrete Lipschitz field `u: ℝ² → ℝ²` whose
//! gradient equals a value of Σ outside a small, explicitly controlled
//! transition region, together with the strip-count selection rule that
//! balances the error contributions for a given mesh size.
//!
//! Everything is built from one primitive: a *strip laminate*. Inside a
//! rectangle, one component of an affine field is replaced by a two-slope
//! sawtooth in one coordinate (k periods, slopes taken from the two children
//! of a split, phase fractions from the split weight) and clipped against
//! the distance to the transverse faces so the replacement agrees with the
//! affine field on the whole boundary. The slopes realized inside the strips
//! are the child values; the clipping confines everything else to bands
//! whose total area shrinks like 1/k. Deeper splits refine the strips
//! recursively, alternating directions, each stage keeping a margin equal to
//! the previous tent height so that its own periods fit inside the region
//! where the previous stage is exactly affine.
//!
//! Fields are evaluated pointwise by descending this plan; nothing is
//! meshed or stored per cell, so evaluation is O(depth) per point and the
//! same field object serves every mesh size.

use num::ToPrimitive;

use crate::fem::Polygon;
use crate::lamhull::{TopConfig, WitnessNode, WitnessTree};
use crate::matgeom::{rank_one_direction_eps, Axis, DiagMat, DiagMatF, RankOne};
use crate::{Error, Result};

/// Axis-aligned open rectangle `(a, b) × (c, d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Rect {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Rect> {
        if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite() && a < b && c < d) {
            return Err(Error::Parameter(format!(
                "degenerate rectangle ({a}, {b}) x ({c}, {d})"
            )));
        }
        Ok(Rect { a, b, c, d })
    }

    #[inline]
    pub fn lo(&self, axis: Axis) -> f64 {
        match axis {
            Axis::E1 => self.a,
            Axis::E2 => self.c,
        }
    }

    #[inline]
    pub fn hi(&self, axis: Axis) -> f64 {
        match axis {
            Axis::E1 => self.b,
            Axis::E2 => self.d,
        }
    }

    #[inline]
    pub fn len(&self, axis: Axis) -> f64 {
        self.hi(axis) - self.lo(axis)
    }

    /// Closed-rectangle membership.
    #[inline]
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.a <= p[0] && p[0] <= self.b && self.c <= p[1] && p[1] <= self.d
    }
}

/// `1` if the fractional part of `tau` (taken in `(0, 1]`, so integers map
/// to 1) lies in `(0, mu]`, else `0`. This is the phase indicator of a unit
/// period split at `mu`.
pub fn chi(mu: f64, tau: f64) -> Result<u8> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Parameter(format!("phase fraction {mu} outside (0, 1)")));
    }
    let mut t = tau - tau.floor();
    if t == 0.0 {
        t = 1.0;
    }
    Ok(u8::from(t <= mu))
}

/// Lebesgue measure of `{s ∈ [0, u] : chi(mu, s/1) = 1}` extended to all
/// real `u` by the periodicity `m(u + 1) = m(u) + mu`.
#[inline]
fn chi_measure(u: f64, mu: f64) -> f64 {
    let k = u.floor();
    k * mu + (u - k).min(mu)
}

/// Symmetric clamp to `[-d, d]`; the boundary cutoff applied to every field
/// component. Coincides with `v.min(d)` for nonnegative values but also
/// pins negative components, which the folded construction produces.
#[inline]
fn clamp_sym(v: f64, d: f64) -> f64 {
    v.min(d).max(-d)
}

/// Periodic two-slope profile in one variable: starting at `x0` with value
/// `v0`, each period of length `t` has slope `sa` on its leading `mu`
/// fraction and `sb` on the rest. At every period start the profile returns
/// to the affine line of mean slope `mu·sa + (1−mu)·sb` through `(x0, v0)`.
#[derive(Debug, Clone, Copy)]
struct Profile {
    x0: f64,
    v0: f64,
    t: f64,
    mu: f64,
    sa: f64,
    sb: f64,
}

impl Profile {
    #[inline]
    fn mean(&self) -> f64 {
        self.mu * self.sa + (1.0 - self.mu) * self.sb
    }

    fn value(&self, x: f64) -> f64 {
        let u = (x - self.x0) / self.t;
        let m = chi_measure(u, self.mu);
        self.v0 + self.t * ((self.sa - self.sb) * m + self.sb * u)
    }

    /// Deviation from the mean-slope affine line; a tent of height `peak()`
    /// per period, zero at period starts, nonnegative whenever `sa ≥ sb`.
    fn tent(&self, x: f64) -> f64 {
        let u = (x - self.x0) / self.t;
        let fr = u - u.floor();
        self.t * (self.sa - self.sb) * (fr.min(self.mu) - self.mu * fr)
    }

    #[inline]
    fn peak(&self) -> f64 {
        self.t * (self.sa - self.sb) * self.mu * (1.0 - self.mu)
    }

    /// Start of the period containing `x` and the offset into it.
    #[inline]
    fn locate(&self, x: f64) -> (f64, f64) {
        let n = ((x - self.x0) / self.t).floor();
        let start = self.x0 + n * self.t;
        (start, x - start)
    }
}

/// Strip pattern of one refinement stage: `k` periods of length `period`
/// along `dir`, each split at the `mu` fraction, the leading phase carrying
/// the larger slope. `margin` is the height of the tent the stage adds to
/// its component; the next stage keeps this inset from the transverse faces
/// so it only ever subdivides the region where this stage is exactly affine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripLayout {
    pub dir: Axis,
    pub k: u32,
    pub mu: f64,
    pub period: f64,
    pub margin: f64,
}

impl StripLayout {
    /// Interval (relative to the strip start) covered by the leading
    /// (`true`) or trailing phase of the `p`-th period.
    pub fn interval(&self, p: u32, leading: bool) -> (f64, f64) {
        let start = f64::from(p) * self.period;
        let split = start + self.mu * self.period;
        if leading {
            (start, split)
        } else {
            (split, start + self.period)
        }
    }
}

/// Diagonal affine map: component `j` is `off[j] + slope[j] · x_j`. The
/// gradient is the diagonal matrix of the slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub off: [f64; 2],
    pub slope: [f64; 2],
}

impl Affine {
    pub fn new(off: [f64; 2], slope: [f64; 2]) -> Affine {
        Affine { off, slope }
    }

    /// Affine map with gradient `w` vanishing at the origin.
    pub fn linear(w: DiagMatF) -> Affine {
        Affine { off: [0.0, 0.0], slope: [w.d1, w.d2] }
    }

    #[inline]
    pub fn value(&self, p: [f64; 2]) -> [f64; 2] {
        [self.off[0] + self.slope[0] * p[0], self.off[1] + self.slope[1] * p[1]]
    }

    #[inline]
    pub fn grad(&self) -> DiagMatF {
        DiagMat::new(self.slope[0], self.slope[1])
    }
}

/// One refinement stage plus what to do inside each of its two phases.
#[derive(Debug, Clone)]
struct Stage {
    layout: StripLayout,
    /// Slopes of the refined component on the leading/trailing phase.
    sa: f64,
    sb: f64,
    /// Full gradients carried by the two phases.
    ga: DiagMatF,
    gb: DiagMatF,
    next_a: Plan,
    next_b: Plan,
}

/// Refinement plan below one cell: either the cell's gradient is already a
/// target value, or one more strip stage subdivides it.
#[derive(Debug, Clone)]
enum Plan {
    Done,
    Lam(Box<Stage>),
}

impl Plan {
    fn is_done(&self) -> bool {
        matches!(self, Plan::Done)
    }
}

/// Evaluate `plan` inside `rect`, where the incoming field is `aff` (exact
/// on all of `rect`, equal to the stage values of every enclosing stage).
/// Returns the value at `p ∈ rect` and the gradient if `p` lies interior to
/// a region where the field is affine.
fn eval_plan(plan: &Plan, rect: &Rect, aff: Affine, p: [f64; 2]) -> ([f64; 2], Option<DiagMatF>) {
    let Plan::Lam(st) = plan else {
        return (aff.value(p), Some(aff.grad()));
    };
    let dir = st.layout.dir;
    let d = dir.idx();
    let o = dir.other().idx();
    let prof = Profile {
        x0: rect.lo(dir),
        v0: aff.off[d] + aff.slope[d] * rect.lo(dir),
        t: st.layout.period,
        mu: st.layout.mu,
        sa: st.sa,
        sb: st.sb,
    };
    // The stage's two slopes must average back to the incoming slope, or
    // the profile would drift off the affine line across periods.
    debug_assert!(
        (prof.mean() - aff.slope[d]).abs() <= 1e-9 * (1.0 + aff.slope[d].abs()),
        "stage slopes are inconsistent with the incoming affine field"
    );
    let (start, offset) = prof.locate(p[d]);
    let split = st.layout.mu * st.layout.period;
    let leading = offset < split;
    let kink = offset == 0.0 || offset == split;
    let margin = st.layout.margin;
    let core_lo = rect.lo(dir.other()) + margin;
    let core_hi = rect.hi(dir.other()) - margin;
    if !kink && core_lo < core_hi && p[o] >= core_lo && p[o] <= core_hi {
        // Inside a child cell the stage is exactly affine with the phase
        // slope; descend with the updated component.
        let (next, slope) = if leading { (&st.next_a, st.sa) } else { (&st.next_b, st.sb) };
        let (lo_d, hi_d) = if leading {
            (start, start + split)
        } else {
            (start + split, start + st.layout.period)
        };
        let mut child = aff;
        child.slope[d] = slope;
        child.off[d] = prof.value(p[d]) - slope * p[d];
        let child_rect = match dir {
            Axis::E1 => Rect { a: lo_d, b: hi_d, c: core_lo, d: core_hi },
            Axis::E2 => Rect { a: core_lo, b: core_hi, c: lo_d, d: hi_d },
        };
        return eval_plan(next, &child_rect, child, p);
    }
    // Transition band next to the transverse faces (or a kink line): the
    // stage value, tent clipped by the distance to those faces.
    let dist = (p[o] - rect.lo(dir.other())).min(rect.hi(dir.other()) - p[o]).max(0.0);
    let tent = prof.tent(p[d]);
    let mut out = [0.0; 2];
    out[d] = aff.off[d] + aff.slope[d] * p[d] + tent.min(dist);
    out[o] = aff.off[o] + aff.slope[o] * p[o];
    let grad = if !kink && tent < dist {
        Some(if leading { st.ga } else { st.gb })
    } else {
        None
    };
    (out, grad)
}

/// Single-direction sawtooth over the whole plane (the level-1 field before
/// the boundary cutoff): component 1 is a zero-mean two-slope profile of
/// period `profile.t`, component 2 vanishes.
#[derive(Debug, Clone)]
struct SawtoothTop {
    profile: Profile,
    ga: DiagMatF,
    gb: DiagMatF,
}

/// Doubly periodic quadrant cell. The plane is tiled by squares of side
/// `size`; each tile splits at fractions `(sx, sy)` into four quadrants on
/// which the base field is affine with gradient `(ax[i], by[j])`, vanishing
/// on the tile edges. Each quadrant carries its own refinement plan.
#[derive(Debug, Clone)]
struct CellTop {
    size: f64,
    sx: f64,
    sy: f64,
    ax: [f64; 2],
    by: [f64; 2],
    /// Indexed by `xphase * 2 + yphase`, phase 0 = leading.
    quads: [Plan; 4],
}

/// Sawtooth in `x₁` whose trailing strips carry a transverse laminate, odd
/// in `x₂`. On leading strips the field is `(saw, 0)` with gradient
/// `leaf_grad`; on trailing strips component 2 is `sign(x₂) · min(ν(|x₂|),
/// dist to the strip edges)` where `ν` is the zero-mean profile of period
/// `tk` with slopes `(sa, sb)`, and deeper stages refine its phase bands.
#[derive(Debug, Clone)]
struct FoldTop {
    period: f64,
    leaf_mu: f64,
    a_leaf: f64,
    a_mid: f64,
    leaf_grad: DiagMatF,
    tk: f64,
    mu: f64,
    sa: f64,
    sb: f64,
    ga: DiagMatF,
    gb: DiagMatF,
    next_a: Plan,
    next_b: Plan,
}

/// Single strip laminate on one rectangle, extended by its base affine
/// field outside (no boundary cutoff). The plan is always a single stage.
#[derive(Debug, Clone)]
struct StripTop {
    rect: Rect,
    base: Affine,
    plan: Plan,
}

#[derive(Debug, Clone)]
enum Top {
    Zero,
    Sawtooth(SawtoothTop),
    Cell(Box<CellTop>),
    Fold(Box<FoldTop>),
    Strip(Box<StripTop>),
}

/// A laminate field `u: ℝ² → ℝ²`.
///
/// Constructed by [`simple_laminate`] or the `build_*` functions; evaluated
/// pointwise. When a domain polygon is attached, every component is clamped
/// to `±dist(x, ∂Ω)` so the field vanishes on the boundary.
#[derive(Debug, Clone)]
pub struct Field {
    top: Top,
    /// Evaluate in transposed coordinates (and transpose back); normalizes
    /// the orientation of the witness tree's root split.
    swap: bool,
    omega: Option<Polygon>,
    lipschitz: f64,
    /// Translation periods of the uncut field along the two output axes.
    periods: [Option<f64>; 2],
    level: u32,
}

impl Field {
    /// Field value, including the boundary cutoff when a domain is attached.
    pub fn value(&self, p: [f64; 2]) -> [f64; 2] {
        let raw = self.value_pre_cutoff(p);
        match &self.omega {
            None => raw,
            Some(om) => {
                let d = om.inner_distance(p);
                [clamp_sym(raw[0], d), clamp_sym(raw[1], d)]
            }
        }
    }

    /// Field value before the boundary cutoff (the periodic extension over
    /// the whole plane).
    pub fn value_pre_cutoff(&self, p: [f64; 2]) -> [f64; 2] {
        let (v, _) = self.eval(p);
        v
    }

    /// The gradient at `p`, when `p` is interior to a region where the
    /// field is affine with a diagonal gradient: inside a phase strip and
    /// strictly below the cutoff distances. `None` on kink lines, inside
    /// transition bands, and wherever the boundary clamp is active.
    pub fn gradient(&self, p: [f64; 2]) -> Option<DiagMatF> {
        let (raw, g) = self.eval(p);
        match &self.omega {
            None => g,
            Some(om) => {
                let d = om.inner_distance(p);
                if raw[0].abs() < d && raw[1].abs() < d {
                    g
                } else {
                    None
                }
            }
        }
    }

    fn eval(&self, p: [f64; 2]) -> ([f64; 2], Option<DiagMatF>) {
        let q = if self.swap { [p[1], p[0]] } else { p };
        let (v, g) = self.eval_normalized(q);
        if self.swap {
            ([v[1], v[0]], g.map(DiagMat::transpose_entries))
        } else {
            (v, g)
        }
    }

    fn eval_normalized(&self, q: [f64; 2]) -> ([f64; 2], Option<DiagMatF>) {
        match &self.top {
            Top::Zero => ([0.0, 0.0], Some(DiagMat::new(0.0, 0.0))),
            Top::Sawtooth(s) => {
                let (_, offset) = s.profile.locate(q[0]);
                let split = s.profile.mu * s.profile.t;
                let kink = offset == 0.0 || offset == split;
                let g = if kink {
                    None
                } else if offset < split {
                    Some(s.ga)
                } else {
                    Some(s.gb)
                };
                ([s.profile.value(q[0]), 0.0], g)
            }
            Top::Cell(c) => {
                let cs = c.size;
                let cx = q[0] - (q[0] / cs).floor() * cs;
                let cy = q[1] - (q[1] / cs).floor() * cs;
                let splitx = cs * c.sx;
                let splity = cs * c.sy;
                let (xp, yp) = (usize::from(cx >= splitx), usize::from(cy >= splity));
                let kink = cx == 0.0 || cx == splitx || cy == 0.0 || cy == splity;
                let s1 = c.ax[xp];
                let s2 = c.by[yp];
                let v1 = if xp == 0 { s1 * cx } else { s1 * (cx - cs) };
                let v2 = if yp == 0 { s2 * cy } else { s2 * (cy - cs) };
                let aff = Affine { off: [v1 - s1 * q[0], v2 - s2 * q[1]], slope: [s1, s2] };
                let (x0, y0) = (q[0] - cx, q[1] - cy);
                let rect = Rect {
                    a: x0 + if xp == 0 { 0.0 } else { splitx },
                    b: x0 + if xp == 0 { splitx } else { cs },
                    c: y0 + if yp == 0 { 0.0 } else { splity },
                    d: y0 + if yp == 0 { splity } else { cs },
                };
                let (v, g) = eval_plan(&c.quads[xp * 2 + yp], &rect, aff, q);
                (v, if kink { None } else { g })
            }
            Top::Fold(f) => self.eval_fold(f, q),
            Top::Strip(s) => {
                if s.rect.contains(q) {
                    eval_plan(&s.plan, &s.rect, s.base, q)
                } else {
                    (s.base.value(q), Some(s.base.grad()))
                }
            }
        }
    }

    fn eval_fold(&self, f: &FoldTop, q: [f64; 2]) -> ([f64; 2], Option<DiagMatF>) {
        let saw = Profile {
            x0: 0.0,
            v0: 0.0,
            t: f.period,
            mu: f.leaf_mu,
            sa: f.a_leaf,
            sb: f.a_mid,
        };
        let (start, offset) = saw.locate(q[0]);
        let split = f.leaf_mu * f.period;
        let v1 = saw.value(q[0]);
        let kink1 = offset == 0.0 || offset == split;
        if offset < split {
            return ([v1, 0.0], if kink1 { None } else { Some(f.leaf_grad) });
        }
        // Trailing strip: transverse laminate, folded across the x₁-axis.
        let strip_lo = start + split;
        let strip_hi = start + f.period;
        let sgn = if q[1] < 0.0 { -1.0 } else { 1.0 };
        let z = q[1].abs();
        let nu = Profile { x0: 0.0, v0: 0.0, t: f.tk, mu: f.mu, sa: f.sa, sb: f.sb };
        let (bstart, boff) = nu.locate(z);
        let bsplit = f.mu * f.tk;
        let leading = boff < bsplit;
        let kink2 = boff == 0.0 || boff == bsplit || q[1] == 0.0;
        let margin = nu.peak();
        let core_lo = strip_lo + margin;
        let core_hi = strip_hi - margin;
        let next = if leading { &f.next_a } else { &f.next_b };
        if !kink1
            && !kink2
            && !next.is_done()
            && core_lo < core_hi
            && q[0] >= core_lo
            && q[0] <= core_hi
        {
            let (blo, bhi) = if leading {
                (bstart, bstart + bsplit)
            } else {
                (bstart + bsplit, bstart + f.tk)
            };
            let slope2 = if leading { f.sa } else { f.sb };
            let aff = Affine {
                off: [v1 - f.a_mid * q[0], nu.value(z) - slope2 * z],
                slope: [f.a_mid, slope2],
            };
            let rect = Rect { a: core_lo, b: core_hi, c: blo, d: bhi };
            let (v, g) = eval_plan(next, &rect, aff, [q[0], z]);
            return ([v[0], sgn * v[1]], g);
        }
        let dist = (q[0] - strip_lo).min(strip_hi - q[0]).max(0.0);
        let vphi = nu.value(z);
        let v2 = sgn * vphi.min(dist);
        let grad = if !kink1 && !kink2 && vphi < dist {
            Some(if leading { f.ga } else { f.gb })
        } else {
            None
        };
        ([v1, v2], grad)
    }

    /// Upper bound on the Frobenius norm of the gradient, valid for the
    /// field and for its P1 interpolants on axis-aligned right triangles;
    /// independent of the mesh size and of the strip counts.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Translation periods of the uncut field along the output axes
    /// (`None`: not periodic in that direction).
    pub fn periods(&self) -> [Option<f64>; 2] {
        self.periods
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn domain(&self) -> Option<&Polygon> {
        self.omega.as_ref()
    }

    /// Exact area of the region where the gradient of a simple laminate is
    /// neither of the two target matrices (the clipped bands along the
    /// transverse faces plus the kink lines, which are null). `None` for
    /// composite fields.
    pub fn exact_bad_measure(&self) -> Option<f64> {
        let Top::Strip(s) = &self.top else {
            return None;
        };
        let Plan::Lam(st) = &s.plan else {
            return None;
        };
        let dir = st.layout.dir;
        let along = s.rect.len(dir);
        let perp = s.rect.len(dir.other());
        let h = st.layout.margin;
        Some(if 2.0 * h <= perp {
            along * h
        } else {
            along * perp * (1.0 - perp / (4.0 * h))
        })
    }
}

/// Replace the affine field `v` inside `q` by a `k`-period strip laminate
/// whose gradient alternates between `f` and `g`; outside `q` the field is
/// `v`. Requires `∇v = lambda·f + (1−lambda)·g` (relative tolerance 1e-12)
/// with `f − g` of rank one and `lambda ∈ (0, 1)`.
pub fn simple_laminate(
    q: Rect,
    v: Affine,
    f: DiagMatF,
    g: DiagMatF,
    lambda: f64,
    k: u32,
) -> Result<Field> {
    if k == 0 {
        return Err(Error::Parameter("strip count k must be at least 1".into()));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Parameter(format!("weight {lambda} outside the open interval (0, 1)")));
    }
    let scale = 1.0 + f.norm().max(g.norm());
    let dir = match rank_one_direction_eps(&f, &g, 1e-12 * scale) {
        RankOne::Dir(dir) => dir,
        RankOne::Rank0 => {
            return Err(Error::Parameter("endpoint matrices coincide; nothing to laminate".into()))
        }
        RankOne::Incompatible => {
            return Err(Error::Parameter(
                "endpoint matrices differ in both diagonal entries; their difference has rank 2"
                    .into(),
            ))
        }
    };
    let w = v.grad();
    let combo = DiagMat::new(
        lambda * f.d1 + (1.0 - lambda) * g.d1,
        lambda * f.d2 + (1.0 - lambda) * g.d2,
    );
    if combo.dist(&w) > 1e-12 * (1.0 + w.norm()) {
        return Err(Error::Parameter(format!(
            "gradient ({}, {}) is not the lambda-combination ({}, {}) of the endpoints",
            w.d1, w.d2, combo.d1, combo.d2
        )));
    }
    // Leading phase carries the larger slope so the tent is nonnegative.
    let (fa, ga_) = (*f.entry(dir), *g.entry(dir));
    let (sa, sb, ga, gb, mu) = if fa >= ga_ {
        (fa, ga_, f, g, lambda)
    } else {
        (ga_, fa, g, f, 1.0 - lambda)
    };
    let period = q.len(dir) / f64::from(k);
    let margin = period * (sa - sb) * mu * (1.0 - mu);
    let stage = Stage {
        layout: StripLayout { dir, k, mu, period, margin },
        sa,
        sb,
        ga,
        gb,
        next_a: Plan::Done,
        next_b: Plan::Done,
    };
    let m1 = f.d1.abs().max(g.d1.abs()).max(w.d1.abs());
    let m2 = f.d2.abs().max(g.d2.abs()).max(w.d2.abs());
    Ok(Field {
        top: Top::Strip(Box::new(StripTop {
            rect: q,
            base: v,
            plan: Plan::Lam(Box::new(stage)),
        })),
        swap: false,
        omega: None,
        lipschitz: lipschitz_bound(m1, m2),
        periods: [None, None],
        level: 1,
    })
}

/// Gradient-norm bound from per-component slope maxima. Each component's
/// slopes come from that component's entries over the construction, and the
/// distance cutoffs contribute slope 1; P1 interpolation on right triangles
/// can combine the two axis differences of a component into one row, hence
/// the √2.
fn lipschitz_bound(m1: f64, m2: f64) -> f64 {
    (2.0 * (m1.max(1.0).powi(2) + m2.max(1.0).powi(2))).sqrt()
}

/// Construction parameters: the mesh-size exponent of the cell scale and
/// the strip counts of the refinement stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub level: u32,
    /// Cell scale exponent: cells have side ~ h^alpha.
    pub alpha: f64,
    /// Strip counts of refinement stages 2..=level (empty for level ≤ 1).
    pub k_list: Vec<u32>,
    /// Strict growth threshold: each count must exceed `growth` times the
    /// previous one so that consecutive stages' transition bands nest.
    pub growth: f64,
    /// Largest Frobenius norm over the witness values.
    pub m_norm: f64,
    /// Unrounded stage minimizers (the counts before flooring and bumping).
    pub minimizers: Vec<f64>,
}

fn walk_nodes<'a>(node: &'a WitnessNode, f: &mut impl FnMut(&'a WitnessNode)) {
    f(node);
    if let WitnessNode::Split { left, right, .. } = node {
        walk_nodes(left, f);
        walk_nodes(right, f);
    }
}

/// Balanced parameters for a level-`level` tree at mesh size `h`, with the
/// rate-optimal exponent `alpha = 1/(1+level)`.
///
/// The counts minimize, stage by stage, the sum of the transition-band term
/// of each stage (previous counts over the new one) and the interpolation
/// term of its strips (all counts times h^{1−alpha}); the unrounded
/// minimizer is floored and incremented, then bumped above `growth` times
/// the previous count so the stages nest.
pub fn select_params(level: u32, h: f64, tree: &WitnessTree) -> Result<Params> {
    let alpha = 1.0 / (1.0 + f64::from(level));
    select_params_with_alpha(level, h, tree, alpha)
}

/// Same selection rule with a caller-chosen cell exponent.
pub fn select_params_with_alpha(
    level: u32,
    h: f64,
    tree: &WitnessTree,
    alpha: f64,
) -> Result<Params> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Parameter(format!("mesh size {h} outside (0, 1)")));
    }
    // alpha = 1 only arises for level 0, where no cells are built and the
    // admissibility check degenerates to h < diameter.
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("cell exponent {alpha} outside (0, 1]")));
    }
    if level != tree.level {
        return Err(Error::Parameter(format!(
            "requested level {level} does not match the witness level {}",
            tree.level
        )));
    }
    let mut m_norm: f64 = 0.0;
    let mut min_weight: Option<f64> = None;
    walk_nodes(&tree.root, &mut |n| {
        m_norm = m_norm.max(n.value().to_f64().norm());
        if let WitnessNode::Split { lambda, .. } = n {
            let lam = lambda.to_f64().expect("weight out of f64 range");
            let side = lam.min(1.0 - lam);
            if side > 0.0 {
                min_weight = Some(min_weight.map_or(side, |m| m.min(side)));
            }
        }
    });
    let growth = match min_weight {
        Some(w) => m_norm / w,
        None => m_norm,
    };
    let l = f64::from(level);
    // kk[i] = count of stage i, with the conventional kk[0] = kk[1] = 1.
    let mut kk: Vec<f64> = vec![1.0, 1.0];
    let mut minimizers = Vec::new();
    for j in 2..=level as usize {
        let x = if j == 2 {
            h.powf(-(1.0 - alpha) / l)
        } else {
            let i = l - j as f64 + 1.0;
            let mut theta = 1.0;
            let mut idx = j - 1;
            while idx >= 2 {
                theta *= kk[idx];
                idx -= 2;
            }
            let mut gamma = 1.0;
            let mut idx = j as i64 - 2;
            while idx >= 2 {
                gamma *= kk[idx as usize];
                idx -= 2;
            }
            i.powf(i / (i + 1.0)) * h.powf(-(1.0 - alpha) / (i + 1.0)) * theta.powf(i / (i + 1.0))
                / gamma
        };
        if !x.is_finite() || x > 1e9 {
            return Err(Error::Parameter(format!(
                "stage {j} strip count {x:.3e} out of range; mesh size too small for this level"
            )));
        }
        minimizers.push(x);
        let mut k = x.floor() + 1.0;
        let threshold = growth * kk[j - 1];
        if k <= threshold {
            k = threshold.floor() + 1.0;
        }
        kk.push(k);
    }
    let k_list = kk[2..].iter().map(|&k| k as u32).collect();
    Ok(Params { level, alpha, k_list, growth, m_norm, minimizers })
}

/// Admissibility of the mesh size against the domain: cells of scale
/// h^alpha have to fit inside the domain diameter, and h itself must be
/// below 1 for the scale separation to mean anything.
fn check_admissible(h: f64, alpha: f64, omega: &Polygon) -> Result<()> {
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("mesh size {h} must be positive")));
    }
    if h >= 1.0 || h.powf(alpha) >= omega.diameter() {
        return Err(Error::Admissibility(format!(
            "mesh size {h} inadmissible: need h < 1 and h^{alpha} < the domain diameter {}",
            omega.diameter()
        )));
    }
    Ok(())
}

/// Witness tree restated in f64 with the root split normalized to a fixed
/// direction (`swap` transposes coordinates, entries, and split axes).
#[derive(Debug, Clone)]
struct NTree {
    value: DiagMatF,
    split: Option<NSplit>,
}

#[derive(Debug, Clone)]
struct NSplit {
    dir: Axis,
    /// Weight of the smaller child.
    lambda: f64,
    lo: Box<NTree>,
    hi: Box<NTree>,
}

fn normalize_node(node: &WitnessNode, swap: bool) -> NTree {
    let mut value = node.value().to_f64();
    if swap {
        value = value.transpose_entries();
    }
    let split = match node {
        WitnessNode::Leaf { .. } => None,
        WitnessNode::Split { lambda, dir, left, right, .. } => Some(NSplit {
            dir: if swap { dir.other() } else { *dir },
            lambda: lambda.to_f64().expect("weight out of f64 range"),
            lo: Box::new(normalize_node(left, swap)),
            hi: Box::new(normalize_node(right, swap)),
        }),
    };
    NTree { value, split }
}

/// Build the refinement plan below a node, with `dims` the side lengths of
/// the cell the node's value occupies. Consumes `ks[depth]`, `ks[depth+1]`,
/// ... along the path.
fn plan_from(node: &NTree, ks: &[u32], depth: usize, dims: [f64; 2]) -> Result<Plan> {
    let Some(sp) = &node.split else {
        return Ok(Plan::Done);
    };
    let stage = stage_from(sp.dir, ks, depth, 1.0 - sp.lambda, &sp.hi, &sp.lo, dims)?;
    Ok(Plan::Lam(Box::new(stage)))
}

/// One strip stage laminating between the values of `hi` (leading phase,
/// weight `mu`) and `lo`, inside a cell of side lengths `dims`.
fn stage_from(
    dir: Axis,
    ks: &[u32],
    depth: usize,
    mu: f64,
    hi: &NTree,
    lo: &NTree,
    dims: [f64; 2],
) -> Result<Stage> {
    let Some(&k) = ks.get(depth) else {
        return Err(Error::Parameter(format!(
            "witness tree needs a strip count for refinement depth {} but only {} were given",
            depth + 1,
            ks.len()
        )));
    };
    let d = dir.idx();
    let o = dir.other().idx();
    let sa = *hi.value.entry(dir);
    let sb = *lo.value.entry(dir);
    let period = dims[d] / f64::from(k);
    let margin = period * (sa - sb) * mu * (1.0 - mu);
    let cross = dims[o] - 2.0 * margin;
    let mut dims_a = [0.0; 2];
    dims_a[d] = mu * period;
    dims_a[o] = cross;
    let mut dims_b = [0.0; 2];
    dims_b[d] = (1.0 - mu) * period;
    dims_b[o] = cross;
    Ok(Stage {
        layout: StripLayout { dir, k, mu, period, margin },
        sa,
        sb,
        ga: hi.value,
        gb: lo.value,
        next_a: plan_from(hi, ks, depth + 1, dims_a)?,
        next_b: plan_from(lo, ks, depth + 1, dims_b)?,
    })
}

fn tree_component_maxima(tree: &WitnessTree) -> (f64, f64) {
    let (mut m1, mut m2) = (0.0f64, 0.0f64);
    walk_nodes(&tree.root, &mut |n| {
        let v = n.value().to_f64();
        m1 = m1.max(v.d1.abs());
        m2 = m2.max(v.d2.abs());
    });
    (m1, m2)
}

/// Level-1 field: a plane sawtooth whose two slopes are the witness leaves,
/// cut off at the domain boundary.
pub fn build_l1(tree: &WitnessTree, alpha: f64, h: f64, omega: &Polygon) -> Result<Field> {
    if tree.config != TopConfig::Segment {
        return Err(Error::Parameter(format!(
            "level-1 construction needs a segment witness, got {}",
            tree.config.label()
        )));
    }
    let params = Params {
        level: 1,
        alpha,
        k_list: Vec::new(),
        growth: 0.0,
        m_norm: 0.0,
        minimizers: Vec::new(),
    };
    build_general(tree, &params, h, omega)
}

/// Level-2 field over a quadrant-cell witness with a single strip count.
pub fn build_l2_rect(
    tree: &WitnessTree,
    alpha: f64,
    h: f64,
    k: u32,
    omega: &Polygon,
) -> Result<Field> {
    if tree.config != TopConfig::Quad || tree.level != 2 {
        return Err(Error::Parameter(format!(
            "expected a level-2 quadrant witness, got {} at level {}",
            tree.config.label(),
            tree.level
        )));
    }
    let params =
        Params { level: 2, alpha, k_list: vec![k], growth: 0.0, m_norm: 0.0, minimizers: vec![] };
    build_general(tree, &params, h, omega)
}

/// Level-2 field over a folded witness with a single strip count.
pub fn build_l2_tri(
    tree: &WitnessTree,
    alpha: f64,
    h: f64,
    k: u32,
    omega: &Polygon,
) -> Result<Field> {
    if tree.config != TopConfig::Fold || tree.level != 2 {
        return Err(Error::Parameter(format!(
            "expected a level-2 folded witness, got {} at level {}",
            tree.config.label(),
            tree.level
        )));
    }
    let params =
        Params { level: 2, alpha, k_list: vec![k], growth: 0.0, m_norm: 0.0, minimizers: vec![] };
    build_general(tree, &params, h, omega)
}

/// Build the laminate field of a witness tree of any level.
///
/// Dispatches on the top configuration: a leaf-only tree gives the zero
/// field, a single split the sawtooth, and level ≥ 2 trees either the
/// doubly periodic quadrant cell (both root children composite) or the
/// folded strip construction (one root child a leaf). Strip counts are
/// consumed along each refinement path in order; when `params.growth` is
/// positive the counts must respect the nesting thresholds.
pub fn build_general(
    tree: &WitnessTree,
    params: &Params,
    h: f64,
    omega: &Polygon,
) -> Result<Field> {
    if params.level != tree.level {
        return Err(Error::Parameter(format!(
            "parameter level {} does not match the witness level {}",
            params.level, tree.level
        )));
    }
    if !(params.alpha > 0.0 && params.alpha <= 1.0) {
        return Err(Error::Parameter(format!("cell exponent {} outside (0, 1]", params.alpha)));
    }
    let needed = tree.level.saturating_sub(1) as usize;
    if params.k_list.len() != needed {
        return Err(Error::Parameter(format!(
            "level {} needs exactly {} strip counts, got {}",
            tree.level,
            needed,
            params.k_list.len()
        )));
    }
    if params.k_list.iter().any(|&k| k == 0) {
        return Err(Error::Parameter("strip counts must be at least 1".into()));
    }
    if params.growth > 0.0 {
        let mut prev = 1.0;
        for (i, &k) in params.k_list.iter().enumerate() {
            if f64::from(k) <= params.growth * prev {
                return Err(Error::Parameter(format!(
                    "strip count {} of stage {} does not exceed {} times the previous count {}",
                    k,
                    i + 2,
                    params.growth,
                    prev
                )));
            }
            prev = f64::from(k);
        }
    }
    check_admissible(h, params.alpha, omega)?;
    let scale = h.powf(params.alpha);
    let ks = &params.k_list;

    let swap = match (&tree.root, tree.config) {
        (_, TopConfig::Member) => false,
        // Sawtooth and fold run along E1; the quadrant cell's root split
        // separates the two row values vertically, so it runs along E2.
        (WitnessNode::Split { dir, .. }, TopConfig::Quad) => *dir == Axis::E1,
        (WitnessNode::Split { dir, .. }, _) => *dir == Axis::E2,
        _ => false,
    };
    let ntree = normalize_node(&tree.root, swap);

    let (top, periods_n) = match tree.config {
        TopConfig::Member => (Top::Zero, [None, None]),
        TopConfig::Segment => {
            let sp = ntree.split.as_ref().expect("segment witness has a root split");
            let profile = Profile {
                x0: 0.0,
                v0: 0.0,
                t: scale,
                mu: 1.0 - sp.lambda,
                sa: sp.hi.value.d1,
                sb: sp.lo.value.d1,
            };
            let top =
                Top::Sawtooth(SawtoothTop { profile, ga: sp.hi.value, gb: sp.lo.value });
            (top, [Some(scale), None])
        }
        TopConfig::Quad => {
            let cell = build_cell_top(&ntree, ks, 2.0 * scale)?;
            (Top::Cell(Box::new(cell)), [Some(2.0 * scale), Some(2.0 * scale)])
        }
        TopConfig::Fold => {
            let fold = build_fold_top(&ntree, ks, scale)?;
            (Top::Fold(Box::new(fold)), [Some(scale), None])
        }
    };
    let periods = if swap { [periods_n[1], periods_n[0]] } else { periods_n };
    let lipschitz = if matches!(tree.config, TopConfig::Member) {
        0.0
    } else {
        let (m1, m2) = tree_component_maxima(tree);
        lipschitz_bound(m1, m2)
    };
    Ok(Field {
        top,
        swap,
        omega: Some(omega.clone()),
        lipschitz,
        periods,
        level: tree.level,
    })
}

/// Quadrant cell data from a normalized tree (root split along E2, both
/// children split along E1). The cell's slope rectangle spans the extreme
/// inner child coordinates; a quadrant whose corner value coincides with a
/// child refines directly by that child's subtree, otherwise an extra strip
/// stage splits the corner between the two children first.
fn build_cell_top(ntree: &NTree, ks: &[u32], cs: f64) -> Result<CellTop> {
    let rs = ntree.split.as_ref().expect("quad witness has a root split");
    debug_assert_eq!(rs.dir, Axis::E2);
    let (bot, top) = (&rs.lo, &rs.hi);
    let (Some(bs), Some(ts)) = (&bot.split, &top.split) else {
        return Err(Error::Parameter(
            "quadrant construction needs both root children composite".into(),
        ));
    };
    debug_assert_eq!(bs.dir, Axis::E1);
    debug_assert_eq!(ts.dir, Axis::E1);
    let m_t = top.value.d2;
    let m_b = bot.value.d2;
    let (pt, qt) = (ts.lo.value.d1, ts.hi.value.d1);
    let (pb, qb) = (bs.lo.value.d1, bs.hi.value.d1);
    let a1 = qt.min(qb);
    let a2 = pt.max(pb);
    debug_assert!(a2 < 0.0 && 0.0 < a1 && m_b < 0.0 && 0.0 < m_t);
    let sx = a2 / (a2 - a1);
    let sy = m_b / (m_b - m_t);
    let mut quads: [Plan; 4] = [Plan::Done, Plan::Done, Plan::Done, Plan::Done];
    for xp in 0..2 {
        for yp in 0..2 {
            let a = if xp == 0 { a1 } else { a2 };
            let ms = if yp == 0 { ts } else { bs };
            let dims = [
                cs * if xp == 0 { sx } else { 1.0 - sx },
                cs * if yp == 0 { sy } else { 1.0 - sy },
            ];
            let (p, q) = (ms.lo.value.d1, ms.hi.value.d1);
            let plan = if a == q {
                plan_from(&ms.hi, ks, 0, dims)?
            } else if a == p {
                plan_from(&ms.lo, ks, 0, dims)?
            } else {
                // Corner interior to the child segment: split it between
                // the two children with the adjusted weight.
                let lt = (q - a) / (q - p);
                Plan::Lam(Box::new(stage_from(Axis::E1, ks, 0, 1.0 - lt, &ms.hi, &ms.lo, dims)?))
            };
            quads[xp * 2 + yp] = plan;
        }
    }
    Ok(CellTop { size: cs, sx, sy, ax: [a1, a2], by: [m_t, m_b], quads })
}

/// Folded construction data from a normalized tree (root split along E1,
/// exactly one child a leaf).
fn build_fold_top(ntree: &NTree, ks: &[u32], scale: f64) -> Result<FoldTop> {
    let rs = ntree.split.as_ref().expect("fold witness has a root split");
    debug_assert_eq!(rs.dir, Axis::E1);
    let (leaf, mid, leaf_is_lo) = match (&rs.lo.split, &rs.hi.split) {
        (None, Some(_)) => (&rs.lo, &rs.hi, true),
        (Some(_), None) => (&rs.hi, &rs.lo, false),
        _ => {
            return Err(Error::Parameter(
                "folded construction needs exactly one composite root child".into(),
            ))
        }
    };
    let leaf_mu = if leaf_is_lo { rs.lambda } else { 1.0 - rs.lambda };
    let ms = mid.split.as_ref().expect("composite child has a split");
    debug_assert_eq!(ms.dir, Axis::E2);
    let Some(&k2) = ks.first() else {
        return Err(Error::Parameter("folded construction needs at least one strip count".into()));
    };
    let sa = ms.hi.value.d2;
    let sb = ms.lo.value.d2;
    let mu = 1.0 - ms.lambda;
    let tk = scale / f64::from(k2);
    let margin = tk * (sa - sb) * mu * (1.0 - mu);
    let strip_w = (1.0 - leaf_mu) * scale;
    let cross = strip_w - 2.0 * margin;
    let next_a = plan_from(&ms.hi, ks, 1, [cross, mu * tk])?;
    let next_b = plan_from(&ms.lo, ks, 1, [cross, (1.0 - mu) * tk])?;
    Ok(FoldTop {
        period: scale,
        leaf_mu,
        a_leaf: leaf.value.d1,
        a_mid: mid.value.d1,
        leaf_grad: leaf.value,
        tk,
        mu,
        sa,
        sb,
        ga: ms.hi.value,
        gb: ms.lo.value,
        next_a,
        next_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamhull::{extract_witness, staircase, BoxSet};
    use crate::matgeom::DiagMatQ;
    use num::{BigInt, BigRational};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn pt(x: i64, y: i64) -> DiagMatQ {
        DiagMatQ::new(q(x, 1), q(y, 1))
    }

    fn unit_square() -> Polygon {
        Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    /// Centered finite-difference gradient of a field.
    fn fd_gradient(u: &Field, p: [f64; 2], step: f64) -> [[f64; 2]; 2] {
        let vxp = u.value([p[0] + step, p[1]]);
        let vxm = u.value([p[0] - step, p[1]]);
        let vyp = u.value([p[0], p[1] + step]);
        let vym = u.value([p[0], p[1] - step]);
        [
            [(vxp[0] - vxm[0]) / (2.0 * step), (vyp[0] - vym[0]) / (2.0 * step)],
            [(vxp[1] - vxm[1]) / (2.0 * step), (vyp[1] - vym[1]) / (2.0 * step)],
        ]
    }

    fn frob(g: &[[f64; 2]; 2]) -> f64 {
        (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]).sqrt()
    }

    #[test]
    fn chi_examples_and_periodicity() {
        assert_eq!(chi(0.5, 0.25).unwrap(), 1);
        assert_eq!(chi(0.5, 0.75).unwrap(), 0);
        // Integers map to the end of the period, which is trailing phase.
        assert_eq!(chi(0.5, 1.0).unwrap(), 0);
        assert_eq!(chi(0.25, 0.25).unwrap(), 1);
        assert!(chi(0.0, 0.3).is_err());
        assert!(chi(1.0, 0.3).is_err());
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..500 {
            let mu = rng.random_range(0.05..0.95);
            let tau = rng.random_range(-20.0..20.0);
            assert_eq!(chi(mu, tau).unwrap(), chi(mu, tau + 3.0).unwrap());
        }
    }

    #[test]
    fn chi_measure_counts_leading_phase() {
        assert_eq!(chi_measure(0.0, 0.5), 0.0);
        assert_eq!(chi_measure(0.25, 0.5), 0.25);
        assert_eq!(chi_measure(0.75, 0.5), 0.5);
        assert_eq!(chi_measure(1.0, 0.5), 0.5);
        assert_eq!(chi_measure(2.5, 0.25), 0.5 + 0.25);
        // Additivity over whole periods, including negative arguments.
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..300 {
            let mu = rng.random_range(0.1..0.9);
            let u = rng.random_range(-8.0..8.0);
            let lhs = chi_measure(u + 1.0, mu);
            let rhs = chi_measure(u, mu) + mu;
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn profile_returns_to_the_mean_line_each_period() {
        let prof = Profile { x0: 0.25, v0: 1.0, t: 0.125, mu: 0.375, sa: 2.0, sb: -1.0 };
        for n in -4..8 {
            let x = 0.25 + f64::from(n) * 0.125;
            let expect = 1.0 + prof.mean() * (x - 0.25);
            assert!((prof.value(x) - expect).abs() <= 1e-13);
            assert!(prof.tent(x).abs() <= 1e-13);
        }
        // Tent peaks at the phase split with the closed-form height.
        let xpeak = 0.25 + 0.375 * 0.125;
        assert!((prof.tent(xpeak) - prof.peak()).abs() <= 1e-13);
        assert!((prof.value(xpeak) - (1.0 + prof.mean() * 0.375 * 0.125 + prof.peak())).abs() <= 1e-13);
    }

    #[test]
    fn simple_laminate_matches_hand_values() {
        let rect = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let v = Affine::linear(DiagMat::new(0.0, 0.0));
        let f = DiagMat::new(1.0, 0.0);
        let g = DiagMat::new(-1.0, 0.0);
        let w = simple_laminate(rect, v, f, g, 0.5, 4).unwrap();
        // Peak of the first tent, well inside the rectangle.
        let p = [1.0 / 16.0, 0.5];
        let val = w.value(p);
        assert!((val[0] - 1.0 / 16.0).abs() <= 1e-15);
        assert_eq!(val[1], 0.0);
        assert_eq!(w.gradient([0.03, 0.5]), Some(f));
        assert_eq!(w.gradient([0.2, 0.5]), Some(g));
        // Clipped near the transverse faces: the tent is cut by the distance.
        let val = w.value([1.0 / 16.0, 0.01]);
        assert!((val[0] - 0.01).abs() <= 1e-15);
        assert!(w.gradient([1.0 / 16.0, 0.01]).is_none());
        // Transition measure: two bands of total area T·H per period.
        assert!((w.exact_bad_measure().unwrap() - 0.125).abs() <= 1e-15);
        let w16 = simple_laminate(rect, v, f, g, 0.5, 16).unwrap();
        assert!((w16.exact_bad_measure().unwrap() - 0.125 / 4.0).abs() <= 1e-15);
    }

    #[test]
    fn simple_laminate_rejects_bad_inputs() {
        let rect = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let v = Affine::linear(DiagMat::new(0.0, 0.0));
        let f = DiagMat::new(1.0, 0.0);
        let g = DiagMat::new(-1.0, 0.0);
        assert!(simple_laminate(rect, v, f, g, 0.0, 4).is_err());
        assert!(simple_laminate(rect, v, f, g, 1.0, 4).is_err());
        assert!(simple_laminate(rect, v, f, g, 0.5, 0).is_err());
        // Gradient off the segment.
        let v_bad = Affine::linear(DiagMat::new(0.3, 0.0));
        assert!(simple_laminate(rect, v_bad, f, g, 0.5, 4).is_err());
        // Rank-two difference.
        let g2 = DiagMat::new(-1.0, 1.0);
        let v2 = Affine::linear(DiagMat::new(0.0, 0.5));
        assert!(simple_laminate(rect, v2, f, g2, 0.5, 4).is_err());
        // Coinciding endpoints.
        assert!(simple_laminate(rect, Affine::linear(f), f, f, 0.5, 4).is_err());
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn laminate_agrees_with_base_on_the_boundary() {
        let mut rng = StdRng::seed_from_u64(801);
        for _ in 0..40 {
            let grid = |rng: &mut StdRng| f64::from(rng.random_range(-8i32..=8)) / 4.0;
            let shared = grid(&mut rng);
            let (mut fa, mut gb) = (grid(&mut rng), grid(&mut rng));
            if fa == gb {
                fa += 0.25;
            }
            if fa < gb {
                std::mem::swap(&mut fa, &mut gb);
            }
            let horizontal = rng.random_bool(0.5);
            let (f, g) = if horizontal {
                (DiagMat::new(fa, shared), DiagMat::new(gb, shared))
            } else {
                (DiagMat::new(shared, fa), DiagMat::new(shared, gb))
            };
            let lambda = f64::from(rng.random_range(1i32..=7)) / 8.0;
            let w = DiagMat::new(
                lambda * f.d1 + (1.0 - lambda) * g.d1,
                lambda * f.d2 + (1.0 - lambda) * g.d2,
            );
            let off = [grid(&mut rng), grid(&mut rng)];
            let v = Affine::new(off, [w.d1, w.d2]);
            let x0 = f64::from(rng.random_range(0i32..=4)) / 2.0;
            let y0 = f64::from(rng.random_range(0i32..=4)) / 2.0;
            let (dx, dy) = (
                f64::from(rng.random_range(1i32..=8)) / 4.0,
                f64::from(rng.random_range(1i32..=8)) / 4.0,
            );
            let rect = Rect::new(x0, x0 + dx, y0, y0 + dy).unwrap();
            let k = rng.random_range(1..=6);
            let lam = simple_laminate(rect, v, f, g, lambda, k).unwrap();
            for i in 0..=20 {
                let s = f64::from(i) / 20.0;
                for p in [
                    [x0 + s * dx, y0],
                    [x0 + s * dx, y0 + dy],
                    [x0, y0 + s * dy],
                    [x0 + dx, y0 + s * dy],
                ] {
                    let lv = lam.value(p);
                    let bv = v.value(p);
                    assert!(
                        (lv[0] - bv[0]).abs() <= 1e-12 && (lv[1] - bv[1]).abs() <= 1e-12,
                        "laminate must extend the base field continuously at {p:?}"
                    );
                }
            }
            // Interior gradient audit at random points: where a gradient is
            // reported it matches finite differences and the norm bound.
            let wnorm = w.norm();
            for _ in 0..60 {
                let p = [
                    rng.random_range(rect.a..rect.b),
                    rng.random_range(rect.c..rect.d),
                ];
                if let Some(gr) = lam.gradient(p) {
                    assert!(gr == f || gr == g, "reported gradient must be an endpoint");
                    let step = (dx.min(dy) / f64::from(k)) * 1e-4;
                    // Only audit points a few steps away from kinks.
                    let fdg = fd_gradient(&lam, p, step);
                    let approx = DiagMat::new(fdg[0][0], fdg[1][1]);
                    if lam.gradient([p[0] + 2.0 * step, p[1]]) == Some(gr)
                        && lam.gradient([p[0] - 2.0 * step, p[1]]) == Some(gr)
                        && lam.gradient([p[0], p[1] + 2.0 * step]) == Some(gr)
                        && lam.gradient([p[0], p[1] - 2.0 * step]) == Some(gr)
                    {
                        assert!(approx.dist(&gr) <= 1e-6 * (1.0 + gr.norm()));
                        assert!(fdg[0][1].abs().max(fdg[1][0].abs()) <= 1e-6);
                    }
                }
                let fdg = fd_gradient(&lam, p, 1e-7);
                assert!(
                    frob(&fdg) <= 2.0 * (1.0 + wnorm) + 1e-9,
                    "slope bound violated at {p:?}"
                );
            }
        }
    }

    #[test]
    fn exact_bad_measure_matches_a_grid_estimate() {
        let rect = Rect::new(0.0, 1.5, 0.0, 0.5).unwrap();
        let f = DiagMat::new(1.5, -0.25);
        let g = DiagMat::new(-0.5, -0.25);
        let lambda = 0.25;
        let w = DiagMat::new(
            lambda * f.d1 + (1.0 - lambda) * g.d1,
            lambda * f.d2 + (1.0 - lambda) * g.d2,
        );
        for k in [1, 2, 5] {
            let lam = simple_laminate(rect, Affine::linear(w), f, g, lambda, k).unwrap();
            let exact = lam.exact_bad_measure().unwrap();
            // Independent estimate: count sample cells whose gradient is
            // neither endpoint.
            let n = 1500;
            let (dx, dy) = (1.5 / f64::from(n), 0.5 / f64::from(n));
            let mut bad = 0u64;
            for i in 0..n {
                for j in 0..n {
                    let p = [(f64::from(i) + 0.5) * dx, (f64::from(j) + 0.5) * dy];
                    match lam.gradient(p) {
                        Some(gr) if gr == f || gr == g => {}
                        _ => bad += 1,
                    }
                }
            }
            let estimate = f64::from(bad as u32) * dx * dy;
            assert!(
                (estimate - exact).abs() <= 0.01,
                "k={k}: grid {estimate} vs closed form {exact}"
            );
            // And the k-scaling bound, with the exact tent height.
            let peak_bound = lambda.min(1.0 - lambda) * (f.d1 - g.d1).abs() * 1.5 * 1.5
                / f64::from(k);
            assert!(exact <= peak_bound + 1e-12);
        }
    }

    fn segment_tree() -> WitnessTree {
        let k = BoxSet::from_points(&[pt(1, 0), pt(-1, 0)]);
        extract_witness(&k, 8).unwrap()
    }

    #[test]
    fn sawtooth_field_hand_values() {
        let tree = segment_tree();
        let om = unit_square();
        // h^alpha = 0.1.
        let u = build_l1(&tree, 0.5, 0.01, &om).unwrap();
        assert_eq!(u.level(), 1);
        assert_eq!(u.periods(), [Some(0.1), None]);
        // Rising phase: slope 1 up to the peak at the half period.
        let v = u.value([0.05, 0.5]);
        assert!((v[0] - 0.05).abs() <= 1e-15);
        assert_eq!(v[1], 0.0);
        // Zero at every period start (pre-cutoff, so no clamp involved).
        for n in 0..10 {
            let x = f64::from(n) * 0.1;
            assert!(u.value_pre_cutoff([x, 0.44])[0].abs() <= 1e-13);
        }
        // Gradient alternates between the two leaves (probed away from the
        // left edge, where the sawtooth coincides with the cutoff).
        assert_eq!(u.gradient([0.43, 0.5]), Some(DiagMat::new(1.0, 0.0)));
        assert_eq!(u.gradient([0.48, 0.5]), Some(DiagMat::new(-1.0, 0.0)));
        // Vanishes on the domain boundary; clamp kills the gradient there.
        for p in [[0.0, 0.3], [1.0, 0.7], [0.4, 0.0], [0.9, 1.0]] {
            let v = u.value(p);
            assert!(v[0].abs() <= 1e-12 && v[1].abs() <= 1e-12);
        }
        assert!(u.gradient([0.05, 0.04]).is_none(), "clamp active near the boundary");
        // Periodicity of the uncut field.
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..100 {
            let p = [rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)];
            let a = u.value_pre_cutoff(p);
            let b = u.value_pre_cutoff([p[0] + 0.1, p[1]]);
            assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
        }
    }

    fn four_corner_tree() -> WitnessTree {
        let k = BoxSet::from_points(&[pt(1, 1), pt(1, -1), pt(-1, 1), pt(-1, -1)]);
        extract_witness(&k, 8).unwrap()
    }

    /// Quad witness whose slope rectangle corners are interior points of the
    /// child segments on one side, so the quadrant plans get genuine extra
    /// stages with adjusted weights.
    fn sheared_quad_tree() -> WitnessTree {
        let k = BoxSet::from_points(&[pt(2, 1), pt(-1, 1), pt(1, -1), pt(-2, -1)]);
        extract_witness(&k, 8).unwrap()
    }

    #[test]
    fn degenerate_quad_cell_is_the_periodized_base_field() {
        let tree = four_corner_tree();
        assert_eq!(tree.config, TopConfig::Quad);
        let om = unit_square();
        // h^(1/3) = 1/8, so cells have side 1/4 and tile the square evenly.
        let h = 2.0f64.powi(-9);
        let alpha = 1.0 / 3.0;
        let u = build_l2_rect(&tree, alpha, h, 1, &om).unwrap();
        let cs = 2.0 * h.powf(alpha);
        assert!((cs - 0.25).abs() <= 1e-12);
        assert_eq!(u.periods(), [Some(cs), Some(cs)]);
        // All four corners coincide with leaves, so each quadrant is affine.
        // Probe the quadrant centers of the second cell, far enough from
        // the domain boundary that the cutoff is inactive; every gradient
        // there must be a leaf exactly, and all four leaves must appear.
        let leaves: Vec<DiagMatF> = tree.unique_leaves().iter().map(DiagMatQ::to_f64).collect();
        let mut seen = Vec::new();
        for &fx in &[0.25, 0.75] {
            for &fy in &[0.25, 0.75] {
                let p = [cs + fx * cs, cs + fy * cs];
                let got = u.gradient(p).expect("affine in the quadrant interior");
                assert!(leaves.contains(&got), "gradient {got:?} must be a leaf");
                if !seen.contains(&got) {
                    seen.push(got);
                }
            }
        }
        assert_eq!(seen.len(), 4, "each quadrant carries a different leaf");
        // The base field vanishes on the cell lattice.
        for i in 0..3 {
            for j in 0..3 {
                let p = [f64::from(i) * cs, f64::from(j) * cs];
                let v = u.value_pre_cutoff(p);
                assert!(v[0].abs() <= 1e-12 && v[1].abs() <= 1e-12);
            }
        }
        // Doubly periodic before the cutoff.
        let mut rng = StdRng::seed_from_u64(33);
        for _ in 0..200 {
            let p = [rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
            let a = u.value_pre_cutoff(p);
            for shift in [[cs, 0.0], [0.0, cs], [cs, cs]] {
                let b = u.value_pre_cutoff([p[0] + shift[0], p[1] + shift[1]]);
                assert!((a[0] - b[0]).abs() <= 1e-9 && (a[1] - b[1]).abs() <= 1e-9);
            }
        }
        // Vanishes on the domain boundary.
        for t in 0..=20 {
            let s = f64::from(t) / 20.0;
            for p in [[s, 0.0], [s, 1.0], [0.0, s], [1.0, s]] {
                let v = u.value(p);
                assert!(v[0].abs() <= 1e-12 && v[1].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sheared_quad_cell_refines_interior_corners() {
        let tree = sheared_quad_tree();
        assert_eq!(tree.level, 2);
        assert_eq!(tree.config, TopConfig::Quad);
        let om = unit_square();
        let u = build_l2_rect(&tree, 1.0 / 3.0, 0.015625, 3, &om).unwrap();
        let leaves: Vec<DiagMatF> = tree.unique_leaves().iter().map(DiagMatQ::to_f64).collect();
        // Wherever a gradient is reported deep inside the domain it is a
        // leaf, a slope-rectangle corner, or the base row value; sampled
        // leaves must actually occur.
        let corners: Vec<DiagMatF> = vec![
            DiagMat::new(1.0, 1.0),
            DiagMat::new(-1.0, 1.0),
            DiagMat::new(1.0, -1.0),
            DiagMat::new(-1.0, -1.0),
        ];
        let mut seen_leaf = 0usize;
        let mut rng = StdRng::seed_from_u64(4096);
        for _ in 0..4000 {
            let p = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
            if let Some(gr) = u.gradient(p) {
                let ok = leaves.iter().any(|l| gr.dist(l) <= 1e-9)
                    || corners.iter().any(|c| gr.dist(c) <= 1e-9);
                assert!(ok, "unexpected gradient {gr:?}");
                if leaves.iter().any(|l| gr.dist(l) <= 1e-9) {
                    seen_leaf += 1;
                }
            }
        }
        assert!(seen_leaf > 100, "leaf gradients should dominate, saw {seen_leaf}");
        // Continuity spot check across random short segments.
        for _ in 0..300 {
            let p = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
            let d: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let step = 1e-6;
            let pq = [p[0] + d[0] / n * step, p[1] + d[1] / n * step];
            let (a, b) = (u.value(p), u.value(pq));
            let diff = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!(diff <= u.lipschitz() * step * 1.01 + 1e-12);
        }
    }

    #[test]
    fn fold_field_is_odd_and_respects_its_bounds() {
        let k = staircase(3).unwrap();
        let tree = extract_witness(&k, 8).unwrap();
        assert_eq!(tree.config, TopConfig::Fold);
        let om = unit_square();
        let params = select_params(3, 0.00390625, &tree).unwrap();
        let u = build_general(&tree, &params, 0.00390625, &om).unwrap();
        let mut rng = StdRng::seed_from_u64(77);
        // The sawtooth runs along the root split axis; the field folds
        // oddly across the other one.
        let WitnessNode::Split { dir, .. } = &tree.root else { unreachable!() };
        let (sidx, oidx) = (dir.idx(), dir.other().idx());
        for _ in 0..200 {
            let p: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let mut pr = p;
            pr[oidx] = -pr[oidx];
            let a = u.value_pre_cutoff(p);
            let b = u.value_pre_cutoff(pr);
            assert!((a[sidx] - b[sidx]).abs() <= 1e-12);
            assert!((a[oidx] + b[oidx]).abs() <= 1e-12);
        }
        // Periodic along the saw axis only.
        let t = u.periods()[sidx].unwrap();
        assert!(u.periods()[oidx].is_none());
        for _ in 0..200 {
            let p: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let mut ps = p;
            ps[sidx] += t;
            let a = u.value_pre_cutoff(p);
            let b = u.value_pre_cutoff(ps);
            assert!((a[0] - b[0]).abs() <= 1e-10 && (a[1] - b[1]).abs() <= 1e-10);
        }
        // Vanishes on the boundary; finite differences respect the metadata
        // bound everywhere.
        for t in 0..=20 {
            let s = f64::from(t) / 20.0;
            for p in [[s, 0.0], [s, 1.0], [0.0, s], [1.0, s]] {
                let v = u.value(p);
                assert!(v[0].abs() <= 1e-12 && v[1].abs() <= 1e-12);
            }
        }
        for _ in 0..2000 {
            let p = [rng.random_range(0.001..0.999), rng.random_range(0.001..0.999)];
            let fdg = fd_gradient(&u, p, 1e-8);
            assert!(frob(&fdg) <= u.lipschitz() + 1e-5, "at {p:?}: {}", frob(&fdg));
        }
    }

    #[test]
    fn build_general_matches_the_level_wrappers() {
        let om = unit_square();
        let mut rng = StdRng::seed_from_u64(9001);

        let tree = four_corner_tree();
        let params = Params {
            level: 2,
            alpha: 1.0 / 3.0,
            k_list: vec![5],
            growth: 0.0,
            m_norm: 0.0,
            minimizers: vec![],
        };
        let a = build_l2_rect(&tree, 1.0 / 3.0, 0.03125, 5, &om).unwrap();
        let b = build_general(&tree, &params, 0.03125, &om).unwrap();
        for _ in 0..300 {
            let p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            assert_eq!(a.value(p), b.value(p));
        }

        let seg = segment_tree();
        let p1 = Params {
            level: 1,
            alpha: 0.5,
            k_list: vec![],
            growth: 0.0,
            m_norm: 0.0,
            minimizers: vec![],
        };
        let a = build_l1(&seg, 0.5, 0.01, &om).unwrap();
        let b = build_general(&seg, &p1, 0.01, &om).unwrap();
        for _ in 0..100 {
            let p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            assert_eq!(a.value(p), b.value(p));
        }
    }

    #[test]
    fn member_tree_gives_the_zero_field() {
        let k = BoxSet::from_points(&[pt(0, 0), pt(3, 4)]);
        let tree = extract_witness(&k, 8).unwrap();
        assert_eq!(tree.config, TopConfig::Member);
        let params = Params {
            level: 0,
            alpha: 0.5,
            k_list: vec![],
            growth: 0.0,
            m_norm: 0.0,
            minimizers: vec![],
        };
        let u = build_general(&tree, &params, 0.25, &unit_square()).unwrap();
        assert_eq!(u.value([0.3, 0.7]), [0.0, 0.0]);
        assert_eq!(u.lipschitz(), 0.0);
        assert_eq!(u.gradient([0.5, 0.5]), Some(DiagMat::new(0.0, 0.0)));
    }

    #[test]
    fn select_params_examples() {
        let seg = segment_tree();
        let p = select_params(1, 0.01, &seg).unwrap();
        assert_eq!(p.alpha, 0.5);
        assert!(p.k_list.is_empty());

        // Level 2 at h = 1e-4: minimizer h^{-(1-α)/2} = h^{-1/3} ≈ 21.54,
        // floored and incremented to 22; the growth bump (Λ = √2 / (1/2))
        // does not bite.
        let quad = four_corner_tree();
        let p = select_params(2, 1e-4, &quad).unwrap();
        assert!((p.alpha - 1.0 / 3.0).abs() <= 1e-15);
        assert_eq!(p.k_list, vec![22]);
        assert!((p.minimizers[0] - 1e4f64.powf(1.0 / 3.0)).abs() <= 1e-9);
        assert!((p.growth - 2.0 * 2.0f64.sqrt()).abs() <= 1e-12);

        // Level 3: α = 1/4 and the counts respect the growth thresholds.
        let k3 = staircase(3).unwrap();
        let tree = extract_witness(&k3, 8).unwrap();
        let p = select_params(3, 2.0f64.powi(-8), &tree).unwrap();
        assert_eq!(p.alpha, 0.25);
        assert_eq!(p.k_list.len(), 2);
        let mut prev = 1.0;
        for &k in &p.k_list {
            assert!(f64::from(k) > p.growth * prev);
            prev = f64::from(k);
        }

        assert!(select_params(2, 1.5, &quad).is_err());
        assert!(select_params(1, 1e-4, &quad).is_err());
    }

    #[test]
    fn build_rejects_inadmissible_or_inconsistent_inputs() {
        let quad = four_corner_tree();
        let om = unit_square();
        // Too few strip counts.
        let bad = Params {
            level: 2,
            alpha: 1.0 / 3.0,
            k_list: vec![],
            growth: 0.0,
            m_norm: 0.0,
            minimizers: vec![],
        };
        assert!(matches!(build_general(&quad, &bad, 0.01, &om), Err(Error::Parameter(_))));
        // Growth threshold violated.
        let bad = Params {
            level: 2,
            alpha: 1.0 / 3.0,
            k_list: vec![2],
            growth: 2.0 * 2.0f64.sqrt(),
            m_norm: 2.0f64.sqrt(),
            minimizers: vec![],
        };
        assert!(matches!(build_general(&quad, &bad, 0.01, &om), Err(Error::Parameter(_))));
        // Cell scale exceeding the domain diameter: h^α = 0.9^(1/3) ≈ 0.96
        // against a domain of diameter ≈ 0.14.
        let tiny = Polygon::rectangle(0.0, 0.0, 0.1, 0.1).unwrap();
        let p = Params {
            level: 2,
            alpha: 1.0 / 3.0,
            k_list: vec![4],
            growth: 0.0,
            m_norm: 0.0,
            minimizers: vec![],
        };
        assert!(matches!(build_general(&quad, &p, 0.9, &tiny), Err(Error::Admissibility(_))));
        // Level mismatch between tree and parameters.
        let seg = segment_tree();
        assert!(matches!(build_general(&seg, &p, 0.01, &om), Err(Error::Parameter(_))));
        // Wrapper shape checks.
        assert!(build_l2_tri(&quad, 0.5, 0.01, 3, &om).is_err());
        assert!(build_l1(&quad, 0.5, 0.01, &om).is_err());
    }

    #[test]
    fn strip_layout_intervals_tile_the_strip() {
        let layout = StripLayout { dir: Axis::E1, k: 3, mu: 0.25, period: 0.5, margin: 0.1 };
        let (a0, b0) = layout.interval(0, true);
        let (c0, d0) = layout.interval(0, false);
        assert_eq!((a0, b0), (0.0, 0.125));
        assert_eq!((c0, d0), (0.125, 0.5));
        let (a1, _) = layout.interval(1, true);
        assert_eq!(a1, 0.5);
    }
}
