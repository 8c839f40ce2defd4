//! Straight segments under `H`: cutting at square edges and seams, the
//! decomposition of a returning segment, rational spacing, the growth
//! inequalities, and a direct expansion certificate.

use rand::Rng;

use crate::dynamics::TwistSystem;
use crate::error::{Error, Result};
use crate::geometry::{Annular, Region, TrackGeometry, TrackPoint};

const MIN_PIECE: f64 = 1e-12;
const CROSSING_TOL: f64 = 1e-9;

/// An oriented straight segment. The anchor is wrapped into the loop; the far
/// end `anchor + length·direction` may run past `ℓ` (universal cover).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSegment {
    pub anchor: TrackPoint,
    pub direction: [f64; 2],
    pub length: f64,
    pub l_v: f64,
    pub l_h: f64,
}

impl LinearSegment {
    /// Segment between two annular points of the cover.
    pub fn between(g: &TrackGeometry, a: Annular, b: Annular) -> Self {
        let (ds, du) = (b.s - a.s, b.u - a.u);
        let length = ds.hypot(du);
        let direction = if length > 0.0 { [ds / length, du / length] } else { [1.0, 0.0] };
        let wrapped = g.wrap_s(a.s);
        let anchor = TrackPoint { chart: crate::geometry::Chart::Unfolded, x: wrapped, y: g.y0 + a.u, region: g.region_at(wrapped) };
        Self { anchor, direction, length, l_v: du.abs(), l_h: ds.abs() }
    }

    pub fn start(&self, g: &TrackGeometry) -> Annular {
        Annular::new(self.anchor.x, self.anchor.y - g.y0)
    }

    pub fn end(&self, g: &TrackGeometry) -> Annular {
        let a = self.start(g);
        Annular::new(a.s + self.length * self.direction[0], a.u + self.length * self.direction[1])
    }

    fn seg(&self, g: &TrackGeometry) -> Seg {
        Seg { a: self.start(g), b: self.end(g) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Seg {
    a: Annular,
    b: Annular,
}

impl Seg {
    fn lv(&self) -> f64 {
        (self.b.u - self.a.u).abs()
    }
    fn lh(&self) -> f64 {
        (self.b.s - self.a.s).abs()
    }
    fn len(&self) -> f64 {
        (self.b.s - self.a.s).hypot(self.b.u - self.a.u)
    }
    fn mid(&self) -> Annular {
        Annular::new(0.5 * (self.a.s + self.b.s), 0.5 * (self.a.u + self.b.u))
    }
    fn at(&self, t: f64) -> Annular {
        Annular::new(self.a.s + t * (self.b.s - self.a.s), self.a.u + t * (self.b.u - self.a.u))
    }
    fn map(&self, f: impl Fn(Annular) -> Annular) -> Seg {
        Seg { a: f(self.a), b: f(self.b) }
    }
}

/// Parameters in `(0, 1)` where the segment crosses `s = c + jℓ` for any of
/// the given loop positions.
fn crossing_params(l: f64, cuts: &[f64], seg: &Seg) -> Vec<f64> {
    let (s0, s1) = (seg.a.s, seg.b.s);
    let (lo, hi) = (s0.min(s1), s0.max(s1));
    let mut ts = Vec::new();
    if hi - lo <= 0.0 {
        return ts;
    }
    let j0 = (lo / l).floor() as i64 - 1;
    let j1 = (hi / l).floor() as i64 + 1;
    for j in j0..=j1 {
        for &c in cuts {
            let x = j as f64 * l + c;
            if x > lo && x < hi {
                ts.push((x - s0) / (s1 - s0));
            }
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts
}

/// Cuts a cover segment at every cell boundary and wraps each piece into the
/// loop.
fn cut_cells(g: &TrackGeometry, seg: &Seg) -> Vec<Seg> {
    let mut ts = vec![0.0];
    ts.extend(crossing_params(g.track_length, &g.cut_points(), seg));
    ts.push(1.0);
    let mut out = Vec::with_capacity(ts.len());
    for w in ts.windows(2) {
        let piece = Seg { a: seg.at(w[0]), b: seg.at(w[1]) };
        if piece.len() < MIN_PIECE {
            continue;
        }
        let shift = (piece.mid().s / g.track_length).floor() * g.track_length;
        out.push(piece.map(|p| Annular::new(p.s - shift, p.u)));
    }
    out
}

fn region_of(g: &TrackGeometry, seg: &Seg) -> Region {
    g.region_at(seg.mid().s)
}

fn twist_cover(alpha: f64, p: Annular) -> Annular {
    Annular::new(p.s + alpha * p.u, p.u)
}

/// Pieces of one `H` step, split by crossing.
#[derive(Debug, Clone, Default)]
struct StepOutcome {
    f_images: Vec<Seg>,
    after_f: Vec<Seg>,
    g_images: Vec<Seg>,
    after_h: Vec<Seg>,
}

fn swap_layer(g: &TrackGeometry, p: Seg) -> Seg {
    match region_of(g, &p) {
        Region::SquareS1 => p.map(|q| g.s1_to_s2(q)),
        Region::SquareS2 => p.map(|q| g.s2_to_s1(q)),
        _ => p,
    }
}

/// One crossing: twist every piece, cut at the cells, change layer.
fn cross_pieces(sys: &TwistSystem, pieces: &[Seg], images: &mut Vec<Seg>, out: &mut Vec<Seg>) {
    let g = &sys.geom;
    let alpha = sys.alpha();
    for p in pieces {
        let img = p.map(|q| twist_cover(alpha, q));
        images.push(img);
        out.extend(cut_cells(g, &img).into_iter().map(|c| swap_layer(g, c)));
    }
}

fn step_pieces(sys: &TwistSystem, pieces: &[Seg]) -> StepOutcome {
    step_pieces_pruned(sys, pieces, usize::MAX)
}

/// Two crossings, keeping at most `keep` pieces between them.
fn step_pieces_pruned(sys: &TwistSystem, pieces: &[Seg], keep: usize) -> StepOutcome {
    let mut out = StepOutcome::default();
    cross_pieces(sys, pieces, &mut out.f_images, &mut out.after_f);
    let mid = prune(&sys.geom, out.after_f.clone(), keep);
    cross_pieces(sys, &mid, &mut out.g_images, &mut out.after_h);
    out
}

fn crossing_extent(g: &TrackGeometry, p: &Seg) -> f64 {
    planar_extents(g, p).map_or(0.0, |(h, v)| h.max(v))
}

/// Keeps the `keep` best pieces: crossings of `S` first, then by length.
fn prune(g: &TrackGeometry, mut pieces: Vec<Seg>, keep: usize) -> Vec<Seg> {
    if pieces.len() <= keep {
        return pieces;
    }
    let full = g.width_w * (1.0 - CROSSING_TOL);
    let key = |p: &Seg| (crossing_extent(g, p) >= full, p.len());
    pieces.sort_by(|a, b| key(b).partial_cmp(&key(a)).unwrap());
    pieces.truncate(keep);
    pieces
}

/// Cuts an arbitrary segment of the track into cell pieces.
fn cell_pieces(g: &TrackGeometry, seg: &Seg) -> Vec<Seg> {
    cut_cells(g, seg)
}

/// Extents `(l_h, l_v)` of a square piece in the planar coordinates of `S`.
fn planar_extents(g: &TrackGeometry, p: &Seg) -> Option<(f64, f64)> {
    match region_of(g, p) {
        Region::SquareS1 => Some((p.lh(), p.lv())),
        Region::SquareS2 => Some((p.lv(), p.lh())),
        _ => None,
    }
}

/// Image of a segment under `H`, cut into maximal straight pieces.
pub fn iterate_segment(s: &LinearSegment, sys: &TwistSystem) -> Vec<LinearSegment> {
    let g = &sys.geom;
    let pieces = cell_pieces(g, &s.seg(g));
    step_pieces(sys, &pieces).after_h.iter().map(|p| LinearSegment::between(g, p.a, p.b)).collect()
}

/// Image under a single shear of the track, cut at the cells, before the
/// change of layer.
pub fn iterate_segment_f(s: &LinearSegment, sys: &TwistSystem) -> Vec<LinearSegment> {
    let g = &sys.geom;
    let img = s.seg(g).map(|q| twist_cover(sys.alpha(), q));
    cut_cells(g, &img).iter().map(|p| LinearSegment::between(g, p.a, p.b)).collect()
}

// ---------------------------------------------------------------------------
// Decomposition of a return

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnCase {
    /// Wholly inside one square.
    Inside,
    /// Lobe part plus one square, across a single edge.
    OneSquare,
    /// Square, lobe, square.
    TwoSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDecomposition {
    pub case: ReturnCase,
    pub i1: Option<LinearSegment>,
    pub i2_prime: Option<LinearSegment>,
    pub i2_doubleprime: Option<LinearSegment>,
    pub i3: Option<LinearSegment>,
    pub i4: Option<LinearSegment>,
    /// Rational spacing used for the split of `I2`, one-square case only.
    pub spacing: Option<Spacing>,
}

fn lv(p: &Option<LinearSegment>) -> f64 {
    p.map_or(0.0, |s| s.l_v)
}

fn lh(p: &Option<LinearSegment>) -> f64 {
    p.map_or(0.0, |s| s.l_h)
}

impl SegmentDecomposition {
    pub fn pieces(&self) -> [Option<LinearSegment>; 5] {
        [self.i1, self.i2_prime, self.i2_doubleprime, self.i3, self.i4]
    }

    /// `I2 = I2′ ⊔ I2″`, as extents.
    pub fn i2_extents(&self) -> (f64, f64) {
        (lv(&self.i2_prime) + lv(&self.i2_doubleprime), lh(&self.i2_prime) + lh(&self.i2_doubleprime))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coarse {
    Square,
    Lobe,
}

/// Splits a return segment by the square edges of the cover.
fn coarse_pieces(g: &TrackGeometry, seg: &Seg) -> Vec<(Seg, Coarse)> {
    let edges = [g.le1(), g.re1(), g.le2(), g.re2()];
    let mut ts = vec![0.0];
    ts.extend(crossing_params(g.track_length, &edges, seg));
    ts.push(1.0);
    ts.windows(2)
        .map(|w| Seg { a: seg.at(w[0]), b: seg.at(w[1]) })
        .filter(|p| p.len() >= MIN_PIECE)
        .map(|p| {
            let kind = if g.region_at(p.mid().s).is_square() { Coarse::Square } else { Coarse::Lobe };
            (p, kind)
        })
        .collect()
}

/// Labels the parts of a returning segment.
///
/// For a one-square return the lobe part is divided `I1 : I2 : I3` in the
/// ratio `3/(2α+L) : 2/α : 1/(α+L)` with `I3` against the crossed edge, and
/// `I2` is cut at its first rational point `α·u ∈ (1/q)ℤ`.
pub fn decompose_return(s: &LinearSegment, sys: &TwistSystem) -> Result<SegmentDecomposition> {
    let g = &sys.geom;
    let seg = s.seg(g);
    let parts = coarse_pieces(g, &seg);
    let mk = |p: &Seg| Some(LinearSegment::between(g, p.a, p.b));
    let empty = SegmentDecomposition {
        case: ReturnCase::Inside,
        i1: None,
        i2_prime: None,
        i2_doubleprime: None,
        i3: None,
        i4: None,
        spacing: None,
    };
    let kinds: Vec<Coarse> = parts.iter().map(|p| p.1).collect();
    match kinds.as_slice() {
        [Coarse::Square] => Ok(SegmentDecomposition { i1: Some(*s), ..empty }),
        [Coarse::Square, Coarse::Lobe, Coarse::Square] => Ok(SegmentDecomposition {
            case: ReturnCase::TwoSquares,
            i1: mk(&parts[0].0),
            i2_prime: mk(&parts[1].0),
            i3: mk(&parts[2].0),
            ..empty
        }),
        [Coarse::Lobe, Coarse::Square] | [Coarse::Square, Coarse::Lobe] => {
            let (lobe, square) = if kinds[0] == Coarse::Lobe { (parts[0].0, parts[1].0) } else { (parts[1].0, parts[0].0) };
            // orient the lobe part so it runs from the far end to the crossed edge
            let lobe = if kinds[0] == Coarse::Lobe { lobe } else { Seg { a: lobe.b, b: lobe.a } };
            let alpha = sys.alpha();
            let l = sys.shear.l_ratio;
            let w = [3.0 / (2.0 * alpha + l), 2.0 / alpha, 1.0 / (alpha + l)];
            let total: f64 = w.iter().sum();
            let t1 = w[0] / total;
            let t2 = (w[0] + w[1]) / total;
            let i1 = Seg { a: lobe.a, b: lobe.at(t1) };
            let i2 = Seg { a: lobe.at(t1), b: lobe.at(t2) };
            let i3 = Seg { a: lobe.at(t2), b: lobe.b };
            let spacing = rational_spacing(alpha, i2.lv())?;
            let tp = rational_point(alpha, spacing.q, &i2);
            let (i2p, i2pp) = (Seg { a: i2.a, b: i2.at(tp) }, Seg { a: i2.at(tp), b: i2.b });
            let nonempty = |p: &Seg| if p.len() >= MIN_PIECE { mk(p) } else { None };
            Ok(SegmentDecomposition {
                case: ReturnCase::OneSquare,
                i1: nonempty(&i1),
                i2_prime: nonempty(&i2p),
                i2_doubleprime: nonempty(&i2pp),
                i3: nonempty(&i3),
                i4: mk(&square),
                spacing: Some(spacing),
            })
        }
        _ => Err(Error::UnclassifiedReturn),
    }
}

/// Parameter of the first point of `seg` with `α·u` a multiple of `1/q`.
fn rational_point(alpha: f64, q: u64, seg: &Seg) -> f64 {
    let (x0, x1) = (alpha * seg.a.u, alpha * seg.b.u);
    if (x1 - x0).abs() < f64::MIN_POSITIVE {
        return 0.0;
    }
    let qf = q as f64;
    let target = if x1 > x0 { (x0 * qf).ceil() / qf } else { (x0 * qf).floor() / qf };
    ((target - x0) / (x1 - x0)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Rational spacing and growth conditions

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing {
    pub d: f64,
    pub q: u64,
    /// `α·l_v ≥ 1`: the piece already winds a full loop.
    pub trivial: bool,
}

/// Spacing `d = 1/q` of the rational orbit lattice seen by a piece of
/// vertical extent `lv`: `1/q < α·lv ≤ 1/(q−1)`.
pub fn rational_spacing(alpha: f64, lv: f64) -> Result<Spacing> {
    let x = alpha * lv;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Parameter(format!("rational spacing needs α·l_v > 0, got {x}")));
    }
    if x >= 1.0 {
        return Ok(Spacing { d: 1.0, q: 1, trivial: true });
    }
    let mut q = (1.0 / x).floor() as u64 + 1;
    while q > 2 && !(x <= 1.0 / (q - 1) as f64) {
        q -= 1;
    }
    while !(1.0 / (q as f64) < x) {
        q += 1;
    }
    Ok(Spacing { d: 1.0 / q as f64, q, trivial: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: &'static str,
    pub holds: bool,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub delta: f64,
    pub conditions: Vec<Condition>,
    /// All four conditions in the one-square case, any one in the two-square case.
    pub satisfied: bool,
}

impl GrowthReport {
    pub fn min_slack(&self) -> f64 {
        self.conditions.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min)
    }
    pub fn max_slack(&self) -> f64 {
        self.conditions.iter().map(|c| c.slack).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("growth factor δ must exceed 1, got {delta}")))
    }
}

fn cond(name: &'static str, lhs: f64, rhs: f64) -> Condition {
    Condition { name, holds: lhs >= rhs, slack: lhs - rhs }
}

pub fn check_growth_single(dec: &SegmentDecomposition, gamma_lv: f64, alpha: f64, delta: f64) -> Result<GrowthReport> {
    check_delta(delta)?;
    if dec.case != ReturnCase::OneSquare {
        return Err(Error::Parameter("one-square growth check needs a one-square decomposition".into()));
    }
    let (i2_lv, _) = dec.i2_extents();
    let d = if i2_lv > 0.0 { rational_spacing(alpha, i2_lv)?.d } else { 0.0 };
    let g = gamma_lv;
    let conditions = vec![
        cond("spacing", d, 2.0 * delta * g),
        cond("vertical_tail", alpha * (lv(&dec.i2_doubleprime) + lv(&dec.i3)), delta * g),
        cond(
            "head",
            alpha * (lv(&dec.i1) + lv(&dec.i2_prime)) + lh(&dec.i1) + lh(&dec.i2_prime),
            3.0 * delta * g,
        ),
        cond("horizontal_tail", lh(&dec.i2_doubleprime) + lh(&dec.i3), delta * g),
    ];
    let satisfied = conditions.iter().all(|c| c.holds);
    Ok(GrowthReport { delta, conditions, satisfied })
}

/// Horizontal extent of the `H`-image of a piece, summed over its cut pieces.
fn image_lh(sys: &TwistSystem, s: &LinearSegment) -> f64 {
    iterate_segment(s, sys).iter().map(|p| p.l_h).sum()
}

pub fn check_growth_double(dec: &SegmentDecomposition, gamma_lv: f64, sys: &TwistSystem, delta: f64) -> Result<GrowthReport> {
    check_delta(delta)?;
    if dec.case != ReturnCase::TwoSquares {
        return Err(Error::Parameter("two-square growth check needs a two-square decomposition".into()));
    }
    let g = gamma_lv;
    let i2 = dec.i2_prime;
    let grown = i2.map_or(0.0, |s| image_lh(sys, &s) - s.l_h);
    let conditions = vec![
        cond("first_square", lh(&dec.i1), delta * g),
        cond("second_square", lh(&dec.i3), delta * g),
        cond("lobe_increment", grown, 2.0 * delta * g),
    ];
    let satisfied = conditions.iter().any(|c| c.holds);
    Ok(GrowthReport { delta, conditions, satisfied })
}

pub const DELTA_GRID: (f64, f64, usize) = (1.0001, 2.0, 200);

pub fn delta_grid() -> impl Iterator<Item = f64> {
    let (lo, hi, n) = DELTA_GRID;
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Largest grid `δ` at which the growth check of a return holds, with its
/// report. Every slack falls as `δ` grows, so this is also where the binding
/// slack is closest to zero from above.
pub fn best_delta(dec: &SegmentDecomposition, gamma_lv: f64, sys: &TwistSystem) -> Result<Option<GrowthReport>> {
    let mut best = None;
    for delta in delta_grid() {
        let r = match dec.case {
            ReturnCase::OneSquare => check_growth_single(dec, gamma_lv, sys.alpha(), delta)?,
            ReturnCase::TwoSquares => check_growth_double(dec, gamma_lv, sys, delta)?,
            ReturnCase::Inside => return Ok(None),
        };
        if r.satisfied {
            best = Some(r);
        } else {
            break;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Expansion certificate

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    /// Crosses `S` from bottom to top.
    Vertical,
    /// Crosses `S` from its left edge to its right edge.
    Horizontal,
}

/// Longest crossings seen at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSummary {
    pub longest_h_in_square: f64,
    pub longest_v_in_square: f64,
    pub has_h: bool,
    pub has_v: bool,
}

/// A pruned family of pieces of `Hⁿ(γ)`.
#[derive(Debug, Clone)]
pub struct SegmentFamily<'a> {
    sys: &'a TwistSystem,
    pieces: Vec<Seg>,
    keep: usize,
    last: Option<StepOutcome>,
}

impl<'a> SegmentFamily<'a> {
    pub fn new(sys: &'a TwistSystem, gamma: &LinearSegment, keep: usize) -> Self {
        let pieces = cell_pieces(&sys.geom, &gamma.seg(&sys.geom));
        Self { sys, pieces, keep: keep.max(1), last: None }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Advances one step of `H`. Crossings of `S` are looked for after each
    /// of its two shears.
    pub fn step(&mut self) -> StageSummary {
        let g = &self.sys.geom;
        let full = g.width_w * (1.0 - CROSSING_TOL);
        let out = step_pieces_pruned(self.sys, &self.pieces, self.keep);
        let (mut longest_h, mut longest_v) = (0.0f64, 0.0f64);
        for p in out.after_f.iter().chain(out.after_h.iter()) {
            if let Some((h, v)) = planar_extents(g, p) {
                longest_h = longest_h.max(h);
                longest_v = longest_v.max(v);
            }
        }
        let next = prune(g, out.after_h.clone(), self.keep);
        self.pieces = next;
        self.last = Some(out);
        StageSummary {
            longest_h_in_square: longest_h,
            longest_v_in_square: longest_v,
            has_h: longest_h >= full,
            has_v: longest_v >= full,
        }
    }

    /// Straight (uncut) images of the last step, for locating returns.
    pub fn last_images(&self) -> Vec<LinearSegment> {
        let g = &self.sys.geom;
        self.last
            .iter()
            .flat_map(|o| o.f_images.iter().chain(o.g_images.iter()))
            .map(|p| LinearSegment::between(g, p.a, p.b))
            .collect()
    }

    pub fn pieces(&self) -> Vec<LinearSegment> {
        let g = &self.sys.geom;
        self.pieces.iter().map(|p| LinearSegment::between(g, p.a, p.b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub iterations: usize,
    pub kind: SegmentKind,
    /// Ratio of successive longest crossings into `S`.
    pub growth_factors: Vec<f64>,
    /// `(longest final crossing / l_v(γ))^(1/n)`.
    pub mean_growth: f64,
    /// Largest admissible `δ` at the first classified return, if any.
    pub best_delta: Option<f64>,
}

pub const DEFAULT_KEEP: usize = 64;

pub fn certify_expansion(gamma: &LinearSegment, sys: &TwistSystem, max_iters: usize) -> Result<Certificate> {
    certify_expansion_with(gamma, sys, max_iters, DEFAULT_KEEP)
}

pub fn certify_expansion_with(gamma: &LinearSegment, sys: &TwistSystem, max_iters: usize, keep: usize) -> Result<Certificate> {
    if !(sys.alpha() > 2.0) {
        return Err(Error::Parameter(format!("certificate needs α > 2, got {}", sys.alpha())));
    }
    let g = &sys.geom;
    if !(g.region_at(gamma.anchor.x).is_square() && gamma.l_v > 0.0) {
        return Err(Error::Parameter("γ must start in S with positive vertical extent".into()));
    }
    let reference = gamma.l_v;
    let mut family = SegmentFamily::new(sys, gamma, keep);
    let mut growth = Vec::new();
    let mut prev = reference;
    let mut best_delta = None;
    let mut classified = false;
    for n in 1..=max_iters {
        let st = family.step();
        if !classified {
            for img in family.last_images() {
                if let Ok(dec) = decompose_return(&img, sys) {
                    if dec.case != ReturnCase::Inside {
                        classified = true;
                        best_delta = best_delta_of(&dec, reference, sys);
                        break;
                    }
                }
            }
        }
        let m = st.longest_v_in_square.max(st.longest_h_in_square);
        if m > 0.0 && prev > 0.0 {
            growth.push(m / prev);
        }
        if m > 0.0 {
            prev = m;
        }
        if st.has_h || st.has_v {
            let kind = if st.has_h { SegmentKind::Horizontal } else { SegmentKind::Vertical };
            let mean_growth = (m / reference).powf(1.0 / n as f64);
            if mean_growth > 1.0 {
                return Ok(Certificate { iterations: n, kind, growth_factors: growth, mean_growth, best_delta });
            }
        }
    }
    Err(Error::NoCertificate(max_iters))
}

fn best_delta_of(dec: &SegmentDecomposition, reference: f64, sys: &TwistSystem) -> Option<f64> {
    best_delta(dec, reference, sys).ok().flatten().map(|r| r.delta)
}

/// Steps for which both an `h` and a `v` crossing are present, over `steps`
/// further iterations of a family that already holds a `v` crossing.
pub fn crossings_persist(family: &mut SegmentFamily<'_>, steps: usize) -> usize {
    (0..steps).take_while(|_| {
        let st = family.step();
        st.has_h && st.has_v
    }).count()
}

/// A thin segment in `S` along the expanding direction `(L, 1)`, with
/// vertical extent a fraction of `w` drawn from `lv_fraction`.
pub fn random_unstable_segment<R: Rng>(rng: &mut R, sys: &TwistSystem, lv_fraction: (f64, f64)) -> LinearSegment {
    let g = &sys.geom;
    let w = g.width_w;
    let l = sys.shear.l_ratio;
    let lv = w * rng.gen_range(lv_fraction.0..lv_fraction.1);
    let lh = l.abs() * lv;
    let u0 = rng.gen_range(0.0..(w - lv));
    let s0 = g.le1() + lh + rng.gen::<f64>() * (w - lh) * (1.0 - 1e-9);
    LinearSegment::between(g, Annular::new(s0, u0), Annular::new(s0 + l * lv, u0 + lv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sys7() -> TwistSystem {
        TwistSystem::with_winding(7.0, 2).unwrap()
    }

    #[test]
    fn spacing_examples() {
        let s = rational_spacing(7.0, 0.01).unwrap();
        assert_eq!(s.q, 15);
        assert!((s.d - 1.0 / 15.0).abs() < 1e-15);
        assert!(1.0 / 15.0 < 0.07 && 0.07 <= 1.0 / 14.0);
        assert_eq!(rational_spacing(1.0, 0.5).unwrap().q, 3);
        assert_eq!(rational_spacing(1.0, 1.0 / 3.0).unwrap().q, 4);
        let t = rational_spacing(7.0, 0.2).unwrap();
        assert!(t.trivial && t.q == 1 && t.d == 1.0);
        assert!(rational_spacing(7.0, 0.0).is_err());
    }

    #[test]
    fn bottom_edge_lobe_segment_is_fixed() {
        let sys = sys7();
        let g = &sys.geom;
        let s = LinearSegment::between(g, Annular::new(0.01, 0.0), Annular::new(0.09, 0.0));
        let out = iterate_segment(&s, &sys);
        assert_eq!(out.len(), 1);
        assert!((out[0].start(g).s - 0.01).abs() < 1e-15 && (out[0].l_h - 0.08).abs() < 1e-15);
    }

    #[test]
    fn vertical_segment_through_square_under_f() {
        let sys = TwistSystem::with_winding(3.0, 1).unwrap();
        let g = &sys.geom;
        let x = g.le1() + 0.4 * g.width_w;
        let s = LinearSegment::between(g, Annular::new(x, 0.0), Annular::new(x, g.width_w));
        let pieces = iterate_segment_f(&s, &sys);
        let lh: f64 = pieces.iter().map(|p| p.l_h).sum();
        let lv: f64 = pieces.iter().map(|p| p.l_v).sum();
        assert!((lh - 3.0 * g.width_w).abs() < 1e-12);
        assert!((lv - g.width_w).abs() < 1e-12);
        for p in &pieces {
            assert!((p.direction[0] / p.direction[1] - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn inside_square_decomposition() {
        let sys = sys7();
        let g = &sys.geom;
        let s = LinearSegment::between(g, Annular::new(g.le1() + 0.05, 0.01), Annular::new(g.le1() + 0.1, 0.2));
        let d = decompose_return(&s, &sys).unwrap();
        assert_eq!(d.case, ReturnCase::Inside);
        assert_eq!(d.i1, Some(s));
        assert!(d.i2_prime.is_none() && d.i3.is_none() && d.i4.is_none());
    }

    #[test]
    fn two_square_decomposition() {
        let sys = sys7();
        let g = &sys.geom;
        // from inside S1 across the upper lobe into S2
        let a = Annular::new(g.re1() - 0.05, 0.02);
        let b = Annular::new(g.le2() + 0.05, 0.25);
        let s = LinearSegment::between(g, a, b);
        let d = decompose_return(&s, &sys).unwrap();
        assert_eq!(d.case, ReturnCase::TwoSquares);
        assert!(d.i1.is_some() && d.i2_prime.is_some() && d.i3.is_some() && d.i4.is_none());
        let sum_lv: f64 = d.pieces().iter().map(lv).sum();
        let sum_lh: f64 = d.pieces().iter().map(lh).sum();
        assert!((sum_lv - s.l_v).abs() < 1e-12 && (sum_lh - s.l_h).abs() < 1e-12);
    }

    #[test]
    fn one_square_decomposition() {
        let sys = sys7();
        let g = &sys.geom;
        let a = Annular::new(g.le1() - 0.09, 0.01);
        let b = Annular::new(g.le1() + 0.03, 0.07);
        let s = LinearSegment::between(g, a, b);
        let d = decompose_return(&s, &sys).unwrap();
        assert_eq!(d.case, ReturnCase::OneSquare);
        let sum_lv: f64 = d.pieces().iter().map(lv).sum();
        assert!((sum_lv - s.l_v).abs() < 1e-12);
        let i4 = d.i4.unwrap();
        assert!((i4.l_h - 0.03).abs() < 1e-12);
        // the I2 cut sits on the rational lattice
        let cut = d.i2_doubleprime.unwrap().start(g);
        let q = d.spacing.unwrap().q as f64;
        let x = 7.0 * cut.u * q;
        assert!((x - x.round()).abs() < 1e-9);
        let far = LinearSegment::between(g, Annular::new(0.01, 0.0), Annular::new(0.9, 0.2));
        assert_eq!(decompose_return(&far, &sys), Err(Error::UnclassifiedReturn));
    }

    #[test]
    fn v_segment_gives_h_then_v() {
        let sys = sys7();
        let g = &sys.geom;
        let x = g.le1() + 0.3 * g.width_w;
        let v = LinearSegment::between(g, Annular::new(x, 0.0), Annular::new(x, g.width_w));
        let mut fam = SegmentFamily::new(&sys, &v, 64);
        let st = fam.step();
        assert!(st.has_h && st.has_v);
    }

    #[test]
    fn random_gammas_certify() {
        let sys = sys7();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let gamma = random_unstable_segment(&mut rng, &sys, (0.005, 0.05));
            assert_eq!(gamma.anchor.region, Region::SquareS1);
            let c = certify_expansion(&gamma, &sys, 10_000).unwrap();
            assert!(c.mean_growth > 1.0);
        }
    }
}
