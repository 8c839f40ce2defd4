//! The surgery track and its two coordinate charts.
//!
//! The canonical representation is the *unfolded* chart: an annulus of
//! circumference `track_length` and width `w`, with along-track coordinate
//! `s ∈ [0, ℓ)` and across-track coordinate `u = y − y0 ∈ [0, w)`. The
//! first half `s ∈ [0, ℓ/2)` is the horizontal strip `W`, the second half is
//! the vertical strip `V` traversed downward. The square `S1` sits in `W`,
//! the square `S2` in `V`, and the two are glued by a quarter-turn: they are
//! the two layers of the central square `S`.
//!
//! The *folded* chart is the planar picture `W ∪ V` with
//! `W = [0, ℓ/2) × [y0, y1)` and `V = [x0, x1) × (0, ℓ/2]`; on the square a
//! region tag tells the two layers apart.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Tolerance for seam membership.
pub const SEAM_TOL: f64 = 1e-9;

/// Along/across coordinates in the unfolded annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annular {
    pub s: f64,
    pub u: f64,
}

impl Annular {
    pub fn new(s: f64, u: f64) -> Self {
        Self { s, u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Chart {
    Folded,
    Unfolded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    /// Upper layer of the central square, the copy lying in `W`.
    SquareS1,
    /// Lower layer of the central square, the copy lying in `V`.
    SquareS2,
    /// The lobe of `W` outside the square.
    LobeA,
    /// The lobe of `V` outside the square.
    LobeB,
}

impl Region {
    pub fn is_square(self) -> bool {
        matches!(self, Region::SquareS1 | Region::SquareS2)
    }
}

/// A point of the track in one of the two charts.
///
/// Unfolded: `x = s`, `y = y0 + u`. Folded: planar coordinates in `W ∪ V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub chart: Chart,
    pub x: f64,
    pub y: f64,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackGeometry {
    pub track_length: f64,
    pub width_w: f64,
    pub y0: f64,
    pub y1: f64,
    pub x0: f64,
    pub x1: f64,
    pub layer_gap_d1: f64,
    pub lobe_symmetric: bool,
}

impl Default for TrackGeometry {
    fn default() -> Self {
        Self::new(1.0, 0.02, 0.1).expect("default geometry is valid")
    }
}

impl TrackGeometry {
    /// Builds a thin track: requires `w < ℓ/10`.
    pub fn new(track_length: f64, width_w: f64, layer_gap_d1: f64) -> Result<Self> {
        Self::check_positive(track_length, width_w, layer_gap_d1)?;
        if width_w >= track_length / 10.0 {
            return Err(Error::Geometry(format!(
                "width violates w ≪ 1: w = {width_w} must be below track_length/10 = {}",
                track_length / 10.0
            )));
        }
        Ok(Self::place(track_length, width_w, layer_gap_d1))
    }

    /// Builds the track whose width is fixed by the winding relation
    /// `α·w = k·ℓ`. Only requires that both squares fit (`w < ℓ/2`).
    pub fn for_winding(alpha: f64, k: u32, track_length: f64, layer_gap_d1: f64) -> Result<Self> {
        if !(alpha > 0.0) || k == 0 {
            return Err(Error::Geometry(format!(
                "winding needs alpha > 0 and k ≥ 1 (alpha = {alpha}, k = {k})"
            )));
        }
        let w = k as f64 * track_length / alpha;
        Self::check_positive(track_length, w, layer_gap_d1)?;
        if w >= track_length / 2.0 {
            return Err(Error::Geometry(format!(
                "derived width w = {w} leaves no room for the lobes (ℓ = {track_length})"
            )));
        }
        Ok(Self::place(track_length, w, layer_gap_d1))
    }

    fn check_positive(track_length: f64, width_w: f64, gap: f64) -> Result<()> {
        if !(track_length > 0.0) || !track_length.is_finite() {
            return Err(Error::Geometry(format!("track_length must be positive, got {track_length}")));
        }
        if !(width_w > 0.0) {
            return Err(Error::Geometry(format!("width_w must be positive, got {width_w}")));
        }
        if !(gap > 0.0) {
            return Err(Error::Geometry(format!("layer_gap_d1 must be positive, got {gap}")));
        }
        Ok(())
    }

    // Each square sits in the middle of its strip, which makes the lobes symmetric.
    fn place(track_length: f64, width_w: f64, layer_gap_d1: f64) -> Self {
        let a1 = (track_length / 2.0 - width_w) / 2.0;
        Self {
            track_length,
            width_w,
            y0: a1,
            y1: a1 + width_w,
            x0: a1,
            x1: a1 + width_w,
            layer_gap_d1,
            lobe_symmetric: true,
        }
    }

    pub fn half(&self) -> f64 {
        self.track_length / 2.0
    }

    /// Left edge `LE1` of `S1` in the unfolded chart.
    pub fn le1(&self) -> f64 {
        self.x0
    }

    pub fn re1(&self) -> f64 {
        self.x0 + self.width_w
    }

    /// Left edge `LE2` of `S2` in the unfolded chart.
    pub fn le2(&self) -> f64 {
        self.x0 + self.half()
    }

    pub fn re2(&self) -> f64 {
        self.le2() + self.width_w
    }

    pub fn lobe_re1_le2(&self) -> f64 {
        self.le2() - self.re1()
    }

    pub fn lobe_re2_le1(&self) -> f64 {
        self.track_length - self.re2() + self.le1()
    }

    /// Area of `W ∪ V`: the annulus with the doubled square counted once.
    pub fn domain_area(&self) -> f64 {
        self.track_length * self.width_w - self.width_w * self.width_w
    }

    /// Area of the annulus with both square layers: the state space of the
    /// crossing dynamics.
    pub fn layered_area(&self) -> f64 {
        self.track_length * self.width_w
    }

    /// Cut points of one loop, sorted: strip seams and square edges.
    pub fn cut_points(&self) -> [f64; 6] {
        [0.0, self.le1(), self.re1(), self.half(), self.le2(), self.re2()]
    }

    pub fn wrap_s(&self, s: f64) -> f64 {
        let r = s.rem_euclid(self.track_length);
        if r >= self.track_length {
            0.0
        } else {
            r
        }
    }

    pub fn region_at(&self, s: f64) -> Region {
        let s = self.wrap_s(s);
        if s < self.half() {
            if s >= self.le1() && s < self.re1() {
                Region::SquareS1
            } else {
                Region::LobeA
            }
        } else if s >= self.le2() && s < self.re2() {
            Region::SquareS2
        } else {
            Region::LobeB
        }
    }

    pub fn in_w(&self, s: f64) -> bool {
        self.wrap_s(s) < self.half()
    }

    /// Quarter-turn taking an `S1` point to the same planar point on `S2`.
    pub fn s1_to_s2(&self, p: Annular) -> Annular {
        Annular::new(self.re2() - p.u, p.s - self.le1())
    }

    pub fn s2_to_s1(&self, p: Annular) -> Annular {
        Annular::new(self.le1() + p.u, self.re2() - p.s)
    }

    /// Wraps `s` and stores square points as their `S1` copy.
    pub fn canonical(&self, p: Annular) -> Annular {
        let q = Annular::new(self.wrap_s(p.s), p.u);
        if self.region_at(q.s) == Region::SquareS2 {
            self.s2_to_s1(q)
        } else {
            q
        }
    }

    /// Canonical region of an annular point (never `SquareS2`).
    pub fn canonical_region(&self, p: Annular) -> Region {
        self.region_at(self.canonical(p).s)
    }

    pub fn in_square(&self, p: Annular) -> bool {
        self.region_at(p.s).is_square()
    }

    /// Unfolded-chart track point of an annular coordinate.
    pub fn point(&self, p: Annular) -> TrackPoint {
        let s = self.wrap_s(p.s);
        TrackPoint { chart: Chart::Unfolded, x: s, y: self.y0 + p.u, region: self.region_at(s) }
    }

    /// Folded-chart point from planar coordinates; square points default to
    /// the upper layer `S1`.
    pub fn folded_at(&self, x: f64, y: f64) -> Result<TrackPoint> {
        let in_w = x >= 0.0 && x <= self.half() && y >= self.y0 - SEAM_TOL && y <= self.y1 + SEAM_TOL;
        let in_v = x >= self.x0 - SEAM_TOL && x <= self.x1 + SEAM_TOL && y >= 0.0 && y <= self.half();
        let in_sq = x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1;
        let region = if in_sq {
            Region::SquareS1
        } else if in_w {
            Region::LobeA
        } else if in_v {
            Region::LobeB
        } else {
            return Err(Error::Geometry(format!("({x}, {y}) lies outside W ∪ V")));
        };
        Ok(TrackPoint { chart: Chart::Folded, x, y, region })
    }

    pub fn annular(&self, p: &TrackPoint) -> Annular {
        match p.chart {
            Chart::Unfolded => Annular::new(self.wrap_s(p.x), p.y - self.y0),
            Chart::Folded => self.annular(&self.unfold(p)),
        }
    }

    pub fn unfold(&self, p: &TrackPoint) -> TrackPoint {
        if p.chart == Chart::Unfolded {
            return *p;
        }
        let a = match p.region {
            Region::LobeA | Region::SquareS1 => Annular::new(p.x, p.y - self.y0),
            Region::LobeB | Region::SquareS2 => Annular::new(self.track_length - p.y, p.x - self.x0),
        };
        let s = self.wrap_s(a.s);
        TrackPoint { chart: Chart::Unfolded, x: s, y: self.y0 + a.u, region: self.region_at(s) }
    }

    pub fn fold(&self, p: &TrackPoint) -> TrackPoint {
        if p.chart == Chart::Folded {
            return *p;
        }
        let s = self.wrap_s(p.x);
        let u = p.y - self.y0;
        if s < self.half() {
            TrackPoint { chart: Chart::Folded, x: s, y: p.y, region: self.region_at(s) }
        } else {
            TrackPoint {
                chart: Chart::Folded,
                x: self.x0 + u,
                y: self.track_length - s,
                region: self.region_at(s),
            }
        }
    }

    /// True when an annular point lies within `SEAM_TOL` of a strip seam or
    /// of a square edge.
    pub fn on_seam(&self, p: Annular) -> bool {
        let s = self.wrap_s(p.s);
        self.cut_points()
            .iter()
            .chain(std::iter::once(&self.track_length))
            .any(|c| (s - c).abs() < SEAM_TOL)
    }
}

/// Parsed `key = value` configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    pub entries: BTreeMap<String, String>,
}

impl ConfigMap {
    /// Parses `key = value` lines; `#` starts a comment. Keys outside
    /// `allowed` are rejected.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let k = k.trim();
            if !allowed.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", lineno + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.entries
            .get(key)
            .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("`{key}` is not a number: {v}"))))
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.entries
            .get(key)
            .map(|v| v.parse::<u64>().map_err(|_| Error::Config(format!("`{key}` is not an integer: {v}"))))
            .transpose()
    }
}

pub const GEOMETRY_KEYS: [&str; 4] = ["track_length", "width_w", "layer_gap_d1", "seed"];

/// Builds a validated thin track from configuration, falling back to the
/// defaults for missing keys.
pub fn build_geometry(cfg: &ConfigMap) -> Result<TrackGeometry> {
    if let Some(k) = cfg.entries.keys().find(|k| !GEOMETRY_KEYS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown key `{k}`")));
    }
    let d = TrackGeometry::default();
    TrackGeometry::new(
        cfg.get_f64("track_length")?.unwrap_or(d.track_length),
        cfg.get_f64("width_w")?.unwrap_or(d.width_w),
        cfg.get_f64("layer_gap_d1")?.unwrap_or(d.layer_gap_d1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults_are_symmetric() {
        let g = TrackGeometry::default();
        assert_eq!(g.track_length, 1.0);
        assert_eq!(g.width_w, 0.02);
        assert!((g.lobe_re1_le2() - 0.48).abs() < 1e-12);
        assert!((g.lobe_re2_le1() - 0.48).abs() < 1e-12);
        assert!((g.y1 - g.y0 - (g.x1 - g.x0)).abs() < 1e-15);
    }

    #[test]
    fn wide_track_rejected() {
        let err = TrackGeometry::new(1.0, 0.5, 0.1).unwrap_err();
        assert!(err.to_string().contains("width violates w ≪ 1"));
        assert!(TrackGeometry::new(1.0, 0.02, 0.0).is_err());
        assert!(TrackGeometry::new(1.0, -0.02, 0.1).is_err());
    }

    #[test]
    fn winding_geometry() {
        let g = TrackGeometry::for_winding(7.0, 2, 1.0, 0.1).unwrap();
        assert!((7.0 * g.width_w - 2.0).abs() < 1e-12);
        assert!((g.lobe_re1_le2() - g.lobe_re2_le1()).abs() < 1e-12);
        assert!(TrackGeometry::for_winding(3.0, 2, 1.0, 0.1).is_err());
    }

    #[test]
    fn square_center_unfolds_between_edges() {
        let g = TrackGeometry::default();
        let p = g.folded_at((g.x0 + g.x1) / 2.0, (g.y0 + g.y1) / 2.0).unwrap();
        assert_eq!(p.region, Region::SquareS1);
        let q = g.unfold(&p);
        assert!(q.x > g.le1() && q.x < g.re1());
        assert_eq!(q.region, Region::SquareS1);
        // same planar point on the lower layer
        let p2 = TrackPoint { region: Region::SquareS2, ..p };
        let q2 = g.unfold(&p2);
        assert!(q2.x > g.le2() && q2.x < g.re2());
        let back = g.s2_to_s1(g.annular(&q2));
        let a = g.annular(&q);
        assert!((back.s - a.s).abs() < 1e-12 && (back.u - a.u).abs() < 1e-12);
    }

    #[test]
    fn seams_are_identified() {
        let g = TrackGeometry::default();
        let y = g.y0 + 0.3 * g.width_w;
        // PQ: right edge of W, P'Q': top edge of V
        let pq = TrackPoint { chart: Chart::Folded, x: g.half(), y, region: Region::LobeA };
        let pq2 = TrackPoint { chart: Chart::Folded, x: g.x0 + 0.3 * g.width_w, y: g.half(), region: Region::LobeB };
        let (a, b) = (g.annular(&pq), g.annular(&pq2));
        assert!((a.s - b.s).abs() < 1e-12 && (a.u - b.u).abs() < 1e-12);
        // S'R': left edge of W, SR: bottom edge of V
        let sr = TrackPoint { chart: Chart::Folded, x: 0.0, y, region: Region::LobeA };
        let sr2 = TrackPoint { chart: Chart::Folded, x: g.x0 + 0.3 * g.width_w, y: 0.0, region: Region::LobeB };
        let (a, b) = (g.annular(&sr), g.annular(&sr2));
        assert!(a.s.abs() < 1e-12 && b.s.abs() < 1e-12 && (a.u - b.u).abs() < 1e-12);
        assert!(g.on_seam(a));
    }

    #[test]
    fn round_trip_random_points() {
        let g = TrackGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let p = g.point(Annular::new(rng.gen::<f64>(), rng.gen::<f64>() * g.width_w));
            let f = g.fold(&p);
            assert_eq!(f.region, p.region);
            let back = g.unfold(&f);
            assert_eq!(back.region, p.region);
            assert!((back.x - p.x).abs() < 1e-12, "{p:?} -> {back:?}");
            assert!((back.y - p.y).abs() < 1e-12);
            let again = g.fold(&back);
            assert!((again.x - f.x).abs() < 1e-12 && (again.y - f.y).abs() < 1e-12);
        }
    }

    #[test]
    fn left_edge_belongs_to_square() {
        let g = TrackGeometry::default();
        assert_eq!(g.region_at(g.le1()), Region::SquareS1);
        assert_eq!(g.region_at(g.re1()), Region::LobeA);
        assert_eq!(g.region_at(g.le2()), Region::SquareS2);
        assert_eq!(g.region_at(g.re2()), Region::LobeB);
    }

    #[test]
    fn config_parsing() {
        let cfg = ConfigMap::parse("track_length = 1.0\nwidth_w=0.01 # thin\n\nseed = 4\n", &GEOMETRY_KEYS).unwrap();
        let g = build_geometry(&cfg).unwrap();
        assert_eq!(g.width_w, 0.01);
        assert_eq!(cfg.get_u64("seed").unwrap(), Some(4));
        assert!(ConfigMap::parse("colour = red", &GEOMETRY_KEYS).is_err());
        assert!(ConfigMap::parse("width_w", &GEOMETRY_KEYS).is_err());
        let bad = ConfigMap::parse("width_w = 0.5", &GEOMETRY_KEYS).unwrap();
        assert!(build_geometry(&bad).is_err());
    }
}
