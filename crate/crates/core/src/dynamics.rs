//! Orbits of the linked twist map `H = G·F` on `W ∪ V`, the first return to
//! the central square, and the surgered fibre flow `Ψ`.
//!
//! The state space is the unfolded annulus with the two square layers kept
//! apart. Every crossing of the track applies the same twist
//! `s ↦ s + α·u`; a point landing on a square continues on the other layer,
//! and the quarter-turn between the layers is what opposes the shears.

use crate::error::{Error, Result};
use crate::geometry::{Annular, Chart, Region, TrackGeometry, TrackPoint};
use crate::maps::{Mat2, ShearConfig};
use crate::polygon::{self, Polygon};

/// Immutable geometry plus shear; shared freely across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistSystem {
    pub geom: TrackGeometry,
    pub shear: ShearConfig,
}

impl TwistSystem {
    pub fn new(geom: TrackGeometry, shear: ShearConfig) -> Self {
        Self { geom, shear }
    }

    /// Track of width `k·ℓ/α` with default length and layer gap.
    pub fn with_winding(alpha: f64, k: u32) -> Result<Self> {
        let geom = TrackGeometry::for_winding(alpha, k, 1.0, 0.1)?;
        let shear = ShearConfig::new(alpha, k, &geom)?;
        Ok(Self::new(geom, shear))
    }

    pub fn alpha(&self) -> f64 {
        self.shear.alpha
    }

    /// The track twist `f̃(s, u) = (s + α·u mod ℓ, u)`.
    pub fn twist(&self, p: Annular) -> Annular {
        Annular::new(self.geom.wrap_s(p.s + self.shear.alpha * p.u), p.u)
    }

    /// Crossing map `P = J·f̃`: twist, then pass to the other layer if the
    /// image lies in a square. A bijection of the layered annulus.
    pub fn cross(&self, p: Annular) -> Annular {
        self.swap_layer(self.twist(p))
    }

    /// `J`: the same planar point of the square on the other layer; identity
    /// on the lobes.
    pub fn swap_layer(&self, q: Annular) -> Annular {
        match self.geom.region_at(q.s) {
            Region::SquareS1 => self.geom.s1_to_s2(q),
            Region::SquareS2 => self.geom.s2_to_s1(q),
            _ => q,
        }
    }

    fn cross_tangent(&self, p: Annular, v: [f64; 2]) -> (Annular, [f64; 2]) {
        let q = self.twist(p);
        let v = [v[0] + self.shear.alpha * v[1], v[1]];
        match self.geom.region_at(q.s) {
            Region::SquareS1 => (self.geom.s1_to_s2(q), [-v[1], v[0]]),
            Region::SquareS2 => (self.geom.s2_to_s1(q), [v[1], -v[0]]),
            _ => (q, v),
        }
    }

    /// One step of `H = G·F`, two crossings. From the upper square through
    /// the lower one and back this is the matrix `[[1, α], [−α, 1−α²]]`.
    pub fn step(&self, p: Annular) -> Annular {
        self.cross(self.cross(p))
    }

    /// One step of `H` together with its Jacobian in annular coordinates.
    pub fn step_with_jacobian(&self, p: Annular) -> (Annular, Mat2) {
        let (q, c0) = self.cross_tangent(p, [1.0, 0.0]);
        let (_, c1) = self.cross_tangent(p, [0.0, 1.0]);
        let j1 = Mat2::new(c0[0], c1[0], c0[1], c1[1]);
        let (r, d0) = self.cross_tangent(q, [1.0, 0.0]);
        let (_, d1) = self.cross_tangent(q, [0.0, 1.0]);
        let j2 = Mat2::new(d0[0], d1[0], d0[1], d1[1]);
        (r, j2 * j1)
    }

    /// Advances a tangent vector along one step without forming the Jacobian.
    pub fn step_tangent(&self, p: Annular, v: [f64; 2]) -> (Annular, [f64; 2]) {
        let (q, v) = self.cross_tangent(p, v);
        self.cross_tangent(q, v)
    }

    /// `H` on a track point of either chart; the result is in the chart of
    /// the input.
    pub fn step_h(&self, p: &TrackPoint) -> TrackPoint {
        let out = self.geom.point(self.step(self.geom.annular(p)));
        match p.chart {
            Chart::Unfolded => out,
            Chart::Folded => self.geom.fold(&out),
        }
    }

    /// First `n ≥ 1` with `Hⁿ(p) ∈ S` (either layer), and the return point.
    pub fn first_return(&self, p: Annular, max_iter: usize) -> Result<(Annular, usize)> {
        let mut q = Annular::new(self.geom.wrap_s(p.s), p.u);
        if !self.geom.in_square(q) {
            return Err(Error::Parameter("first_return needs a starting point in S".into()));
        }
        for n in 1..=max_iter {
            q = self.step(q);
            if self.geom.in_square(q) {
                return Ok((q, n));
            }
        }
        Err(Error::NonReturned(max_iter))
    }

    pub fn orbit(&self, p: Annular, n: usize) -> Vec<Annular> {
        let mut out = Vec::with_capacity(n + 1);
        let mut q = Annular::new(self.geom.wrap_s(p.s), p.u);
        out.push(q);
        for _ in 0..n {
            q = self.step(q);
            out.push(q);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Fibre flow

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Upper,
    Lower,
    Lobe,
}

/// A point of the surgery region: the fibre (named by its canonical track
/// point) and the fibre angle `θ ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    /// Folded-chart base point; on the double layer it is tagged `SquareS1`.
    pub base: TrackPoint,
    pub theta: f64,
    pub layer: Layer,
}

/// Which copy of the fibre's base point sits at a crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Copy_ {
    Direct,
    LowerS2,
}

impl TwistSystem {
    /// Crossing angle of the upper layer `S1`, shared by the lobes. The lower
    /// layer `S2` is crossed at `−d1/2`, so the fibre origin is within `d1/2`
    /// of every crossing, the layers are `d1` apart, and every jump in `θ` is
    /// a multiple of `d1`.
    pub fn theta_upper(&self) -> f64 {
        self.geom.layer_gap_d1 / 2.0
    }

    pub fn theta_lower(&self) -> f64 {
        1.0 - self.geom.layer_gap_d1 / 2.0
    }

    /// Fibre angle at which a track point (any copy) is crossed.
    fn crossing_angle(&self, region: Region) -> f64 {
        match region {
            Region::LobeA | Region::LobeB | Region::SquareS1 => self.theta_upper(),
            Region::SquareS2 => self.theta_lower(),
        }
    }

    fn crossings(&self, canonical_region: Region) -> &'static [(u8, Copy_)] {
        if canonical_region == Region::SquareS1 {
            &[(1, Copy_::Direct), (2, Copy_::LowerS2)]
        } else {
            &[(0, Copy_::Direct)]
        }
    }

    fn angle_of(&self, code: u8) -> f64 {
        match code {
            0 | 1 => self.theta_upper(),
            _ => self.theta_lower(),
        }
    }

    /// Time until the next crossing strictly after `theta` on the fibre of a
    /// canonical base point.
    fn next_crossing(&self, base: Annular, theta: f64) -> (f64, Copy_) {
        let region = self.geom.region_at(base.s);
        let mut best = (f64::INFINITY, Copy_::Direct);
        for &(code, copy) in self.crossings(region) {
            let mut tau = (self.angle_of(code) - theta).rem_euclid(1.0);
            if tau <= 0.0 || tau >= 1.0 {
                tau = 1.0;
            }
            if tau < best.0 {
                best = (tau, copy);
            }
        }
        best
    }

    /// Jump at a crossing: applies `f̃` to the crossed copy and returns the new
    /// canonical base and its crossing angle.
    fn jump(&self, base: Annular, copy: Copy_) -> (Annular, f64) {
        let x = match copy {
            Copy_::Direct => base,
            Copy_::LowerS2 => self.geom.s1_to_s2(base),
        };
        let y = self.twist(x);
        let theta = self.crossing_angle(self.geom.region_at(y.s));
        (self.geom.canonical(y), theta)
    }

    /// Flows a raw `(base, θ)` state for time `t ≥ 0`; returns the number of
    /// shear events.
    pub fn flow_raw(&self, base: Annular, theta: f64, t: f64) -> (Annular, f64, usize) {
        let (mut base, mut theta) = (self.geom.canonical(base), theta.rem_euclid(1.0));
        let mut rem = t;
        let mut events = 0;
        loop {
            let (tau, copy) = self.next_crossing(base, theta);
            if tau <= rem {
                rem -= tau;
                let (b, th) = self.jump(base, copy);
                base = b;
                theta = th;
                events += 1;
            } else {
                theta = (theta + rem).rem_euclid(1.0);
                if theta >= 1.0 {
                    theta = 0.0;
                }
                return (base, theta, events);
            }
        }
    }

    pub fn layer_of(&self, base: Annular, theta: f64) -> Layer {
        if self.geom.region_at(base.s) != Region::SquareS1 {
            Layer::Lobe
        } else if theta >= self.theta_upper() && theta < self.theta_lower() {
            Layer::Upper
        } else {
            Layer::Lower
        }
    }

    pub fn flow_state(&self, base: Annular, theta: f64) -> FlowState {
        let c = self.geom.canonical(base);
        let theta = theta.rem_euclid(1.0);
        FlowState { base: self.geom.fold(&self.geom.point(c)), theta, layer: self.layer_of(c, theta) }
    }

    /// `Ψ_t`, forward only.
    pub fn flow_psi(&self, s: &FlowState, t: f64) -> Result<(FlowState, usize)> {
        if !(t >= 0.0) {
            return Err(Error::Parameter(format!("flow time must be non-negative, got {t}")));
        }
        let base = self.geom.annular(&s.base);
        let (b, th, events) = self.flow_raw(base, s.theta, t);
        Ok((self.flow_state(b, th), events))
    }
}

// ---------------------------------------------------------------------------
// Cube sets and their evolution

/// `R × [c − ε, c + ε]` with `R` an axis-aligned rectangle inside one lobe
/// cell of the unfolded chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeSet {
    pub s_range: (f64, f64),
    pub u_range: (f64, f64),
    pub epsilon: f64,
    pub center_theta: f64,
}

impl CubeSet {
    pub fn validate(&self, sys: &TwistSystem) -> Result<()> {
        let g = &sys.geom;
        if !(2.0 * self.epsilon < g.layer_gap_d1) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidCube(format!(
                "fibre width 2ε = {} must satisfy 0 < 2ε < d1 = {}; pieces of a wider cube can straddle both \
                 layers of the double track at once, which is the hypothesis non-weak-mixing rests on",
                2.0 * self.epsilon,
                g.layer_gap_d1
            )));
        }
        let (s0, s1) = self.s_range;
        let (u0, u1) = self.u_range;
        if !(s0 < s1 && u0 < u1 && u0 >= 0.0 && u1 <= g.width_w && s0 >= 0.0 && s1 <= g.track_length) {
            return Err(Error::InvalidCube("rectangle is empty or leaves the track".into()));
        }
        let cell = cell_index(g, s0);
        if cell_index(g, s1 - 1e-15) != cell || g.region_at(s0).is_square() {
            return Err(Error::InvalidCube("rectangle must lie inside a single lobe cell".into()));
        }
        let c = self.center_theta;
        let gap = (c - sys.theta_upper() + 0.5).rem_euclid(1.0) - 0.5;
        if !(gap.abs() > self.epsilon) || !(0.0..1.0).contains(&c) {
            return Err(Error::InvalidCube(format!(
                "fibre window must avoid the lobe crossing θ = {}",
                sys.theta_upper()
            )));
        }
        Ok(())
    }

    pub fn base_area(&self) -> f64 {
        (self.s_range.1 - self.s_range.0) * (self.u_range.1 - self.u_range.0)
    }

    pub fn volume(&self) -> f64 {
        self.base_area() * 2.0 * self.epsilon
    }

    /// Membership of a canonical flow point.
    pub fn contains(&self, base: Annular, theta: f64) -> bool {
        let in_base = base.s >= self.s_range.0
            && base.s < self.s_range.1
            && base.u >= self.u_range.0
            && base.u < self.u_range.1;
        if !in_base {
            return false;
        }
        let d = (theta - self.center_theta + 0.5).rem_euclid(1.0) - 0.5;
        d.abs() <= self.epsilon
    }
}

/// Index of the cell of the loop containing `s`: 0..6 in the order of
/// [`TrackGeometry::cut_points`].
pub fn cell_index(g: &TrackGeometry, s: f64) -> usize {
    let s = g.wrap_s(s);
    let cuts = g.cut_points();
    (0..6).rev().find(|&i| s >= cuts[i]).unwrap_or(0)
}

/// A fibre-aligned block: a convex base polygon over a fixed region, with
/// fibre window `[theta_lo, theta_lo + width)`.
///
/// Part of the window may already lie past the next crossing; those points
/// are physically on the image fibres. A block is replaced by its image
/// pieces once the trailing edge `theta_lo` passes the crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub base: Polygon,
    pub region: Region,
    pub theta_lo: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolvedSet {
    pub blocks: Vec<Block>,
    pub over_approximated: bool,
}

impl EvolvedSet {
    pub fn count(&self) -> usize {
        self.blocks.len()
    }

    pub fn volume(&self) -> f64 {
        self.blocks.iter().map(|b| polygon::area(&b.base) * b.width).sum()
    }
}

impl TwistSystem {
    fn block_next(&self, b: &Block) -> (f64, Copy_) {
        let probe = polygon::centroid(&b.base);
        self.next_crossing(Annular::new(probe.s, probe.u), b.theta_lo)
    }

    /// Image pieces of a block passing a crossing, each inside one cell.
    fn block_pieces(&self, b: &Block, copy: Copy_) -> Vec<Block> {
        let g = &self.geom;
        let poly: Polygon = match copy {
            Copy_::Direct => b.base.clone(),
            Copy_::LowerS2 => b.base.iter().map(|&p| g.s1_to_s2(p)).collect(),
        };
        let twisted: Polygon = poly.iter().map(|p| Annular::new(p.s + self.shear.alpha * p.u, p.u)).collect();
        let crossed_angle = match copy {
            Copy_::Direct => self.crossing_angle(b.region),
            Copy_::LowerS2 => self.theta_lower(),
        };
        let shift = b.theta_lo - crossed_angle;
        let mut out = Vec::new();
        for (piece, region) in polygon::split_into_cells(g, &twisted) {
            let theta_lo = (self.crossing_angle(region) + shift).rem_euclid(1.0);
            let (base, region) = if region == Region::SquareS2 {
                (piece.iter().map(|&p| g.s2_to_s1(p)).collect(), Region::SquareS1)
            } else {
                (piece, region)
            };
            out.push(Block { base, region, theta_lo, width: b.width });
        }
        out
    }

    /// Piecewise image of a cube under `Ψ_t`, as fibre-aligned blocks.
    pub fn evolve_cube(&self, a: &CubeSet, t: f64, budget: usize) -> Result<EvolvedSet> {
        a.validate(self)?;
        if !(t >= 0.0) {
            return Err(Error::Parameter(format!("flow time must be non-negative, got {t}")));
        }
        let (s0, s1) = a.s_range;
        let (u0, u1) = a.u_range;
        let start = Block {
            base: vec![Annular::new(s0, u0), Annular::new(s1, u0), Annular::new(s1, u1), Annular::new(s0, u1)],
            region: self.geom.region_at(s0),
            theta_lo: a.center_theta - a.epsilon,
            width: 2.0 * a.epsilon,
        };
        let mut blocks = vec![start];
        let mut over = false;
        // one passage per block per chunk: consecutive crossings are ≥ min(d1, 1−d1) apart
        let d1 = self.geom.layer_gap_d1;
        let chunk = 0.5 * d1.min(1.0 - d1);
        let mut elapsed = 0.0;
        while elapsed < t {
            let dt = chunk.min(t - elapsed);
            let mut next = Vec::with_capacity(blocks.len());
            for b in blocks {
                let (tau, copy) = self.block_next(&b);
                if tau <= dt {
                    for mut c in self.block_pieces(&b, copy) {
                        c.theta_lo = (c.theta_lo + dt - tau).rem_euclid(1.0);
                        next.push(c);
                    }
                } else {
                    next.push(Block { theta_lo: (b.theta_lo + dt).rem_euclid(1.0), ..b });
                }
            }
            blocks = next;
            if blocks.len() > budget {
                blocks = coarsen(&self.geom, blocks);
                over = true;
            }
            elapsed += dt;
        }
        Ok(EvolvedSet { blocks, over_approximated: over })
    }
}

/// Merges blocks sharing a cell and a fibre window into their bounding box
/// (clipped to the cell). The result contains the input.
fn coarsen(g: &TrackGeometry, blocks: Vec<Block>) -> Vec<Block> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(usize, i64), (Block, f64, f64, f64, f64)> = BTreeMap::new();
    for b in blocks {
        let c = polygon::centroid(&b.base);
        let key = (cell_index(g, c.s), (b.theta_lo * 1e6).round() as i64);
        let (smin, smax, umin, umax) = polygon::bounds(&b.base);
        groups
            .entry(key)
            .and_modify(|e| {
                e.1 = e.1.min(smin);
                e.2 = e.2.max(smax);
                e.3 = e.3.min(umin);
                e.4 = e.4.max(umax);
            })
            .or_insert((b, smin, smax, umin, umax));
    }
    groups
        .into_values()
        .map(|(b, s0, s1, u0, u1)| Block {
            base: vec![Annular::new(s0, u0), Annular::new(s1, u0), Annular::new(s1, u1), Annular::new(s0, u1)],
            ..b
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::compose_h;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sys7() -> TwistSystem {
        TwistSystem::with_winding(7.0, 2).unwrap()
    }

    #[test]
    fn bottom_edge_of_lobe_is_fixed() {
        let sys = sys7();
        let p = Annular::new(0.02, 0.0);
        assert_eq!(sys.step(p), p);
        let tp = sys.geom.fold(&sys.geom.point(p));
        assert_eq!(sys.step_h(&tp), tp);
    }

    #[test]
    fn interior_fixed_point_matches_matrix() {
        let sys = sys7();
        let g = &sys.geom;
        let p = Annular::new(g.le1() + 1.0 / 7.0, 1.0 / 7.0);
        let q = sys.step(p);
        assert!((q.s - p.s).abs() < 1e-12 && (q.u - p.u).abs() < 1e-12);
        let h = compose_h(7.0);
        for dv in [[1e-7, 0.0], [0.0, 1e-7], [3e-8, -2e-8]] {
            let pp = Annular::new(p.s + dv[0], p.u + dv[1]);
            let qq = sys.step(pp);
            let lin = h.apply(dv);
            assert!((qq.s - q.s - lin[0]).abs() < 1e-12, "{:?} vs {:?}", qq, lin);
            assert!((qq.u - q.u - lin[1]).abs() < 1e-12);
        }
        let (_, jac) = sys.step_with_jacobian(p);
        assert!(jac.max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn tangent_agrees_with_jacobian() {
        let sys = sys7();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = sys.geom.canonical(Annular::new(rng.gen(), rng.gen::<f64>() * sys.geom.width_w));
            let v = [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5];
            let (q1, jac) = sys.step_with_jacobian(p);
            let (q2, w) = sys.step_tangent(p, v);
            assert_eq!(q1, q2);
            let jv = jac.apply(v);
            assert!((jv[0] - w[0]).abs() < 1e-12 && (jv[1] - w[1]).abs() < 1e-12);
            assert!((jac.det() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rational_lobe_point_is_periodic() {
        // α·u = 1/2: each shear moves half a loop, so F carries the W-lobe
        // point into V and G brings it back.
        let sys = sys7();
        let p = Annular::new(0.03, 1.0 / 14.0);
        let q = sys.step(p);
        assert!((q.s - p.s).abs() < 1e-12 && q.u == p.u);
        // the twist alone on W-strip coordinates: period divides q
        let g = &sys.geom;
        for (num, den) in [(1u32, 3u32), (2, 5), (3, 7)] {
            let y = g.y0 + num as f64 / den as f64 / 7.0;
            let mut pt = [0.1, y];
            for step in 1..=den {
                pt = crate::maps::shear_f(pt, 7.0, g);
                let back = (pt[0] - 0.1).abs() < 1e-12 || (pt[0] - 1.1).abs() < 1e-12;
                assert_eq!(back, step % den == 0, "{num}/{den} step {step}");
            }
        }
    }

    #[test]
    fn first_return_immediate_and_nonreturning() {
        let sys = sys7();
        let g = &sys.geom;
        let p = Annular::new(g.le1() + 1.0 / 7.0, 1.0 / 7.0);
        assert_eq!(sys.first_return(p, 10).unwrap().1, 1);
        // dyadic track: α = 8, k = 2, w = 1/4. A bottom-edge point of S1 is
        // sent onto the right-edge seams, where it cycles forever.
        let sys8 = TwistSystem::with_winding(8.0, 2).unwrap();
        let g8 = &sys8.geom;
        let p = Annular::new(g8.le1() + 1.0 / 16.0, 0.0);
        assert!(g8.in_square(p));
        assert_eq!(sys8.first_return(p, 1_000_000), Err(Error::NonReturned(1_000_000)));
        assert!(sys8.first_return(Annular::new(0.01, 0.1), 5).is_err());
    }

    #[test]
    fn second_return_composes() {
        let sys = sys7();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = &sys.geom;
        for _ in 0..200 {
            let p = Annular::new(g.le1() + rng.gen::<f64>() * g.width_w, rng.gen::<f64>() * g.width_w);
            let (r1, n1) = sys.first_return(p, 100_000).unwrap();
            let (r2, n2) = sys.first_return(r1, 100_000).unwrap();
            let mut q = p;
            let mut hits = Vec::new();
            for n in 1..=(n1 + n2) {
                q = sys.step(q);
                if g.in_square(q) {
                    hits.push(n);
                }
            }
            assert_eq!(hits[..2], [n1, n1 + n2]);
            assert_eq!(q, r2);
        }
    }

    #[test]
    fn lobe_fibre_one_event_per_period() {
        let sys = sys7();
        let base = Annular::new(0.02, 0.01);
        let (b, th, ev) = sys.flow_raw(base, 0.3, 1.0);
        assert_eq!(ev, 1);
        assert!((th - 0.3).abs() < 1e-12);
        assert_eq!(b, sys.geom.canonical(sys.twist(base)));
    }

    #[test]
    fn double_layer_fibre_two_events_per_period() {
        let sys = sys7();
        let g = &sys.geom;
        // fixed by both the upper and the lower shear
        let base = Annular::new(g.le1() + 1.0 / 7.0, 1.0 / 7.0);
        let (b, th, ev) = sys.flow_raw(base, 0.5, 1.0);
        assert_eq!(ev, 2);
        assert!((th - 0.5).abs() < 1e-12);
        assert!((b.s - base.s).abs() < 1e-12 && (b.u - base.u).abs() < 1e-12);
        let st = sys.flow_state(base, 0.5);
        assert_eq!(st.layer, Layer::Upper);
        assert_eq!(sys.flow_state(base, 0.0).layer, Layer::Lower);
    }

    #[test]
    fn flow_is_a_semigroup() {
        let sys = sys7();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = &sys.geom;
        for _ in 0..1000 {
            let base = g.canonical(Annular::new(rng.gen(), rng.gen::<f64>() * g.width_w));
            let th = rng.gen::<f64>();
            let (t1, t2) = (rng.gen::<f64>() * 5.0, rng.gen::<f64>() * 5.0);
            let s = sys.flow_state(base, th);
            let (direct, _) = sys.flow_psi(&s, t1 + t2).unwrap();
            let (mid, _) = sys.flow_psi(&s, t1).unwrap();
            let (two, _) = sys.flow_psi(&mid, t2).unwrap();
            assert!((direct.base.x - two.base.x).abs() < 1e-9);
            assert!((direct.base.y - two.base.y).abs() < 1e-9);
            let dth = (direct.theta - two.theta + 0.5).rem_euclid(1.0) - 0.5;
            assert!(dth.abs() < 1e-9);
        }
        assert!(sys.flow_psi(&sys.flow_state(Annular::new(0.0, 0.1), 0.0), -1.0).is_err());
    }

    fn lobe_cube(sys: &TwistSystem, eps: f64) -> CubeSet {
        let c = CubeSet { s_range: (0.01, 0.05), u_range: (0.02, 0.22), epsilon: eps, center_theta: 0.5 };
        assert!(c.s_range.1 < sys.geom.le1());
        c
    }

    #[test]
    fn cube_validation() {
        let sys = sys7();
        let d1 = sys.geom.layer_gap_d1;
        assert!(lobe_cube(&sys, d1 / 4.0).validate(&sys).is_ok());
        let err = lobe_cube(&sys, d1 / 2.0).validate(&sys).unwrap_err();
        assert!(err.to_string().contains("2ε"));
        let mut c = lobe_cube(&sys, d1 / 4.0);
        c.s_range = (0.05, sys.geom.le1() + 0.01);
        assert!(c.validate(&sys).is_err());
    }

    #[test]
    fn cube_evolution_counts() {
        let sys = sys7();
        let a = lobe_cube(&sys, 0.025);
        let e0 = sys.evolve_cube(&a, 0.0, 100_000).unwrap();
        assert_eq!(e0.count(), 1);
        let e1 = sys.evolve_cube(&a, 0.3, 100_000).unwrap();
        assert_eq!(e1.count(), 1);
        assert!((e1.blocks[0].theta_lo - 0.775).abs() < 1e-12);
        let mut last = 1;
        for t in [0.6, 1.6, 2.6, 3.6] {
            let e = sys.evolve_cube(&a, t, 1_000_000).unwrap();
            assert!(!e.over_approximated);
            assert!(e.count() > last, "N({t}) = {} not above {last}", e.count());
            last = e.count();
            for b in &e.blocks {
                assert_eq!(b.width, 0.05);
            }
            assert!((e.volume() - a.volume()).abs() < 1e-9 * a.volume().max(1.0));
        }
    }

    #[test]
    fn cube_budget_coarsens() {
        let sys = sys7();
        let a = lobe_cube(&sys, 0.025);
        let e = sys.evolve_cube(&a, 3.6, 20).unwrap();
        assert!(e.over_approximated);
        assert!(e.volume() >= a.volume() * (1.0 - 1e-9));
    }
}
