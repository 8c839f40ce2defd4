//! Convex polygons in annular coordinates, clipped against the track cells.

use crate::geometry::{Annular, Region, TrackGeometry};

pub type Polygon = Vec<Annular>;

const AREA_EPS: f64 = 1e-20;

pub fn area(p: &[Annular]) -> f64 {
    let n = p.len();
    if n < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..n {
        let (x0, y0) = (p[i].s, p[i].u);
        let (x1, y1) = (p[(i + 1) % n].s, p[(i + 1) % n].u);
        a += x0 * y1 - x1 * y0;
    }
    0.5 * a.abs()
}

/// Vertex average; enough for locating a convex polygon's cell.
pub fn centroid(p: &[Annular]) -> Annular {
    let n = p.len() as f64;
    let (s, u) = p.iter().fold((0.0, 0.0), |(s, u), q| (s + q.s, u + q.u));
    Annular::new(s / n, u / n)
}

pub fn bounds(p: &[Annular]) -> (f64, f64, f64, f64) {
    p.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |b, q| {
        (b.0.min(q.s), b.1.max(q.s), b.2.min(q.u), b.3.max(q.u))
    })
}

/// Keeps the part with `sign·(s − c) ≥ 0`.
fn clip_half(p: &[Annular], c: f64, sign: f64) -> Polygon {
    let n = p.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let a = p[i];
        let b = p[(i + 1) % n];
        let da = sign * (a.s - c);
        let db = sign * (b.s - c);
        if da >= 0.0 {
            out.push(a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            let t = da / (da - db);
            out.push(Annular::new(c, a.u + t * (b.u - a.u)));
        }
    }
    out
}

pub fn clip_s(p: &[Annular], lo: f64, hi: f64) -> Polygon {
    let left = clip_half(p, lo, 1.0);
    if left.len() < 3 {
        return Vec::new();
    }
    clip_half(&left, hi, -1.0)
}

/// Cuts a polygon given in the universal cover (`s` unbounded) along every
/// cell boundary and returns the pieces wrapped into `[0, ℓ)` with the
/// region each occupies.
pub fn split_into_cells(g: &TrackGeometry, p: &[Annular]) -> Vec<(Polygon, Region)> {
    let (smin, smax, _, _) = bounds(p);
    let l = g.track_length;
    let cuts = g.cut_points();
    let mut out = Vec::new();
    let j0 = (smin / l).floor() as i64;
    let j1 = (smax / l).floor() as i64;
    for j in j0..=j1 {
        let off = j as f64 * l;
        for i in 0..6 {
            let lo = off + cuts[i];
            let hi = off + if i == 5 { l } else { cuts[i + 1] };
            if hi <= smin || lo >= smax {
                continue;
            }
            let piece = clip_s(p, lo, hi);
            if area(&piece) <= AREA_EPS {
                continue;
            }
            let region = g.region_at(cuts[i]);
            let shifted = piece
                .into_iter()
                .map(|q| Annular::new((q.s - off).clamp(cuts[i], if i == 5 { l } else { cuts[i + 1] }), q.u))
                .collect();
            out.push((shifted, region));
        }
    }
    out
}
