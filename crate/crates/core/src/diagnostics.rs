//! Numerical evidence for the dynamics: Lyapunov exponents, equidistribution
//! of orbits, invariance of Lebesgue measure, and the intersection trace of
//! two fibre cubes under the flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{CubeSet, TwistSystem};
use crate::error::{Error, Result};
use crate::geometry::Annular;
use crate::maps::Mat2;

/// Independent stream `i` of a seeded generator.
pub fn stream_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

pub const MIN_LYAPUNOV_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub alpha: f64,
    pub n_iters: usize,
    /// Median over the orbits that were kept.
    pub exponent_estimate: f64,
    pub per_orbit: Vec<f64>,
    pub reference_log_lambda: f64,
    /// Orbits that never came back to the square and were left out.
    pub excluded: usize,
}

/// Mean log growth of a tangent vector along `n` steps from `p`, with
/// renormalisation after every step. Also reports whether the orbit came
/// back to the square.
pub fn orbit_exponent(sys: &TwistSystem, p: Annular, v: [f64; 2], n: usize) -> (f64, bool) {
    let norm0 = v[0].hypot(v[1]);
    let (mut q, mut v) = (p, [v[0] / norm0, v[1] / norm0]);
    let mut log_sum = 0.0;
    let mut visited = false;
    for _ in 0..n {
        let (q2, w) = sys.step_tangent(q, v);
        let r = w[0].hypot(w[1]);
        log_sum += r.ln();
        v = [w[0] / r, w[1] / r];
        q = q2;
        visited |= sys.geom.in_square(q);
    }
    (log_sum / n as f64, visited)
}

/// Same estimate for the constant cocycle `m`, discarding `burn_in` steps.
pub fn matrix_exponent(m: &Mat2, v: [f64; 2], n: usize, burn_in: usize) -> f64 {
    let r0 = v[0].hypot(v[1]);
    let mut v = [v[0] / r0, v[1] / r0];
    let mut log_sum = 0.0;
    for i in 0..(burn_in + n) {
        let w = m.apply(v);
        let r = w[0].hypot(w[1]);
        if i >= burn_in {
            log_sum += r.ln();
        }
        v = [w[0] / r, w[1] / r];
    }
    log_sum / n as f64
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Top exponent of `H` from `n_orbits` random starts in the upper square.
pub fn lyapunov(sys: &TwistSystem, n_orbits: usize, n_iters: usize, seed: u64) -> Result<LyapunovReport> {
    if !(sys.alpha() > 2.0) {
        return Err(Error::Parameter(format!("Lyapunov estimate needs α > 2, got {}", sys.alpha())));
    }
    if n_iters < MIN_LYAPUNOV_ITERS || n_orbits == 0 {
        return Err(Error::Parameter(format!(
            "need at least one orbit and {MIN_LYAPUNOV_ITERS} iterations, got {n_orbits} × {n_iters}"
        )));
    }
    let g = &sys.geom;
    let runs: Vec<(f64, bool)> = (0..n_orbits)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let p = Annular::new(g.le1() + rng.gen::<f64>() * g.width_w, rng.gen::<f64>() * g.width_w);
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            orbit_exponent(sys, p, [phi.cos(), phi.sin()], n_iters)
        })
        .collect();
    let mut per_orbit: Vec<f64> = runs.iter().filter(|r| r.1).map(|r| r.0).collect();
    let excluded = n_orbits - per_orbit.len();
    if per_orbit.is_empty() {
        return Err(Error::Parameter("every orbit was trapped away from the square".into()));
    }
    let kept = per_orbit.clone();
    let exponent_estimate = median(&mut per_orbit);
    Ok(LyapunovReport {
        alpha: sys.alpha(),
        n_iters,
        exponent_estimate,
        per_orbit: kept,
        reference_log_lambda: sys.shear.lambda_plus.abs().ln(),
        excluded,
    })
}

// ---------------------------------------------------------------------------
// Equidistribution

/// Occupancy of a `grid_n × grid_n` partition of the layered annulus.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub grid_n: usize,
    pub counts: Vec<u64>,
}

impl Occupancy {
    pub fn new(grid_n: usize) -> Self {
        Self { grid_n, counts: vec![0; grid_n * grid_n] }
    }

    pub fn cell(&self, sys: &TwistSystem, p: Annular) -> usize {
        let g = &sys.geom;
        let n = self.grid_n;
        let i = ((g.wrap_s(p.s) / g.track_length * n as f64) as usize).min(n - 1);
        let j = ((p.u / g.width_w * n as f64).max(0.0) as usize).min(n - 1);
        j * n + i
    }

    pub fn add(&mut self, sys: &TwistSystem, p: Annular) {
        let c = self.cell(sys, p);
        self.counts[c] += 1;
    }

    pub fn merge(mut self, other: &Occupancy) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Cells are congruent rectangles, so the area weights are uniform.
    pub fn area_weights(&self) -> Vec<f64> {
        let k = self.counts.len();
        vec![1.0 / k as f64; k]
    }

    pub fn discrepancy(&self) -> f64 {
        let tot = self.total() as f64;
        let p: Vec<f64> = self.counts.iter().map(|&c| c as f64 / tot).collect();
        total_variation(&p, &self.area_weights())
    }
}

/// `sup_A |μ̂(A) − μ(A)|` over unions of cells, i.e. `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquidistributionReport {
    pub grid_n: usize,
    pub n_iters: usize,
    pub n_orbits: usize,
    pub discrepancy: f64,
    pub occupancy: Occupancy,
}

/// Occupancy of `n_iters` iterates after each given start.
pub fn equidistribution_from(sys: &TwistSystem, grid_n: usize, n_iters: usize, starts: &[Annular]) -> EquidistributionReport {
    let occ = starts
        .par_iter()
        .map(|&p| {
            let mut occ = Occupancy::new(grid_n);
            let mut q = p;
            for _ in 0..n_iters {
                q = sys.step(q);
                occ.add(sys, q);
            }
            occ
        })
        .reduce(|| Occupancy::new(grid_n), |a, b| a.merge(&b));
    EquidistributionReport { grid_n, n_iters, n_orbits: starts.len(), discrepancy: occ.discrepancy(), occupancy: occ }
}

pub fn equidistribution(sys: &TwistSystem, grid_n: usize, n_iters: usize, n_orbits: usize, seed: u64) -> Result<EquidistributionReport> {
    if grid_n == 0 || n_iters == 0 || n_orbits == 0 {
        return Err(Error::Parameter("grid size, iterations and orbit count must be positive".into()));
    }
    let g = &sys.geom;
    let starts: Vec<Annular> = (0..n_orbits)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            Annular::new(rng.gen::<f64>() * g.track_length, rng.gen::<f64>() * g.width_w)
        })
        .collect();
    Ok(equidistribution_from(sys, grid_n, n_iters, &starts))
}

/// Pushes the cell-centre sample of a `fine_n × fine_n` grid through `H` and
/// returns the total-variation distance of the image from Lebesgue measure on
/// a `coarse_n × coarse_n` grid.
pub fn pushforward_discrepancy(sys: &TwistSystem, fine_n: usize, coarse_n: usize) -> f64 {
    let g = &sys.geom;
    let (hs, hu) = (g.track_length / fine_n as f64, g.width_w / fine_n as f64);
    let occ = (0..fine_n)
        .into_par_iter()
        .map(|j| {
            let mut occ = Occupancy::new(coarse_n);
            for i in 0..fine_n {
                let p = Annular::new((i as f64 + 0.5) * hs, (j as f64 + 0.5) * hu);
                occ.add(sys, sys.step(p));
            }
            occ
        })
        .reduce(|| Occupancy::new(coarse_n), |a, b| a.merge(&b));
    occ.discrepancy()
}

// ---------------------------------------------------------------------------
// Non-weak-mixing trace

#[derive(Debug, Clone, PartialEq)]
pub struct MixingTrace {
    pub times: Vec<f64>,
    /// Estimated `vol(Ψ_t(A) ∩ B)`.
    pub intersection_measure: Vec<f64>,
    pub hits: Vec<u64>,
    pub samples: usize,
    /// Fraction of sampled times with no hit at all.
    pub zero_fraction: f64,
    /// 95% upper bound on the intersection volume when there is no hit.
    pub zero_upper_bound: f64,
}

const MIXING_CHUNKS: usize = 64;

/// Monte Carlo trace of `vol(Ψ_t(A) ∩ B)` on the grid `t = 0, dt, …, t_max`.
pub fn non_weak_mixing_demo(
    sys: &TwistSystem,
    a: &CubeSet,
    b: &CubeSet,
    t_max: f64,
    dt: f64,
    samples: usize,
    seed: u64,
) -> Result<MixingTrace> {
    a.validate(sys)?;
    b.validate(sys)?;
    if !(dt > 0.0 && t_max >= 0.0) || samples == 0 {
        return Err(Error::Parameter("need dt > 0, t_max ≥ 0 and a positive sample count".into()));
    }
    let n_steps = (t_max / dt + 1e-9).floor() as usize;
    let per_chunk = samples.div_ceil(MIXING_CHUNKS);
    let hits = (0..MIXING_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let count = per_chunk.min(samples.saturating_sub(c * per_chunk));
            let mut pts: Vec<(Annular, f64)> = (0..count)
                .map(|_| {
                    let s = rng.gen_range(a.s_range.0..a.s_range.1);
                    let u = rng.gen_range(a.u_range.0..a.u_range.1);
                    let th = a.center_theta + a.epsilon * (2.0 * rng.gen::<f64>() - 1.0);
                    (Annular::new(s, u), th.rem_euclid(1.0))
                })
                .collect();
            let mut hits = vec![0u64; n_steps + 1];
            for (k, h) in hits.iter_mut().enumerate() {
                if k > 0 {
                    for p in pts.iter_mut() {
                        let (base, th, _) = sys.flow_raw(p.0, p.1, dt);
                        *p = (base, th);
                    }
                }
                *h = pts.iter().filter(|p| b.contains(p.0, p.1)).count() as u64;
            }
            hits
        })
        .reduce(
            || vec![0u64; n_steps + 1],
            |mut x, y| {
                for (a, b) in x.iter_mut().zip(&y) {
                    *a += b;
                }
                x
            },
        );
    let vol = a.volume();
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
    let intersection_measure = hits.iter().map(|&h| vol * h as f64 / samples as f64).collect();
    let zeros = hits.iter().filter(|&&h| h == 0).count();
    Ok(MixingTrace {
        times,
        intersection_measure,
        hits,
        samples,
        zero_fraction: zeros as f64 / (n_steps + 1) as f64,
        zero_upper_bound: vol * 3.0 / samples as f64,
    })
}

/// Two lobe cubes of fibre half-width `epsilon` at the same height, one in
/// each lobe.
pub fn lobe_cube_pair(sys: &TwistSystem, epsilon: f64) -> Result<(CubeSet, CubeSet)> {
    let g = &sys.geom;
    let (lo1, hi1) = (0.0, g.le1());
    let (lo2, hi2) = (g.half(), g.le2());
    let u = (0.2 * g.width_w, 0.7 * g.width_w);
    let frac = |lo: f64, hi: f64| (lo + 0.2 * (hi - lo), lo + 0.8 * (hi - lo));
    let a = CubeSet { s_range: frac(lo1, hi1), u_range: u, epsilon, center_theta: 0.5 };
    let b = CubeSet { s_range: frac(lo2, hi2), u_range: u, epsilon, center_theta: 0.5 };
    a.validate(sys)?;
    b.validate(sys)?;
    Ok((a, b))
}
