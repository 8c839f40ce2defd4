use proptest::prelude::*;

use twistflow::dynamics::TwistSystem;
use twistflow::geometry::{Annular, TrackGeometry};
use twistflow::maps::{cone_step, eigen, l_ratio, Cone, ConeKind, Membership, Step};
use twistflow::segments::{decompose_return, iterate_segment_f, rational_spacing, LinearSegment, ReturnCase};

fn sys7() -> TwistSystem {
    TwistSystem::with_winding(7.0, 2).unwrap()
}

fn circ(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn fold_unfold_round_trip(fs in 0.0..1.0f64, fu in 0.0..1.0f64) {
        let g = TrackGeometry::default();
        let p = Annular::new(fs * g.track_length, fu * g.width_w);
        prop_assume!(!g.on_seam(p));
        let un = g.point(p);
        let folded = g.fold(&un);
        let back = g.unfold(&folded);
        prop_assert_eq!(folded.region, un.region);
        prop_assert!((back.x - un.x).abs() < 1e-12 && (back.y - un.y).abs() < 1e-12, "{:?} -> {:?}", un, back);
    }

    #[test]
    fn spacing_brackets_the_product(alpha in 2.01..50.0f64, x in 1e-6..0.999_999f64) {
        let lv = x / alpha;
        let sp = rational_spacing(alpha, lv).unwrap();
        let ax = alpha * lv;
        prop_assert!(!sp.trivial);
        prop_assert!(1.0 / (sp.q as f64) < ax);
        prop_assert!(ax <= 1.0 / (sp.q as f64 - 1.0));
    }

    #[test]
    fn spacing_bound_implies_lattice_gap(alpha in 2.01..50.0f64, x in 1e-5..0.5f64, stretch in 1.0..4.0f64) {
        // x plays 2δ·l_v(γ); l_v(I2) at or above x / (α(1 − x))
        let lv_i2 = stretch * x / (alpha * (1.0 - x));
        let sp = rational_spacing(alpha, lv_i2).unwrap();
        prop_assert!(sp.d >= x, "d = {} < {}", sp.d, x);
    }

    #[test]
    fn eigen_relations(alpha in 2.0..60.0f64) {
        let e = eigen(alpha).unwrap();
        prop_assert!((e.lambda_plus * e.lambda_minus - 1.0).abs() < 1e-10);
        let m = l_ratio(alpha).abs();
        prop_assert!((m * m - alpha * m + 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn flow_semigroup(fs in 0.0..1.0f64, fu in 0.0..1.0f64, th in 0.0..1.0f64, t1 in 0.0..5.0f64, t2 in 0.0..5.0f64) {
        let sys = sys7();
        let g = &sys.geom;
        let p = Annular::new(fs * g.track_length, fu * g.width_w);
        let (b1, th1, _) = sys.flow_raw(p, th, t1);
        let (b2, th2, _) = sys.flow_raw(b1, th1, t2);
        let (b, thd, _) = sys.flow_raw(p, th, t1 + t2);
        let db = (b.s - b2.s).abs().min(g.track_length - (b.s - b2.s).abs());
        prop_assert!(db < 1e-9 && (b.u - b2.u).abs() < 1e-9, "{:?} vs {:?}", b, b2);
        prop_assert!(circ(thd, th2) < 1e-9);
    }

    #[test]
    fn step_has_unit_determinant(fs in 0.0..1.0f64, fu in 0.0..1.0f64, k in 1u32..4, extra in 0.1..20.0f64) {
        let alpha = 2.0 * k as f64 + 0.5 + extra;
        let sys = TwistSystem::with_winding(alpha, k).unwrap();
        let g = &sys.geom;
        let (_, j) = sys.step_with_jacobian(Annular::new(fs * g.track_length, fu * g.width_w));
        prop_assert!((j.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cone_interior_maps_to_interior(alpha in 2.05..50.0f64, t in 0.001..0.999f64) {
        let m = l_ratio(alpha).abs();
        let c = [-t * m, 1.0];
        let r = cone_step(c, Step::F, alpha).unwrap();
        prop_assert_eq!(r.before_c, Membership::Interior);
        prop_assert_eq!(r.after_c_prime, Membership::Interior);
        let cp = [1.0, t * m];
        let r = cone_step(cp, Step::G, alpha).unwrap();
        prop_assert_eq!(Cone::new(ConeKind::CPrime, alpha).classify(cp), Membership::Interior);
        prop_assert_eq!(r.after_c, Membership::Interior);
    }

    #[test]
    fn shear_stretches_cone_segments(fs in 0.0..1.0f64, fu in 0.0..0.5f64, frac in 0.01..0.5f64, t in 0.0..1.0f64) {
        let sys = sys7();
        let g = &sys.geom;
        let l = sys.shear.l_ratio;
        let w = g.width_w;
        let lv = frac * w;
        let dir_s = t * l;
        let a = Annular::new(g.le1() + w * 0.5 + fs * w * 0.4, fu * (w - lv));
        let b = Annular::new(a.s + dir_s * lv, a.u + lv);
        let s = LinearSegment::between(g, a, b);
        let lh: f64 = iterate_segment_f(&s, &sys).iter().map(|p| p.l_h).sum();
        prop_assert!(lh >= s.l_v * (sys.alpha() + l) - 1e-12, "{} < {}", lh, s.l_v * (sys.alpha() + l));
    }

    #[test]
    fn decomposition_is_a_partition(ds in 0.01..0.1f64, fu in 0.0..0.5f64, fin in 0.05..0.95f64, rise in 0.0..0.5f64) {
        let sys = sys7();
        let g = &sys.geom;
        let w = g.width_w;
        let u0 = fu * w;
        let a = Annular::new(g.le1() - ds, u0);
        let b = Annular::new(g.le1() + fin * w, u0 + rise * (w - u0));
        let s = LinearSegment::between(g, a, b);
        let d = decompose_return(&s, &sys).unwrap();
        prop_assume!(d.case == ReturnCase::OneSquare);
        let pieces = d.pieces();
        let lv: f64 = pieces.iter().flatten().map(|p| p.l_v).sum();
        let lh: f64 = pieces.iter().flatten().map(|p| p.l_h).sum();
        prop_assert!((lv - s.l_v).abs() < 1e-12);
        prop_assert!((lh - s.l_h).abs() < 1e-12);
    }

    #[test]
    fn two_square_partition(f1 in 0.05..0.95f64, f2 in 0.05..0.95f64, fu in 0.0..1.0f64) {
        let sys = sys7();
        let g = &sys.geom;
        let w = g.width_w;
        let u = fu * w * 0.999;
        let a = Annular::new(g.le1() + f1 * w, u);
        let b = Annular::new(g.le2() + f2 * w, u);
        let s = LinearSegment::between(g, a, b);
        let d = decompose_return(&s, &sys).unwrap();
        prop_assert_eq!(d.case, ReturnCase::TwoSquares);
        let lh: f64 = d.pieces().iter().flatten().map(|p| p.l_h).sum();
        prop_assert!((lh - s.l_h).abs() < 1e-12);
        prop_assert!(d.i4.is_none());
    }
}
