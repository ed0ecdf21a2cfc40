use boxqi::domain::{classify, IndexSet, SymmetryTransform};
use boxqi::rational::{self, ceil_sig};
use boxqi::volume::{self, Dtype, VolumeHeader};
use boxqi::{approximate, boxspline, DomainGrid, Point, QiSpline, SampleField};
use proptest::prelude::*;
use std::sync::OnceLock;

fn grid() -> DomainGrid {
    DomainGrid::new([11, 12, 11], 0.5).unwrap()
}

fn point() -> impl Strategy<Value = Point> {
    let e = grid().extent();
    (0.0..e[0], 0.0..e[1], 0.0..e[2]).prop_map(|(x, y, z)| [x, y, z])
}

fn samples(seed: u64) -> SampleField {
    SampleField::from_fn(grid(), move |p| {
        let s = seed as f64 * 0.37;
        (p[0] * 1.3 + s).sin() * (p[1] - 0.4 * s).cos() + 0.2 * p[2] * p[2]
    })
}

fn cubic(c: &[f64; 20], p: Point) -> f64 {
    let mut out = 0.0;
    let mut k = 0;
    for d in 0..=3 {
        for i in 0..=d {
            for j in 0..=d - i {
                out += c[k] * p[0].powi(i) * p[1].powi(j) * p[2].powi(d - i - j);
                k += 1;
            }
        }
    }
    out
}

fn smooth_spline() -> &'static QiSpline {
    static S: OnceLock<QiSpline> = OnceLock::new();
    S.get_or_init(|| approximate(&samples(3), &grid()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translates_sum_to_one(x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
        let mut s = 0.0;
        for kz in -5..=1 {
            for ky in -3..=3 {
                for kx in -3..=3 {
                    s += boxspline::eval([x - kx as f64, y - ky as f64, z - kz as f64]);
                }
            }
        }
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_spline_is_nonnegative(x in -2.5f64..3.5, y in -2.5f64..3.5, z in -0.5f64..5.5) {
        prop_assert!(boxspline::eval([x, y, z]) >= -1e-14);
    }

    #[test]
    fn operator_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, p in point()) {
        let (f, g) = (samples(1), samples(2));
        let mix: Vec<f64> = f.values().iter().zip(g.values()).map(|(u, v)| a * u + b * v).collect();
        let h = SampleField::new(grid(), mix).unwrap();
        let q = |s: &SampleField| approximate(s, &grid()).unwrap().eval(p).unwrap();
        let want = a * q(&f) + b * q(&g);
        prop_assert!((q(&h) - want).abs() <= 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn cubics_are_reproduced(c in prop::array::uniform20(-1.0f64..1.0), p in point()) {
        let s = approximate(&SampleField::from_fn(grid(), |x| cubic(&c, x)), &grid()).unwrap();
        let want = cubic(&c, p);
        prop_assert!((s.eval(p).unwrap() - want).abs() <= 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn compiled_matches_direct(p in point()) {
        let mut s = smooth_spline().clone();
        let direct = s.eval_direct(p).unwrap();
        s.compile().unwrap();
        prop_assert!((s.eval(p).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn symmetry_index_maps_invert(t in 0usize..48, i in -1i64..14, j in -1i64..14, k in -1i64..14) {
        let t = SymmetryTransform::all()[t];
        let m = [11, 12, 13];
        prop_assert_eq!(t.invert_index(t.apply_index([i, j, k], m), m), [i, j, k]);
    }

    #[test]
    fn classification_maps_key_to_alpha(pick in 0usize..3211) {
        let g = DomainGrid::uniform(11, 1.0).unwrap();
        let alpha = IndexSet::new(&g).iter().nth(pick).unwrap();
        let c = classify(alpha, &g).unwrap();
        prop_assert_eq!(c.map_beta(c.key.alpha(), g.m()), alpha);
    }

    #[test]
    fn ceil_sig_is_tight(p in 1i64..10_000_000, q in 1i64..100_000) {
        let r = rational::frac(p, q);
        let text = ceil_sig(&r, 4);
        let u: f64 = text.parse().unwrap();
        prop_assert!(u >= rational::to_f64(&r) * (1.0 - 1e-15));
        // one unit lower in the fourth significant figure falls below r
        let ulp = 10f64.powi(u.log10().floor() as i32 - 3);
        prop_assert!(rational::to_f64(&r) > u - ulp);
        prop_assert!(text.chars().filter(|c| c.is_ascii_digit()).collect::<String>().trim_start_matches('0').len() <= 4);
    }

    #[test]
    fn raw_volumes_round_trip(bytes in prop::collection::vec(any::<u8>(), 2 * 13 * 13 * 14)) {
        let h = VolumeHeader::new([13, 13, 14], Dtype::U16);
        let (s, g) = volume::read_raw(&h, &bytes).unwrap();
        prop_assert_eq!(g.m(), [11, 11, 12]);
        prop_assert_eq!(volume::write_raw(&h, &s).unwrap(), bytes);
    }
}

#[test]
fn saved_splines_reload_identically() {
    let s = smooth_spline().clone().with_tag("probe").with_origin([1.0, -2.0, 0.5]);
    let mut buf = Vec::new();
    s.save(&mut buf).unwrap();
    let back = QiSpline::load(&mut buf.as_slice()).unwrap();
    assert_eq!(back.coefficients(), s.coefficients());
    assert_eq!(back.tag(), "probe");
    assert_eq!(back.origin(), s.origin());
    assert_eq!(back.eval([1.3, 2.2, 4.9]).unwrap(), s.eval([1.3, 2.2, 4.9]).unwrap());
}
