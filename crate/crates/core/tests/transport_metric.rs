use nslang_core::diagnostics::{wasserstein2_grid, GridMeasure, GridSpec};
use proptest::prelude::*;

fn measure(spec: GridSpec, raw: &[f64]) -> GridMeasure {
    GridMeasure::normalized(spec, raw.to_vec()).unwrap()
}

fn raw_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    // roughly a third of the bins empty, and never all of them
    proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0, 0.01f64..1.0], n)
        .prop_filter("nonempty", |w| w.iter().any(|&x| x > 0.0))
}

const RES: usize = 5;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn symmetric_exactly(a in raw_weights(RES * RES), b in raw_weights(RES * RES)) {
        let spec = GridSpec::square(-1.0, 1.0, RES).unwrap();
        let (p, q) = (measure(spec, &a), measure(spec, &b));
        prop_assert_eq!(wasserstein2_grid(&p, &q).unwrap(), wasserstein2_grid(&q, &p).unwrap());
    }

    #[test]
    fn triangle_inequality(
        a in raw_weights(RES * RES),
        b in raw_weights(RES * RES),
        c in raw_weights(RES * RES),
    ) {
        let spec = GridSpec::square(-1.0, 1.0, RES).unwrap();
        let (p, q, r) = (measure(spec, &a), measure(spec, &b), measure(spec, &c));
        let pq = wasserstein2_grid(&p, &q).unwrap();
        let qr = wasserstein2_grid(&q, &r).unwrap();
        let pr = wasserstein2_grid(&p, &r).unwrap();
        prop_assert!(pr <= pq + qr + 1e-9, "{} > {} + {}", pr, pq, qr);
    }

    #[test]
    fn identity_of_indiscernibles(a in raw_weights(RES * RES), b in raw_weights(RES * RES)) {
        let spec = GridSpec::square(-1.0, 1.0, RES).unwrap();
        let (p, q) = (measure(spec, &a), measure(spec, &b));
        prop_assert_eq!(wasserstein2_grid(&p, &p).unwrap(), 0.0);
        if p != q {
            prop_assert!(wasserstein2_grid(&p, &q).unwrap() > 0.0);
        }
    }

    #[test]
    fn bounded_by_tv_times_diameter(a in raw_weights(RES * RES), b in raw_weights(RES * RES)) {
        // moving the non-shared mass anywhere costs at most diam^2 per unit
        let spec = GridSpec::square(-1.0, 1.0, RES).unwrap();
        let (p, q) = (measure(spec, &a), measure(spec, &b));
        let tv = nslang_core::diagnostics::tv_distance_grid(&p, &q).unwrap();
        let h = spec.width(0);
        let diam_sq = 2.0 * ((RES - 1) as f64 * h).powi(2);
        let w = wasserstein2_grid(&p, &q).unwrap();
        prop_assert!(w * w <= tv * diam_sq + 1e-12);
        // and at least the cheapest possible move for the non-shared mass
        prop_assert!(w * w >= tv * h * h - 1e-12);
    }
}

#[test]
fn translate_by_one_bin_on_fine_grid() {
    let spec = GridSpec::square(-2.5, 2.5, 60).unwrap();
    let h = spec.width(1);
    let r = spec.resolution;
    let mut w = vec![0.0; spec.n_bins()];
    for i in 10..50 {
        for j in 5..40 {
            let c = spec.center(i * r + j);
            w[i * r + j] = (-(c[0] * c[0] + (c[1] + 0.5).powi(2))).exp();
        }
    }
    let mut shifted = vec![0.0; spec.n_bins()];
    for i in 0..r {
        for j in 0..r - 1 {
            shifted[i * r + j + 1] = w[i * r + j];
        }
    }
    let d = wasserstein2_grid(&measure(spec, &w), &measure(spec, &shifted)).unwrap();
    assert!((d - h).abs() < 1e-12, "{d} vs {h}");
}
