use proptest::prelude::*;

use imagedim::estimators::{box_counts, lower_upper_box};
use imagedim::fields::{image_points, simulate, FieldSpec};
use imagedim::geometry::{cantor_set, CantorSpec, DiscreteMeasure, FractalSet, PointCloud};
use imagedim::harness::{predict, PredictInput, TheoremTag};
use imagedim::probes::{phi_hat, phi_kernel};
use imagedim::profile::potential_f;
use imagedim::sampling::{sample_sas, Seed, StableParams};

fn cloud(max_len: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec([0.0..1.0f64, 0.0..1.0f64], 2..max_len)
}

fn measure(points: &[[f64; 2]]) -> DiscreteMeasure<f64> {
    let pc = PointCloud::new(points.iter().map(|p| p.to_vec()).collect()).unwrap();
    DiscreteMeasure::uniform(pc).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn box_counts_shrink_with_scale(pts in cloud(300)) {
        let pc = PointCloud::new(pts.iter().map(|p| p.to_vec()).collect()).unwrap();
        let scales: Vec<f64> = (1..10).map(|k| 2f64.powi(-k)).collect();
        let counts = box_counts(&pc, &scales).unwrap();
        for w in counts.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!(*counts.last().unwrap() <= pc.len());
    }

    #[test]
    fn lower_box_never_exceeds_upper(pts in cloud(400)) {
        let pc = PointCloud::new(pts.iter().map(|p| p.to_vec()).collect()).unwrap();
        if let Ok((lo, hi)) = lower_upper_box(&pc, None) {
            prop_assert!(lo.value <= hi.value + 1e-12);
        }
    }

    #[test]
    fn potential_is_monotone_and_scale_covariant(
        pts in cloud(60),
        x in [0.0..1.0f64, 0.0..1.0f64],
        s in 0.1..3.0f64,
        c in 0.1..20.0f64,
    ) {
        let mu = measure(&pts);
        let scaled = mu.pushforward(2, |p| p.iter().map(|v| c * v).collect()).unwrap();
        let mut prev = 0.0;
        for k in 0..10 {
            let r = 2f64.powi(k - 8);
            let v = potential_f(&mu, s, &x, r).unwrap();
            prop_assert!(v >= prev);
            prev = v;
            let w = potential_f(&scaled, s, &[c * x[0], c * x[1]], c * r).unwrap();
            prop_assert!((v - w).abs() <= 1e-12 * v);
        }
        prop_assert!(prev <= mu.total_mass() + 1e-12);
    }

    #[test]
    fn phi_kernel_and_transform_are_bounded(x in -50.0..50.0f64, r in 0.05..5.0f64) {
        let k = phi_kernel(&[x], r);
        prop_assert!(k >= 0.0 && k <= r / std::f64::consts::PI + 1e-12);
        let h = phi_hat(&[x], r);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&h));
    }

    #[test]
    fn predictions_never_exceed_ambient_dimension(
        h in 0.05..0.99f64,
        d in 1usize..4,
        dim in 0.0..1.0f64,
    ) {
        for tag in [TheoremTag::HausdorffSet, TheoremTag::HausdorffMeasure, TheoremTag::PackingLowDim] {
            let p = predict(&PredictInput {
                tag,
                hurst: h,
                d,
                n_param: 1,
                dim_h_e: Some(dim),
                dim_p_e: Some(dim),
                profile: None,
                alpha: None,
            });
            if let Ok(p) = p {
                prop_assert!(p.value <= d as f64 + 1e-12);
                prop_assert!(p.value >= dim - 1e-12);
            }
        }
    }

    #[test]
    fn cantor_measure_is_a_probability(branches in 2usize..4, depth in 1usize..7) {
        let ratio = 0.9 / branches as f64;
        let set = cantor_set(&CantorSpec::homogeneous(branches, ratio, depth, 1)).unwrap();
        prop_assert_eq!(set.cloud.len(), branches.pow(depth as u32));
        prop_assert!((set.measure.total_mass() - 1.0).abs() < 1e-9);
        prop_assert!(set.cloud.points().all(|p| (0.0..=1.0).contains(&p[0])));
    }

    #[test]
    fn stable_sampling_is_reproducible(alpha in 0.3..2.0f64, seed in any::<u64>()) {
        let params = StableParams::new(alpha, 1.0).unwrap();
        let a = sample_sas(&params, 16, Seed::new(seed)).unwrap();
        let b = sample_sas(&params, 16, Seed::new(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn simulation_is_seed_deterministic_for_every_law() {
    for spec in [
        FieldSpec::fbm(0.4, 2, 256),
        FieldSpec::lfsm(1.6, 0.7, 1, 256),
        FieldSpec::hfsm(1.5, 0.5, 1, 256),
        FieldSpec::rhflm(0.6, 1, 256),
        FieldSpec::rosenblatt(0.35, 1, 256),
    ] {
        let a = simulate(spec.clone(), Seed::new(11)).unwrap();
        let b = simulate(spec.clone(), Seed::new(11)).unwrap();
        let c = simulate(spec, Seed::new(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
        assert!(a.at(0).iter().all(|v: &f64| *v == 0.0));
    }
}

#[test]
fn single_precision_pipeline_runs() {
    let path = simulate(FieldSpec::<f32>::fbm(0.5, 2, 1024), Seed::new(3)).unwrap();
    let set = FractalSet::<f32>::unit_cube(10, 1).unwrap();
    let img = image_points(&path, &set.cloud).unwrap();
    let (lo, hi) = lower_upper_box(&img, None).unwrap();
    assert!(lo.value > 1.0 && hi.value <= 2.1, "{} {}", lo.value, hi.value);
}
