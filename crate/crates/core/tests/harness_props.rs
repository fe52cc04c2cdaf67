use gibbslab::harness::{
    append_jsonl, concentration_experiment, convergence_experiment, interpolation_monotonicity, read_jsonl, replay,
    write_csv, ConcentrationConfig, ConvergenceConfig, Experiment, InterpolationConfig, ModelRef, MomentsConfig,
    Verdict,
};
use gibbslab::model::params;
use gibbslab::Error;
use proptest::prelude::*;

fn is_model() -> ModelRef {
    ModelRef::new("independent_set", params([("lambda", 1.0)]))
}

fn interpolation(coupled: bool) -> InterpolationConfig {
    InterpolationConfig {
        model: is_model(),
        n: 8,
        n1: 4,
        c: "1".parse().unwrap(),
        samples: 2000,
        seed: 77,
        coupled,
        threshold_se: 3.0,
        force: false,
    }
}

#[test]
fn coupling_shrinks_difference_errors() {
    let coupled = interpolation_monotonicity(&interpolation(true)).unwrap();
    let independent = interpolation_monotonicity(&interpolation(false)).unwrap();
    let total = |rec: &gibbslab::harness::ExperimentRecord| -> f64 {
        (0..8).map(|t| rec.result(&format!("diff_se_t{t}")).unwrap()).sum()
    };
    assert!(total(&coupled) < total(&independent), "{} vs {}", total(&coupled), total(&independent));
    for t in 0..8 {
        let key = format!("diff_se_t{t}");
        assert!(coupled.result(&key).unwrap() < independent.result(&key).unwrap(), "{key}");
    }
}

#[test]
fn uncertified_models_need_force() {
    let mut cfg = interpolation(true);
    cfg.model = ModelRef::new("ising", params([("beta", 0.7), ("h", 1.0)]));
    cfg.samples = 50;
    assert!(matches!(interpolation_monotonicity(&cfg), Err(Error::NotCertified(_))));
    cfg.force = true;
    assert_eq!(interpolation_monotonicity(&cfg).unwrap().verdict, Verdict::ReportOnly);
}

#[test]
fn deterministic_partition_function_is_report_only() {
    let potts = ModelRef::new("potts", params([("q", 3.0), ("beta", 0.0)]));
    let rec = concentration_experiment(&ConcentrationConfig {
        model: potts.clone(),
        n_list: vec![4, 6, 8],
        c: "1".parse().unwrap(),
        samples: 20,
        seed: 3,
        max_slope: -0.3,
    })
    .unwrap();
    assert_eq!(rec.verdict, Verdict::ReportOnly);
    assert_eq!(rec.result("std_n6"), Some(0.0));

    let rec = convergence_experiment(&ConvergenceConfig {
        model: potts,
        n_list: vec![4, 8],
        c: "1".parse().unwrap(),
        samples: 10,
        seed: 3,
    })
    .unwrap();
    for n in [4, 8] {
        let ratio = rec.result(&format!("a_over_n_n{n}")).unwrap();
        assert!((ratio - 3f64.ln()).abs() < 1e-12, "{ratio}");
    }
}

#[test]
fn concentration_slope_is_seed_stable() {
    let slope = |seed| {
        concentration_experiment(&ConcentrationConfig {
            model: is_model(),
            n_list: vec![6, 8, 10, 12, 14],
            c: "1".parse().unwrap(),
            samples: 4000,
            seed,
            max_slope: -0.3,
        })
        .unwrap()
        .result("slope")
        .unwrap()
    };
    let (a, b) = (slope(21), slope(22));
    assert!((a - b).abs() <= 0.15, "{a} vs {b}");
}

#[test]
fn records_survive_jsonl_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.jsonl");
    let mut cfg = interpolation(true);
    cfg.samples = 100;
    let a = interpolation_monotonicity(&cfg).unwrap();
    let b = Experiment::Moments(MomentsConfig {
        model: ModelRef::new("potts", params([("q", 2.0), ("beta", 0.4)])),
        n: 3,
        n1: 1,
        r: 2,
        alpha: None,
        base_edges: 2,
        seed: 5,
    })
    .run()
    .unwrap();
    append_jsonl(&path, &a).unwrap();
    append_jsonl(&path, &b).unwrap();
    let back = read_jsonl(&path).unwrap();
    assert_eq!(back.len(), 2);
    assert!(back[0].same_results(&a) && back[1].same_results(&b));
    assert!(replay(&back[1]).unwrap().same_results(&b));

    let mut csv = Vec::new();
    write_csv(&back, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("experiment,verdict,timestamp"));
    assert_eq!(lines.count(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn moment_inequality_holds_for_certified_models(
        which in 0usize..6,
        n in 2usize..4,
        n1_pick in 0usize..2,
        r in 1usize..3,
        base_edges in 0usize..4,
        seed in any::<u64>(),
    ) {
        let model = match which {
            0 => is_model(),
            1 => ModelRef::new("potts", params([("q", 2.0), ("beta", 0.9)])),
            2 => ModelRef::new("ising", params([("beta", -0.6), ("h", 0.8)])),
            3 => ModelRef::new("ksat", params([("k", 2.0), ("beta", 1.4)])),
            4 => ModelRef::new("viana_bray", params([("k", 2.0), ("beta", 0.5), ("h", 1.2)])),
            _ => ModelRef::new("xor", params([("k", 2.0), ("beta", 0.8)])),
        };
        let n1 = 1 + n1_pick.min(n - 2);
        let rec = Experiment::Moments(MomentsConfig { model, n, n1, r, alpha: None, base_edges, seed })
            .run()
            .unwrap();
        prop_assert_eq!(rec.verdict, Verdict::Pass, "{:?}", rec.results);
    }
}
