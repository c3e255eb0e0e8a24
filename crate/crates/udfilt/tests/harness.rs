use proptest::prelude::*;
use udfilt::harness::{add_noise, gen_markov, run_experiment, ExperimentConfig, LossSpec};
use udfilt::io::{read_symbols, write_symbols};

fn small(seeds: Vec<u64>) -> ExperimentConfig {
    ExperimentConfig {
        n_train: 20_000,
        n_test: 2_000,
        n_th: 16,
        k_values: vec![-1, 0, 1],
        seeds,
        ..Default::default()
    }
}

#[test]
fn same_config_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut cfg = small(vec![0, 1]);
        cfg.output = Some(dir.path().join(format!("{name}.csv")));
        cfg.summary = Some(dir.path().join(format!("{name}_summary.csv")));
        let r = run_experiment(&cfg).unwrap();
        r.save(cfg.output.as_deref(), cfg.summary.as_deref()).unwrap();
        (
            std::fs::read(cfg.output.unwrap()).unwrap(),
            std::fs::read(cfg.summary.unwrap()).unwrap(),
        )
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert!(String::from_utf8(a.0).unwrap().starts_with("method,k,seed,mse"));
}

#[test]
fn noiseless_source_is_recovered_exactly() {
    let cfg = ExperimentConfig {
        noiseless: true,
        k_values: vec![0, 2],
        loss: LossSpec::SquaredLabels,
        ..small(vec![3])
    };
    let r = run_experiment(&cfg).unwrap();
    for k in [0, 2] {
        assert_eq!(r.mean("universal", k), Some(0.0));
        assert_eq!(r.mean("theory", k), Some(0.0));
    }
}

#[test]
fn true_law_makes_universal_match_theory() {
    let cfg = ExperimentConfig {
        true_spa: true,
        ..small(vec![4])
    };
    let r = run_experiment(&cfg).unwrap();
    for k in [-1, 0, 1] {
        let (u, t) = (r.mean("universal", k).unwrap(), r.mean("theory", k).unwrap());
        assert!((u - t).abs() < 1e-9, "k {k}: {u} vs {t}");
    }
}

#[test]
fn noise_takes_values_on_the_sum_alphabet() {
    let x = gen_markov(0.3, 500, 9).unwrap();
    let z = add_noise(&x, 9).unwrap();
    for (a, b) in x.labels().zip(z.labels()) {
        assert!(a == 1 || a == -1);
        assert!((b - a).abs() == 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulated_files_round_trip(p in 0.01f64..0.99, n in 1usize..300, seed in any::<u64>()) {
        let z = add_noise(&gen_markov(p, n, seed).unwrap(), seed).unwrap();
        let mut buf = Vec::new();
        write_symbols(&mut buf, &z).unwrap();
        prop_assert_eq!(read_symbols(&buf[..]).unwrap(), z);
    }

    #[test]
    fn flip_rate_tracks_p(p in 0.05f64..0.95, seed in any::<u64>()) {
        let x: Vec<i64> = gen_markov(p, 20_000, seed).unwrap().labels().collect();
        let flips = x.windows(2).filter(|w| w[0] != w[1]).count() as f64 / (x.len() - 1) as f64;
        // Binomial standard error is at most 0.0036 here.
        prop_assert!((flips - p).abs() < 0.02, "p {} flips {}", p, flips);
    }
}
