mod common;

use common::*;
use rand::seq::SliceRandom;
use zeroshot::evaluation::{
    generate_synthetic_pair_spaces, run_with_data, ExperimentData, ExperimentSettings, LambdaMode, SynthConfig,
};
use zeroshot::hubness::cosine_to_mean_correlation;
use zeroshot::mapper::fit_ridge;
use zeroshot::retrieval::Method;

fn data(cfg: &SynthConfig) -> ExperimentData {
    let s = generate_synthetic_pair_spaces(cfg).unwrap();
    ExperimentData {
        source: s.source,
        target: s.target,
        train: s.train,
        test: s.test,
    }
}

fn nn_accuracy(cfg: &SynthConfig) -> f64 {
    let settings = ExperimentSettings {
        lambda_modes: vec![LambdaMode::None],
        methods: vec![Method::Nn],
        seed: cfg.seed,
        ..ExperimentSettings::default()
    };
    run_with_data(&settings, &data(cfg)).unwrap().runs[0].methods[0].accuracy
}

#[test]
fn noise_free_mapping_is_recovered_exactly() {
    let cfg = SynthConfig {
        seed: 9,
        d: 50,
        n_train: 500,
        n_test: 200,
        n_targets: 1000,
        noise_sigma: 0.0,
    };
    let s = generate_synthetic_pair_spaces(&cfg).unwrap();
    let x = s.source.matrix().slice(ndarray::s![..500, ..]).to_owned();
    let y = s.target.matrix().slice(ndarray::s![..500, ..]).to_owned();
    let map = fit_ridge(x.view(), y.view(), 0.0).unwrap();
    let resid = frobenius(&(x.dot(&map.weights()) - &y));
    assert!(resid < 1e-8, "residual {resid}");
    assert_eq!(nn_accuracy(&cfg), 100.0);
}

#[test]
fn overwhelming_noise_approaches_chance() {
    let chance = 100.0 / 1000.0;
    let accs: Vec<f64> = (0..20)
        .map(|seed| {
            nn_accuracy(&SynthConfig {
                seed,
                d: 50,
                n_train: 300,
                n_test: 600,
                n_targets: 1000,
                noise_sigma: 10.0,
            })
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!(mean <= 3.0 * chance && mean >= chance / 3.0, "mean {mean}% vs chance {chance}%: {accs:?}");
}

#[test]
fn gc_beats_nn_on_small_experiment() {
    let mut wins = 0;
    let mut log = Vec::new();
    for seed in 0..20 {
        let cfg = SynthConfig {
            seed,
            d: 50,
            n_train: 500,
            n_test: 200,
            n_targets: 5000,
            noise_sigma: 1.0,
        };
        let settings = ExperimentSettings {
            lambda_modes: vec![LambdaMode::None],
            methods: vec![Method::Nn, Method::Gc],
            seed,
            ..ExperimentSettings::default()
        };
        let r = run_with_data(&settings, &data(&cfg)).unwrap();
        let (nn, gc) = (r.runs[0].methods[0].accuracy, r.runs[0].methods[1].accuracy);
        wins += (gc >= nn) as usize;
        log.push((nn, gc));
    }
    assert!(wins >= 11, "gc >= nn in {wins}/20: {log:?}");
}

#[test]
fn independent_counts_give_small_rho() {
    let mut small = 0;
    for seed in 0..100 {
        let mut rng = rng(seed);
        let targets = gaussian(&mut rng, 1000, 10);
        let pivots = gaussian(&mut rng, 50, 10) + 0.5;
        let mut n_k: Vec<u32> = (0..1000).map(|i| i % 37).collect();
        n_k.shuffle(&mut rng);
        let c = cosine_to_mean_correlation(targets.view(), pivots.view(), &n_k, None).unwrap();
        small += (c.rho.abs() < 0.1) as usize;
    }
    assert!(small >= 95, "|rho| < 0.1 in {small}/100");
}

#[test]
fn nn_accuracy_ignores_aux_pivots() {
    let cfg = SynthConfig {
        seed: 5,
        d: 30,
        n_train: 300,
        n_test: 100,
        n_targets: 2000,
        noise_sigma: 1.0,
    };
    let d = data(&cfg);
    let base = ExperimentSettings {
        lambda_modes: vec![LambdaMode::None],
        seed: 5,
        ..ExperimentSettings::default()
    };
    let a = run_with_data(&base, &d).unwrap();
    let b = run_with_data(&ExperimentSettings { aux_pivots: 1500, ..base }, &d).unwrap();
    assert_eq!(b.aux_pivots_used, 1500);
    assert_eq!(a.runs[0].methods[0].accuracy, b.runs[0].methods[0].accuracy);
}
