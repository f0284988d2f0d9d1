use std::cell::Cell;

use forcecheck_core::classifier::{distance, Decision, Label, Metric};
use forcecheck_core::datagen::{gen_dataset, GenParams};
use forcecheck_core::online::{
    run_online, run_permutation, run_replicated, run_with_oracle, LabeledTrial, LoopConfig,
    Observation, Phase, PreparedTrials,
};
use forcecheck_core::signal::preprocess;
use forcecheck_core::{Error, FeatureVector};

/// (phase, decision, predicted) per trial plus final dataset size.
type Trace = (Vec<(Phase, Decision, Label)>, usize);

/// Straight-line replay of the loop: seed until quota, then classify with
/// a full sort over a snapshot refreshed every `retrain_interval` trials.
fn reference(features: &[Vec<f64>], truths: &[Label], cfg: &LoopConfig) -> Trace {
    let quota = (cfg.seed_size as f64 * cfg.seed_min_positive_fraction - 1e-9).ceil() as usize;
    let mut data: Vec<(Vec<f64>, Label)> = Vec::new();
    let mut out = Vec::new();
    let mut i = 0;
    loop {
        let positives = data.iter().filter(|d| d.1 == Label::Positive).count();
        if data.len() >= cfg.seed_size && positives >= quota {
            break;
        }
        data.push((features[i].clone(), truths[i]));
        out.push((Phase::Seed, Decision::Uncertain, truths[i]));
        i += 1;
    }
    let mut snapshot = data.clone();
    let mut processed = 0;
    while i < features.len() {
        let mut order: Vec<(f64, usize)> = snapshot
            .iter()
            .enumerate()
            .map(|(j, d)| (distance(&features[i], &d.0, cfg.metric).unwrap(), j))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let pos = order[..cfg.k]
            .iter()
            .filter(|o| snapshot[o.1].1 == Label::Positive)
            .count();
        let (label, count) = if pos > cfg.k - pos {
            (Label::Positive, pos)
        } else {
            (Label::Negative, cfg.k - pos)
        };
        if (count as f64) * 100.0 >= cfg.l_value * cfg.k as f64 {
            out.push((Phase::Classified, Decision::from(label), label));
        } else {
            out.push((Phase::Fallback, Decision::Uncertain, truths[i]));
            data.push((features[i].clone(), truths[i]));
        }
        processed += 1;
        if processed % cfg.retrain_interval == 0 {
            snapshot = data.clone();
        }
        i += 1;
    }
    (out, data.len())
}

fn features_of(trials: &[LabeledTrial], cfg: &LoopConfig) -> Vec<Vec<f64>> {
    trials
        .iter()
        .map(|t| preprocess(&t.trace, &cfg.preprocess).unwrap().into_inner())
        .collect()
}

fn hard_params() -> GenParams {
    // closer classes so that abstentions and errors both occur
    let mut p = GenParams::default();
    p.negative.contact_time_mean = 0.8;
    p.noise_std = 1.0;
    p
}

fn small_cfg(l_value: f64) -> LoopConfig {
    LoopConfig {
        k: 5,
        seed_size: 10,
        retrain_interval: 4,
        l_value,
        n_runs: 3,
        rng_seed: 17,
        ..LoopConfig::default()
    }
}

#[test]
fn matches_reference_on_forty_trials() {
    let trials = gen_dataset(18, 22, &hard_params(), 5).unwrap();
    for l in [50.0, 80.0, 100.0] {
        for metric in Metric::ALL {
            let cfg = LoopConfig {
                metric,
                ..small_cfg(l)
            };
            let report = run_online(&trials, &cfg).unwrap();
            let truths: Vec<Label> = trials.iter().map(|t| t.truth).collect();
            let (expected, size) = reference(&features_of(&trials, &cfg), &truths, &cfg);
            let got: Vec<_> = report
                .records
                .iter()
                .map(|r| (r.phase, r.decision, r.predicted))
                .collect();
            assert_eq!(got, expected, "l={l} {metric}");
            if l == 100.0 {
                assert!(got.iter().any(|g| g.0 == Phase::Fallback));
                assert!(got.iter().any(|g| g.0 == Phase::Classified));
            }
            assert_eq!(report.final_dataset_size, size);
            for (r, t) in report.records.iter().zip(&trials) {
                assert_eq!(r.trial_id, t.id);
                assert_eq!(r.truth, t.truth);
            }
        }
    }
}

#[test]
fn replicated_runs_match_reference_per_shuffle() {
    let trials = gen_dataset(14, 16, &hard_params(), 9).unwrap();
    let cfg = small_cfg(100.0);
    let reports = run_replicated(&trials, &cfg).unwrap();
    assert_eq!(reports.len(), 3);
    let features = features_of(&trials, &cfg);
    for (run, report) in reports.iter().enumerate() {
        assert_eq!(report.run, run);
        let order = run_permutation(trials.len(), cfg.rng_seed, run);
        let f: Vec<_> = order.iter().map(|&i| features[i].clone()).collect();
        let t: Vec<_> = order.iter().map(|&i| trials[i].truth).collect();
        let (expected, size) = reference(&f, &t, &cfg);
        assert_eq!(
            report.verification_count(),
            expected.iter().filter(|e| e.0 != Phase::Classified).count()
        );
        assert_eq!(report.final_dataset_size, size);
        let ids: Vec<_> = order.iter().map(|&i| trials[i].id.clone()).collect();
        let got: Vec<_> = report.records.iter().map(|r| r.trial_id.clone()).collect();
        assert_eq!(got, ids);
    }
}

#[test]
fn unshuffled_single_run_equals_run_online() {
    let trials = gen_dataset(20, 20, &hard_params(), 2).unwrap();
    let cfg = LoopConfig {
        n_runs: 1,
        shuffle: false,
        ..small_cfg(90.0)
    };
    let reports = run_replicated(&trials, &cfg).unwrap();
    assert_eq!(reports, vec![run_online(&trials, &cfg).unwrap()]);
}

#[test]
fn replicated_runs_are_deterministic_and_schedule_independent() {
    let trials = gen_dataset(30, 30, &hard_params(), 4).unwrap();
    let cfg = LoopConfig {
        n_runs: 6,
        ..small_cfg(100.0)
    };
    let a = run_replicated(&trials, &cfg).unwrap();
    let b = run_replicated(&trials, &cfg).unwrap();
    assert_eq!(a, b);
    let prepared = PreparedTrials::new(&trials, &cfg.preprocess).unwrap();
    assert_eq!(a, prepared.run_replicated_sequential(&cfg).unwrap());
}

#[test]
fn duplicates_of_seeds_are_always_classified() {
    // One positive and one negative trace, each repeated: the seed holds 11
    // copies of both, so every later duplicate has 11 identical neighbors.
    let pair = gen_dataset(1, 1, &GenParams::default(), 1).unwrap();
    let stream: Vec<LabeledTrial> = (0..100)
        .map(|n| LabeledTrial {
            id: format!("dup{n}"),
            ..pair[n % 2].clone()
        })
        .collect();
    for l_value in [50.0, 75.0, 90.0, 100.0] {
        let cfg = LoopConfig {
            l_value,
            ..LoopConfig::default()
        };
        let report = run_online(&stream, &cfg).unwrap();
        assert_eq!(report.verification_count(), cfg.seed_size);
        for r in &report.records[cfg.seed_size..] {
            assert_eq!(r.phase, Phase::Classified);
            assert_eq!(r.predicted, r.truth);
        }
    }
}

#[test]
fn majority_vote_never_abstains_after_seeding() {
    for seed in 0..10 {
        let trials = gen_dataset(40, 60, &hard_params(), seed).unwrap();
        let cfg = LoopConfig {
            l_value: 50.0,
            rng_seed: seed,
            n_runs: 2,
            ..LoopConfig::default()
        };
        for report in run_replicated(&trials, &cfg).unwrap() {
            assert_eq!(report.fallback_count(), 0);
            assert_eq!(report.verification_count(), report.seed_count());
            assert_eq!(report.final_dataset_size, report.seed_count());
        }
    }
}

#[test]
fn oracle_calls_equal_verified_steps() {
    let trials = gen_dataset(25, 35, &hard_params(), 12).unwrap();
    let cfg = small_cfg(100.0);
    let stream: Vec<Observation> = trials
        .iter()
        .map(|t| Observation {
            id: t.id.clone(),
            features: preprocess(&t.trace, &cfg.preprocess).unwrap(),
        })
        .collect();
    let calls = Cell::new(0usize);
    let mut oracle = |p: usize| {
        calls.set(calls.get() + 1);
        trials[p].truth
    };
    let (steps, size) = run_with_oracle(&stream, &mut oracle, &cfg).unwrap();
    let verified = steps.iter().filter(|s| s.verified()).count();
    assert_eq!(calls.get(), verified);
    assert_eq!(size, verified);
    assert!(steps.iter().any(|s| s.phase == Phase::Classified));
}

#[test]
fn first_post_seed_decision_is_monotone_in_l_value() {
    for seed in 0..30 {
        let trials = gen_dataset(20, 20, &hard_params(), seed).unwrap();
        let lenient = run_online(&trials, &small_cfg(60.0)).unwrap();
        let strict = run_online(&trials, &small_cfg(100.0)).unwrap();
        let first = lenient.seed_count();
        assert_eq!(first, strict.seed_count());
        let (a, b) = (&lenient.records[first], &strict.records[first]);
        if b.decision != Decision::Uncertain {
            assert_eq!(a.decision, b.decision);
        }
    }
}

#[test]
fn verification_burden_grows_with_l_value_on_average() {
    let (mut strict, mut lenient) = (0usize, 0usize);
    for seed in 0..30 {
        let trials = gen_dataset(40, 40, &hard_params(), 100 + seed).unwrap();
        strict += run_online(&trials, &small_cfg(100.0))
            .unwrap()
            .verification_count();
        lenient += run_online(&trials, &small_cfg(50.0))
            .unwrap()
            .verification_count();
    }
    assert!(strict >= lenient, "{strict} < {lenient}");
}

#[test]
fn rejects_streams_without_both_classes() {
    let mut trials = gen_dataset(0, 40, &GenParams::default(), 1).unwrap();
    assert!(matches!(
        run_online(&trials, &small_cfg(100.0)),
        Err(Error::InvalidConfig(_))
    ));
    trials.truncate(5);
    assert!(run_online(&trials, &small_cfg(100.0)).is_err());
}

#[test]
fn zero_feature_vectors_surface_as_errors() {
    let stream: Vec<Observation> = (0..12)
        .map(|i| Observation {
            id: i.to_string(),
            features: FeatureVector::new(vec![0.0, 0.0]).unwrap(),
        })
        .collect();
    let mut oracle = |p: usize| {
        if p.is_multiple_of(2) {
            Label::Positive
        } else {
            Label::Negative
        }
    };
    let result = run_with_oracle(&stream, &mut oracle, &small_cfg(100.0));
    assert_eq!(result.unwrap_err(), Error::ZeroNorm);
}
