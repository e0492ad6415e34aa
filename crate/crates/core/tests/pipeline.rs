mod support;

use graph_teaching::analysis::{
    condition_summary, correlate, graphwise_profile, learning_curve, scaffold_selection_curve, score_datasets,
    SelectionOrdering,
};
use graph_teaching::fitting::{
    compare, fit_model, prepare_trials, simulate_subject, softmax_log_likelihood, uniform_floor, FitOptions, SimParams,
    UtilityCache,
};
use graph_teaching::records::Scaffolding;
use graph_teaching::records::{read_datasets, write_datasets, TrainingKind};
use graph_teaching::stimuli::{
    build_baseline_set, build_scaffold_set, generate_pool, read_stimuli, write_stimuli, Congruency, StimulusConfig,
};
use graph_teaching::{Condition, ModelName, Phase, ScaffoldKind};

#[test]
fn simulate_fit_and_analyze_a_baseline_experiment() {
    let cfg = StimulusConfig::default();
    let pool = generate_pool(&cfg, 24, None, 11).unwrap();
    let trials = build_baseline_set(&pool, 2).unwrap();
    assert_eq!(trials.len(), 40);

    let dir = tempfile::tempdir().unwrap();
    let stim_path = dir.path().join("stimuli.json");
    write_stimuli(&stim_path, &trials).unwrap();
    assert_eq!(read_stimuli(&stim_path).unwrap(), trials);

    let cache = UtilityCache::new();
    let subjects: Vec<_> = (0..4)
        .map(|i| {
            simulate_subject(
                &format!("bot-{i}"),
                &trials,
                Condition::baseline(),
                ModelName::Bot,
                SimParams::Argmax,
                i,
                &cache,
            )
            .unwrap()
        })
        .collect();
    let data_path = dir.path().join("data.jsonl");
    write_datasets(&data_path, &subjects).unwrap();
    let loaded = read_datasets(&data_path).unwrap();
    assert_eq!(loaded, subjects);

    let series = score_datasets(&loaded, &cache).unwrap();
    assert_eq!(series.trials.len(), 160);
    assert!(series.trials.iter().all(|t| t.score == 1.0));
    let profile = graphwise_profile(&series);
    assert_eq!(profile.len(), 20);
    assert!(profile.keys().all(|k| !k.ends_with("~flip")));
    assert_eq!(learning_curve(&series).unwrap().r, 0.0);
    let cells = condition_summary(&series);
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0].n_subjects, 4);

    let noisy =
        simulate_subject("noisy", &trials, Condition::baseline(), ModelName::Bot, SimParams::Beta(1.0), 9, &cache)
            .unwrap();
    let noisy_profile = graphwise_profile(&score_datasets(std::slice::from_ref(&noisy), &cache).unwrap());
    let c = correlate(&profile, &noisy_profile).unwrap();
    assert_eq!(c.n, 20);

    let opts = FitOptions::default();
    let prepared = prepare_trials(&noisy, ModelName::Bot, &opts, &cache).unwrap();
    let floor = uniform_floor(&prepared);
    assert!((softmax_log_likelihood(&prepared, 0.0) - floor).abs() < 1e-12);
    for model in ModelName::ALL {
        let fit = fit_model(&noisy, model, &opts, &cache).unwrap();
        assert!(fit.log_likelihood >= floor - 1e-9, "{model}");
        assert_eq!(fit.n_trials, 40);
    }
    let cmp = compare(&noisy, &ModelName::ALL, &opts, &cache).unwrap();
    assert_eq!(cmp.fits.len(), 8);
    assert!(cmp.delta_bic.is_some());
}

#[test]
fn scaffold_experiment_records_scaffolds_on_training_trials_only() {
    let cfg = StimulusConfig::default();
    let train = generate_pool(&cfg, 12, Some(Congruency::Incongruent), 3).unwrap();
    let test = generate_pool(&cfg, 5, Some(Congruency::Incongruent), 4).unwrap();
    let trials = build_scaffold_set(&train, &test, 1).unwrap();
    assert_eq!(trials.len(), 20);
    let cond = Condition::scaffold(TrainingKind::Incongruent, Scaffolding::Inference);
    let cache = UtilityCache::new();
    let mut d = simulate_subject("s", &trials, cond, ModelName::Bot, SimParams::Beta(3.0), 0, &cache).unwrap();
    for r in &d.trials {
        let expected = (r.phase == Phase::Train).then_some(ScaffoldKind::Inference);
        assert_eq!(r.scaffold_kind, expected);
    }
    // Mark the first three trajectory-free edges on each training trial.
    for r in d.trials.iter_mut().filter(|r| r.phase == Phase::Train) {
        let traj = r.trajectory.clone();
        r.scaffold = Some(r.graph.edges().iter().filter(|e| !traj.contains(e)).take(3).copied().collect());
    }
    d.validate().unwrap();
    let curve = scaffold_selection_curve(&[d], SelectionOrdering::BotUnknown).unwrap();
    assert_eq!(curve.n_trials, 15);
    assert!((curve.inclusion.iter().sum::<f64>() - 3.0).abs() < 1e-12);
}
