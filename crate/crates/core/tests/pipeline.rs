mod common;

use std::sync::Mutex;

use sagcn_core::eval::{run_pipeline, FoldArtifacts, PooledCohort, Stage};
use sagcn_core::Error;

#[test]
fn results_do_not_depend_on_worker_count() {
    let (cohort, ids) = common::pooled_synth(30, 16, 2.0, 3);
    let cfg = common::quick_config();
    let one = run_pipeline(&cohort, &ids, &cfg, 1, None).unwrap();
    let three = run_pipeline(&cohort, &ids, &cfg, 3, None).unwrap();
    assert_eq!(one.report.to_json().unwrap(), three.report.to_json().unwrap());
    assert_eq!(one.predictions, three.predictions);
}

#[test]
fn every_subject_is_tested_once_per_repeat_and_stage() {
    let (cohort, ids) = common::pooled_synth(24, 16, 2.0, 4);
    let mut cfg = common::quick_config();
    cfg.folds.outer_repeats = 2;
    let out = run_pipeline(&cohort, &ids, &cfg, 1, None).unwrap();
    for stage in Stage::ALL {
        for r in 0..2 {
            let mut seen: Vec<&str> = out
                .predictions
                .iter()
                .filter(|p| p.stage == stage.name() && p.repeat == r)
                .map(|p| p.subject_id.as_str())
                .collect();
            seen.sort_unstable();
            let mut want: Vec<&str> = ids.iter().map(String::as_str).collect();
            want.sort_unstable();
            assert_eq!(seen, want, "{} repeat {r}", stage.name());
        }
        let report = out.report.stage(stage.name()).unwrap();
        assert_eq!(report.folds.len(), 2 * cfg.folds.outer_k);
    }
    assert!(out.predictions.iter().all(|p| (0.0..=1.0).contains(&p.probability)));
}

#[test]
fn stage_subset_and_fold_sink() {
    let (cohort, ids) = common::pooled_synth(18, 12, 2.0, 5);
    let mut cfg = common::quick_config();
    cfg.stages = vec![Stage::Lr];
    let seen = Mutex::new(Vec::new());
    let sink = |a: FoldArtifacts| {
        assert!(a.lr.is_some() && a.gcn.is_none());
        seen.lock().unwrap().push((a.repeat, a.fold));
        Ok(())
    };
    let out = run_pipeline(&cohort, &ids, &cfg, 1, Some(&sink)).unwrap();
    let names: Vec<&str> = out.report.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["lr"]);
    let mut folds = seen.into_inner().unwrap();
    folds.sort_unstable();
    assert_eq!(folds, (0..cfg.folds.outer_k).map(|f| (0, f)).collect::<Vec<_>>());
}

#[test]
fn single_class_training_split_is_an_error() {
    let (cohort, ids) = common::pooled_synth(12, 12, 2.0, 6);
    let one_class = PooledCohort::new(cohort.vectors, vec![1; 12], cohort.phenotypes).unwrap();
    let err = run_pipeline(&one_class, &ids, &common::quick_config(), 1, None).unwrap_err();
    assert!(matches!(err, Error::SingleClass(_)), "{err}");
}

#[test]
fn too_few_subjects_for_the_fold_plan() {
    let (cohort, ids) = common::pooled_synth(6, 8, 2.0, 7);
    let mut cfg = common::quick_config();
    cfg.folds.outer_k = 10;
    assert!(run_pipeline(&cohort, &ids, &cfg, 1, None).is_err());
}
