use causal_neighbors::causal::{run_ranker, RankerConfig};
use causal_neighbors::data::{load_log, to_matrices, DatasetSplits, LogFormat};
use causal_neighbors::datagen::{build_priors, generate_splits, synth_priors, GenParams};
use causal_neighbors::error::Error;
use causal_neighbors::harness::{run_on_splits, ExternalScores, Grids, Method, SweepSpec};
use causal_neighbors::metrics::{evaluate, MetricKind};
use causal_neighbors::ranking::Rankings;
use causal_neighbors::similarity::{Orientation, SimilarityConfig, Source};

fn splits(seed: u64) -> DatasetSplits {
    let (r, o) = synth_priors(40, 25, seed);
    let params = GenParams {
        target_recs_per_user: Some(6.0),
        n_validation: 2,
        ..GenParams::default()
    };
    let (priors, params) = build_priors(&r, &o, &params).unwrap();
    generate_splits(&priors, &params, seed).unwrap()
}

fn cubn(k: usize) -> RankerConfig {
    RankerConfig {
        sim: SimilarityConfig {
            k,
            alpha: 1.0,
            source: Source::Outcomes,
            orientation: Orientation::User,
        },
        beta_t: 1.0,
        beta_c: 1.0,
        mix_own: true,
    }
}

#[test]
fn saved_splits_round_trip() {
    let s = splits(1);
    let dir = tempfile::tempdir().unwrap();
    s.save(dir.path()).unwrap();
    let back = DatasetSplits::load(dir.path()).unwrap();
    assert_eq!(back.validation.len(), 2);
    assert_eq!(back.train.y, s.train.y);
    assert_eq!(back.test[0].tau, s.test[0].tau);
    assert_eq!(back.validation[1].z, s.validation[1].z);
}

#[test]
fn rankings_csv_round_trip_preserves_metrics() {
    let s = splits(2);
    let ranked = run_ranker(&s.train.y, &s.train.z, &cubn(10)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    ranked.write_csv(&path, "tau_hat", None, None).unwrap();
    let back = Rankings::read_csv(&path, 40, 25, None, None).unwrap();
    let a = evaluate(&ranked, &s.test[0], &[5]).unwrap();
    let b = evaluate(&back, &s.test[0], &[5]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn external_scores_join_the_comparison() {
    let s = splits(3);
    let dir = tempfile::tempdir().unwrap();
    // an "external model" that scores by the true test effect
    let path = dir.path().join("scores.csv");
    let mut text = String::from("user,item,score\n");
    for u in 0..40 {
        for i in 0..25 {
            text += &format!("{u},{i},{}\n", s.test[0].tau.get(u, i));
        }
    }
    std::fs::write(&path, text).unwrap();
    let spec = SweepSpec {
        methods: vec![Method::CUBN_O],
        grids: Grids { k: vec![5], alpha: vec![1.0], beta: vec![1.0] },
        metrics: vec![MetricKind::CpAt(5)],
        external: vec![ExternalScores { name: "oracle".into(), scores: path.clone() }],
        ..SweepSpec::default()
    };
    let records = run_on_splits(&spec, &s).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[1].method, "oracle");
    assert!(records[1].test > records[0].test);

    std::fs::write(&path, "user,item,score\n0,0,1\n").unwrap();
    assert!(matches!(run_on_splits(&spec, &s), Err(Error::Coverage { .. })));
}

#[test]
fn log_ingestion_feeds_the_rankers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.tsv");
    std::fs::write(&path, "z\ty\titem\tuser\n1\t1\tb\tu1\n0\t1\ta\tu1\n1\t0\ta\tu2\n0\t0\tc\tu2\n").unwrap();
    let log = load_log(&path, LogFormat::from_path(&path)).unwrap();
    let (y, z) = to_matrices(&log);
    assert_eq!(y.shape(), (2, 3));
    let ranked = run_ranker(&y, &z, &cubn(1)).unwrap();
    assert_eq!(ranked.n_users(), 2);
    let out = dir.path().join("r.csv");
    ranked.write_csv(&out, "tau_hat", Some(&log.users), Some(&log.items)).unwrap();
    let back = Rankings::read_csv(&out, 2, 3, Some(&log.users), Some(&log.items)).unwrap();
    assert_eq!(back.lists[0].items, ranked.lists[0].items);
}

#[test]
fn identical_seeds_give_identical_data() {
    let (a, b) = (splits(8), splits(8));
    assert_eq!(a.train.y, b.train.y);
    assert_eq!(a.test[0].tau, b.test[0].tau);
    assert_ne!(splits(9).train.z, a.train.z);
}
