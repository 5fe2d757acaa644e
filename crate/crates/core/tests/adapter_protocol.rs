use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use morphline::dataset::{load_pool, LandmarkSource};
use morphline::fusion::{FaceAsset, Pool};
use morphline::ga::{run_evolution, GaConfig, GaError, ScorerErrorPolicy, Scorers};
use morphline::geometry::{template_landmarks, ImageRaster};
use morphline::scoring::adapter::run_adapter;
use morphline::scoring::{
    build_gallery, check_anonymity, detect_landmarks, embed, score_forgery, AdapterFailure, ForgeryScorer, Matcher,
    ScorerBinding, ScoringError,
};
use morphline::synth::{synth_corpus, FaceStyle};

fn script(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    format!("sh {}", path.display())
}

fn binding(cmd: &str) -> ScorerBinding {
    ScorerBinding::external(cmd, Duration::from_secs(10)).unwrap()
}

fn image() -> ImageRaster {
    ImageRaster::filled(32, 32, [90, 90, 90])
}

#[test]
fn forgery_score_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "f.sh", r#"echo '{"real_confidence": 0.8125}'"#);
    let s = score_forgery(&image(), &ForgeryScorer::external(binding(&cmd)), 0.5).unwrap();
    assert_eq!(s.real_confidence, 0.8125);
}

#[test]
fn adapter_receives_an_absolute_existing_path() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(
        dir.path(),
        "p.sh",
        r#"case "$1" in /*) ;; *) exit 9 ;; esac
test -f "$1" || exit 8
echo '{"real_confidence": 1}'"#,
    );
    let s = score_forgery(&image(), &ForgeryScorer::external(binding(&cmd)), 0.5).unwrap();
    assert_eq!(s.real_confidence, 1.0);
}

#[test]
fn embedding_and_landmarks_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let emb = script(dir.path(), "e.sh", r#"echo '{"embedding": [0.5, -0.25, 1e-3]}'"#);
    let v = embed(&image(), &template_landmarks(32, 32), &Matcher { binding: binding(&emb) }).unwrap();
    assert_eq!(v, vec![0.5, -0.25, 1e-3]);

    let pts: Vec<String> = template_landmarks(32, 32).points.iter().map(|p| format!("[{},{}]", p.x, p.y)).collect();
    let lm = script(dir.path(), "l.sh", &format!("echo '{{\"points\": [{}]}}'", pts.join(",")));
    let l = detect_landmarks(&image(), &binding(&lm)).unwrap();
    assert_eq!(l, template_landmarks(32, 32));
}

#[test]
fn exit_four_is_no_face() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "n.sh", "exit 4");
    let err = detect_landmarks(&image(), &binding(&cmd)).unwrap_err();
    assert!(matches!(err, ScoringError::NoFaceFound { .. }));
    assert!(err.is_adapter_failure());
}

#[test]
fn failures_are_classified() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("exit.sh", "echo oops >&2; exit 2", "exit"),
        ("json.sh", "echo not json", "malformed"),
        ("key.sh", r#"echo '{"confidence": 0.3}'"#, "malformed"),
        ("range.sh", r#"echo '{"real_confidence": 1.5}'"#, "malformed"),
        ("array.sh", "echo '[1, 2]'", "malformed"),
    ];
    for (name, body, kind) in cases {
        let cmd = script(dir.path(), name, body);
        match score_forgery(&image(), &ForgeryScorer::external(binding(&cmd)), 0.5) {
            Err(ScoringError::AdapterFailure { kind: k, .. }) => match (kind, k) {
                ("exit", AdapterFailure::Exit { code: Some(2), stderr }) => assert_eq!(stderr, "oops"),
                ("malformed", AdapterFailure::Malformed(_)) => {}
                (_, other) => panic!("{name}: {other:?}"),
            },
            other => panic!("{name}: {other:?}"),
        }
    }
}

#[test]
fn wrong_landmark_arity_is_malformed_and_empty_is_no_face() {
    let dir = tempfile::tempdir().unwrap();
    let three = script(dir.path(), "3.sh", r#"echo '{"points": [[1,1],[2,2],[3,3]]}'"#);
    assert!(matches!(
        detect_landmarks(&image(), &binding(&three)),
        Err(ScoringError::AdapterFailure { kind: AdapterFailure::Malformed(_), .. })
    ));
    let none = script(dir.path(), "0.sh", r#"echo '{"points": []}'"#);
    assert!(matches!(detect_landmarks(&image(), &binding(&none)), Err(ScoringError::NoFaceFound { .. })));
}

#[test]
fn timeout_kills_the_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "slow.sh", "sleep 5; echo '{}'");
    let b = ScorerBinding::external(cmd, Duration::from_millis(200)).unwrap();
    let t = std::time::Instant::now();
    assert!(matches!(
        score_forgery(&image(), &ForgeryScorer::external(b), 0.5),
        Err(ScoringError::AdapterFailure { kind: AdapterFailure::Timeout(_), .. })
    ));
    assert!(t.elapsed() < Duration::from_secs(4));
}

#[test]
fn missing_program_is_a_spawn_failure() {
    let r = run_adapter("/nonexistent/adapter-binary", &PathBuf::from("x.png"), Duration::from_secs(1));
    assert!(matches!(r, Err(ScoringError::AdapterFailure { kind: AdapterFailure::Spawn(_), .. })));
}

#[test]
fn empty_command_is_rejected() {
    assert!(matches!(
        ScorerBinding::external("  ", Duration::from_secs(1)),
        Err(ScoringError::InvalidBinding(_))
    ));
}

fn pools() -> (Vec<FaceAsset>, Vec<FaceAsset>) {
    let mk = |seed, style, p: &str, pool| {
        synth_corpus(3, 48, 48, seed, style)
            .into_iter()
            .enumerate()
            .map(|(i, (r, l))| FaceAsset::original(format!("{p}{i}"), r, l, pool))
            .collect::<Vec<_>>()
    };
    (mk(1, FaceStyle::Drug, "d", Pool::DrugOriginal), mk(2, FaceStyle::Healthy, "h", Pool::HealthyGan))
}

#[test]
fn generation_aborts_on_adapter_failure_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "bad.sh", "exit 1");
    let (d, h) = pools();
    let scorers = Scorers {
        forgery: ForgeryScorer::external(binding(&cmd)),
        matcher: Matcher::stub(),
    };
    let cfg = GaConfig { max_g: 1, max_i: 3, ..Default::default() };
    match run_evolution(&cfg, &d, &h, &[], &scorers) {
        Err(GaError::Scorer { source, .. }) => assert!(source.is_adapter_failure()),
        other => panic!("{other:?}"),
    }

    let cfg = GaConfig { on_scorer_error: ScorerErrorPolicy::Reject, ..cfg };
    let evo = run_evolution(&cfg, &d, &h, &[], &scorers).unwrap();
    let s = evo.generations[0].state;
    assert_eq!(s.rejected_forgery, s.attempted);
    assert!(evo.generations[0].attempts.iter().all(|a| a.error.is_some()));
}

#[test]
fn external_matcher_drives_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    // every image embeds to the same vector, so every candidate is identified
    let cmd = script(dir.path(), "same.sh", r#"echo '{"embedding": [1, 0, 0]}'"#);
    let (d, h) = pools();
    let matcher = Matcher { binding: binding(&cmd) };
    let gallery = build_gallery(&d, &matcher).unwrap();
    assert!(!check_anonymity(&h[0].raster, &h[0].landmarks, &gallery, 0.6).unwrap().is_unknown);
    let scorers = Scorers {
        forgery: ForgeryScorer::stub(morphline::scoring::ForgeryStub::Fixed(1.0)),
        matcher,
    };
    let cfg = GaConfig { max_g: 1, max_i: 3, ..Default::default() };
    let evo = run_evolution(&cfg, &d, &h, &[], &scorers).unwrap();
    assert_eq!(evo.generations[0].state.rejected_recognized, 9);
}

#[test]
fn landmark_adapter_feeds_pool_loading() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("imgs");
    fs::create_dir(&imgs).unwrap();
    morphline::dataset::write_png(&imgs.join("a.png"), &image()).unwrap();
    let cmd = script(dir.path(), "noface.sh", "exit 4");
    let err = load_pool(&imgs, &LandmarkSource::Detector(binding(&cmd)), None, Pool::DrugOriginal).unwrap_err();
    assert!(matches!(
        err,
        morphline::dataset::DatasetError::Detector { source: ScoringError::NoFaceFound { .. }, .. }
    ));
}
