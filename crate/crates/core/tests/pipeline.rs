use braidflow::pipeline::{
    parse_plan, run_pipeline, to_bytes, ArtifactKind, PipelineStage, SessionStore,
};

const PLAN: &[&str] = &[
    "generate adder n=2",
    "icm",
    "schedule asap",
    "analyze availability",
    "layout build",
    "layout estimate",
];

fn stage(line: &str) -> PipelineStage {
    PipelineStage::parse(line).unwrap()
}

#[test]
fn identical_sessions_give_identical_states() {
    let store = SessionStore::new();
    let (a, b) = (store.create(), store.create());
    for line in PLAN {
        let va = store.with(&a, |s| s.apply(&stage(line))).unwrap();
        let vb = store.with(&b, |s| s.apply(&stage(line))).unwrap();
        assert_eq!(va.state, vb.state, "after `{line}`");
    }
    let ea = store
        .with(&a, |s| s.artifact(ArtifactKind::Estimate))
        .unwrap();
    let eb = store
        .with(&b, |s| s.artifact(ArtifactKind::Estimate))
        .unwrap();
    assert_eq!(ea, eb);
}

#[test]
fn session_matches_composed_pipeline() {
    let store = SessionStore::new();
    let id = store.create();
    for line in PLAN {
        store.with(&id, |s| s.apply(&stage(line))).unwrap();
    }
    let stages = parse_plan(&PLAN.join("\n")).unwrap();
    let composed = run_pipeline(&stages, Vec::new()).unwrap();
    let saved = store
        .with(&id, |s| s.artifact(ArtifactKind::Estimate))
        .unwrap();
    assert_eq!(*saved, to_bytes(&composed));
}

#[test]
fn every_step_undoes_exactly() {
    let store = SessionStore::new();
    let id = store.create();
    let mut states = vec![store.with(&id, |s| Ok(s.state_digest())).unwrap()];
    for line in PLAN {
        states.push(store.with(&id, |s| s.apply(&stage(line))).unwrap().state);
    }
    for want in states.iter().rev().skip(1) {
        let got = store.with(&id, |s| s.undo()).unwrap().state;
        assert_eq!(&got, want);
    }
    assert!(store.with(&id, |s| s.undo()).is_err());
    for want in &states[1..] {
        assert_eq!(&store.with(&id, |s| s.redo()).unwrap().state, want);
    }
    let view = store.with(&id, |s| Ok(s.view())).unwrap();
    assert_eq!(view.history.len(), PLAN.len() * 3);
}

#[test]
fn saved_artifacts_survive_reupload() {
    let store = SessionStore::new();
    let id = store.create();
    for line in PLAN[..5].iter().chain(["analyze report"].iter()) {
        store.with(&id, |s| s.apply(&stage(line))).unwrap();
    }
    for kind in [
        ArtifactKind::Circuit,
        ArtifactKind::Layout,
        ArtifactKind::Report,
    ] {
        let saved = store.with(&id, |s| s.artifact(kind)).unwrap();
        let other = store.create();
        store.with(&other, |s| s.upload(kind, &saved)).unwrap();
        let again = store.with(&other, |s| s.artifact(kind)).unwrap();
        assert_eq!(saved, again, "{kind:?}");
    }
}

#[test]
fn failing_stage_leaves_session_untouched() {
    let store = SessionStore::new();
    let id = store.create();
    store
        .with(&id, |s| s.apply(&stage("generate cnot-ladder n=3")))
        .unwrap();
    let before = store.with(&id, |s| Ok(s.view())).unwrap();
    assert!(store
        .with(&id, |s| s.apply(&stage("layout build")))
        .is_err());
    let after = store.with(&id, |s| Ok(s.view())).unwrap();
    assert_eq!(before.state, after.state);
    assert_eq!(before.history, after.history);
}
