use predsub::experiment::{run_experiment, Loaded};
use predsub::instance::{GenParams, Instance};
use predsub::io::{
    load_store, read_instance, read_predictions, read_stream, save_store, write_instance, write_predictions,
    write_stream, StoreMeta,
};
use predsub_core::scheduler::{precompute, FrameworkConfig, Variant};
use predsub_core::Phase;

fn small() -> Instance {
    let (g, _) = GenParams::small(4);
    g.generate().unwrap()
}

#[test]
fn instance_files_roundtrip() {
    let inst = small();
    let dir = tempfile::tempdir().unwrap();
    let (i, s, p) = (dir.path().join("i.json"), dir.path().join("s.jsonl"), dir.path().join("p.jsonl"));
    write_instance(&i, &inst.rows).unwrap();
    write_stream(&s, &inst.stream).unwrap();
    write_predictions(&p, &inst.pred).unwrap();
    assert_eq!(read_instance(&i).unwrap(), inst.rows);
    assert_eq!(read_stream(&s).unwrap(), inst.stream);
    assert_eq!(read_predictions(&p, inst.pred.w()).unwrap(), inst.pred);
}

#[test]
fn instance_file_accepts_missing_weights() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("i.json");
    std::fs::write(&path, r#"{"elements": [{"id": 0, "items": [1, 2]}, {"id": 1, "items": [2, 3]}]}"#).unwrap();
    let f = read_instance(&path).unwrap().build().unwrap();
    assert_eq!(predsub_core::SetFunction::value(&f, &[predsub_core::ElementId(0), predsub_core::ElementId(1)]).unwrap(), 3.0);
}

#[test]
fn jsonl_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    std::fs::write(&path, "{\"t\":1,\"op\":\"ins\",\"elem\":0}\n{\"t\":2,\"op\":\"oops\",\"elem\":0}\n").unwrap();
    let err = format!("{:#}", read_stream(&path).unwrap_err());
    assert!(err.contains("s.jsonl:2"), "{err}");
}

#[test]
fn stored_precomputation_replays_identically() {
    let inst = small();
    for variant in [Variant::Warmup, Variant::Main, Variant::Full] {
        let cfg = FrameworkConfig { k: 3, eps: 0.2, variant, known_eta: Some(inst.eta), gamma: None, seed: 7 };
        let direct = run_experiment(&inst, &cfg, None, None).unwrap();

        let f = inst.oracle().unwrap();
        let pre = precompute(&f, inst.stream.len(), &inst.pred, &cfg).unwrap();
        let meta = StoreMeta {
            variant,
            k: cfg.k,
            eps: cfg.eps,
            w: inst.pred.w(),
            n: inst.stream.len(),
            seed: cfg.seed,
            precompute_queries: f.phase_total(Phase::Precompute),
        };
        let dir = tempfile::tempdir().unwrap();
        save_store(dir.path(), &pre, &meta).unwrap();
        let (loaded, manifest) = load_store(dir.path()).unwrap();
        assert_eq!(loaded, pre, "{variant}");
        assert_eq!(manifest.precompute_queries, direct.summary.precompute_queries);

        let replay =
            run_experiment(&inst, &cfg, None, Some(Loaded { pre: loaded, precompute_queries: manifest.precompute_queries }))
                .unwrap();
        assert_eq!(replay.steps, direct.steps, "{variant}");
    }
}
