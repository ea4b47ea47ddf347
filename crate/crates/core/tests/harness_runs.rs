use std::path::Path;

use gemdiff::harness::{self, parse_config, ExperimentConfig, ExperimentKind, Parameters, RunOptions, CSV_HEADER};

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = parse_config(&std::fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(path.file_stem().unwrap().to_str().unwrap(), cfg.experiment.name());
        seen.push(cfg.experiment);
    }
    for kind in ExperimentKind::ALL {
        assert!(seen.contains(&kind), "no config for {kind}");
    }
}

#[test]
fn reports_are_thread_independent() {
    let params = Parameters {
        samples: Some(300),
        inner_samples: Some(300),
        dt: Some(1e-2),
        ..Parameters::default()
    };
    let mut csvs = Vec::new();
    for threads in [1, 3, 4] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::EntropyDecay,
            parameters: params.clone(),
            seed: 12,
            output_dir: dir.path().to_path_buf(),
        };
        let out = harness::run(&cfg, &RunOptions { threads: Some(threads), timing: false }).unwrap();
        csvs.push(std::fs::read_to_string(&out.csv_path).unwrap());
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.json_path).unwrap()).unwrap();
        assert_eq!(json["threads"], threads);
        assert_eq!(json["rows"], out.rows.len());
    }
    assert!(csvs[0].starts_with(&CSV_HEADER.join(",")));
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[1], csvs[2]);
}

#[test]
fn dirichlet_run_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        experiment: ExperimentKind::DirichletStationarity,
        parameters: Parameters {
            samples: Some(200),
            n: Some(15),
            dt: Some(1e-2),
            ..Parameters::default()
        },
        seed: 3,
        output_dir: dir.path().to_path_buf(),
    };
    harness::run(&cfg, &RunOptions::default()).unwrap();
    let snaps: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    assert_eq!(snaps.len(), 1);
    let text = std::fs::read_to_string(&snaps[0]).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["t"].is_number() && first["atoms"].is_array() && first["remainder"].is_number());
}
