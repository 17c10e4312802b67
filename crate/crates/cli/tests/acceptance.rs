use ordergap_cli::config::LoadedConfig;
use ordergap_cli::experiment::experiment_dir;
use ordergap_cli::run_experiment;
use ordergap_cli::trace::parse_header;
use ordergap_cli::verify::{self, Module, Suite, VerifyOptions, CRITERIA, DETERMINISM_CONFIGS};

fn report(results: &[verify::CriterionResult]) -> Vec<u8> {
    let mut failed = Vec::new();
    for r in results {
        println!("{r}");
        if !r.ok() {
            failed.push(r.id);
        }
    }
    failed
}

#[test]
fn all_criteria_pass() {
    let results = verify::run(Suite::All, &VerifyOptions::default());
    assert_eq!(results.len(), CRITERIA.len());
    let failed = report(&results);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn every_module_has_a_criterion() {
    for m in Module::ALL {
        let results = verify::run(Suite::Module(m), &VerifyOptions { noisy_seeds: 20, ..Default::default() });
        assert!(!results.is_empty(), "{} has no criteria", m.name());
        assert!(results.iter().all(|r| r.module == m));
    }
}

#[test]
fn a_wrong_contraction_factor_is_caught() {
    let opts = VerifyOptions { declared_rho: 0.99, noisy_seeds: 20 };
    let results = verify::run(Suite::Module(Module::Core), &opts);
    let failed = report(&results);
    assert_eq!(failed, vec![1]);
}

#[test]
fn written_artifacts_are_identical_across_runs() {
    for text in DETERMINISM_CONFIGS {
        let loaded = LoadedConfig::parse(text).unwrap();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let out = run_experiment(&loaded).unwrap();
            out.artifacts.write_to(&experiment_dir(&loaded, Some(d.path()))).unwrap();
        }
        let list = |d: &tempfile::TempDir| {
            let dir = experiment_dir(&loaded, Some(d.path()));
            let mut names: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name()).collect();
            names.sort();
            names.into_iter().map(|n| (n.clone(), std::fs::read(dir.join(n)).unwrap())).collect::<Vec<_>>()
        };
        let (a, b) = (list(&dirs[0]), list(&dirs[1]));
        assert!(a.iter().any(|(n, _)| n == "report.json"));
        assert_eq!(a, b, "{}", loaded.config.experiment_id);
    }
}

#[test]
fn traces_carry_the_config_digest() {
    let loaded = LoadedConfig::parse(DETERMINISM_CONFIGS[0]).unwrap();
    let out = run_experiment(&loaded).unwrap();
    let mut traces = 0;
    for (name, bytes) in &out.artifacts.files {
        if !name.ends_with(".csv") {
            continue;
        }
        traces += 1;
        let text = std::str::from_utf8(bytes).unwrap();
        let header = parse_header(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["config_sha256"], loaded.digest);
        assert_eq!(header["experiment"], loaded.config.experiment_id);
        assert_eq!(header["seed"], loaded.config.seed.to_string());
    }
    assert_eq!(traces as u64, loaded.config.seed_count);
}
