use std::path::{Path, PathBuf};

use pdm::harness::{config_schema, ExperimentConfig, ExperimentKind};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

#[test]
fn published_schema_matches_types() {
    let path = root().join("schema/experiment.schema.json");
    let generated = config_schema();
    if std::env::var_os("PDM_UPDATE_SCHEMA").is_some() {
        let mut text = serde_json::to_string_pretty(&generated).unwrap();
        text.push('\n');
        std::fs::write(&path, text).unwrap();
    }
    let published: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(published, generated, "regenerate with PDM_UPDATE_SCHEMA=1");
}

#[test]
fn shipped_configs_parse_and_cover_every_experiment() {
    let mut seen = Vec::new();
    for entry in std::fs::read_dir(root().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let c = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        c.model.build().unwrap();
        seen.push(c.experiment);
    }
    for kind in ExperimentKind::ALL {
        assert!(seen.contains(&kind), "no shipped config for {kind}");
    }
}

#[test]
fn schema_rejects_unknown_keys() {
    let schema = config_schema();
    assert_eq!(schema["additionalProperties"], serde_json::Value::Bool(false));
    let props = schema["properties"].as_object().unwrap();
    for key in ["experiment", "model", "horizon", "x0", "seed", "num_paths", "levels", "betas", "query"] {
        assert!(props.contains_key(key), "{key}");
    }
}
