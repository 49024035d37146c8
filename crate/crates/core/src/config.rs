//! Strict JSON experiment configs with `key=value` overrides.

use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;

/// Reads, overrides, defaults and validates an experiment config.
///
/// Overrides use dotted keys (`bounds.alpha_range=[0.1,5]`). The value is
/// parsed as JSON when possible and taken as a string otherwise, so
/// `kernel.family=matern` and `replicates=5` both work. Overrides win over
/// the file.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| Error::config("<file>", format!("invalid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "<root>".to_string() } else { path };
        Error::config(key, e.into_inner().to_string())
    })?;
    let config = config.with_defaults();
    config.validate()?;
    Ok(config)
}

pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must have the form key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::config(key, "empty path segment in override key"));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut segments = key.split('.').peekable();
    while let Some(seg) = segments.next() {
        let obj = match node {
            Value::Object(map) => map,
            other if other.is_null() => {
                *other = Value::Object(Map::new());
                other.as_object_mut().expect("just set")
            }
            _ => return Err(Error::config(key, format!("`{seg}` is not inside an object"))),
        };
        if segments.peek().is_none() {
            obj.insert(seg.to_string(), parsed);
            return Ok(());
        }
        node = obj.entry(seg.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentKind;

    const MINIMAL: &str = r#"{
        "regime": "increasing_domain",
        "kernel": {"family": "exponential"},
        "theta0": {"sigma2": 1.0, "alpha": 0.5},
        "n_list": [100, 200],
        "replicates": 10,
        "master_seed": 42
    }"#;

    fn key_of(r: Result<ExperimentConfig>) -> String {
        match r {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL, &[]).unwrap();
        assert_eq!(c.perturb, 0.2);
        assert_eq!(c.bounds.alpha_range, (0.1, 10.0));
        assert_eq!(c.workers, 1);
        assert_eq!(c.experiment, Some(ExperimentKind::Normality));
    }

    #[test]
    fn overrides_win() {
        let c = parse_config_str(MINIMAL, &["replicates=5".into(), "bounds.alpha_range=[0.2,4]".into()]).unwrap();
        assert_eq!(c.replicates, 5);
        assert_eq!(c.bounds.alpha_range, (0.2, 4.0));
        let c = parse_config_str(
            MINIMAL,
            &["kernel.family=matern".into(), "kernel.nu=1.5".into(), "experiment=varln_decay".into()],
        )
        .unwrap();
        assert_eq!(c.kernel.nu(), Some(1.5));
        assert_eq!(c.experiment, Some(ExperimentKind::VarlnDecay));
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(parse_config_str(MINIMAL, &["bounds.alpha_range=[5,1]".into()])), "bounds.alpha_range");
        assert_eq!(key_of(parse_config_str(MINIMAL, &["replicates=-1".into()])), "replicates");
        assert_eq!(key_of(parse_config_str(MINIMAL, &["replicates=0".into()])), "replicates");
        assert_eq!(key_of(parse_config_str(MINIMAL, &["n_list=[3,2]".into()])), "n_list");
        assert_eq!(key_of(parse_config_str(MINIMAL, &["theta0.beta=1".into()])), "theta0.beta");
        assert_eq!(key_of(parse_config_str(MINIMAL, &["kernel.nu=2".into()])), "kernel");
        let unknown = parse_config_str(MINIMAL, &["colour=1".into()]).unwrap_err();
        assert!(unknown.to_string().contains("colour"));
        assert!(parse_config_str(MINIMAL, &["novalue".into()]).is_err());
        assert!(parse_config_str("{", &[]).is_err());
    }
}
