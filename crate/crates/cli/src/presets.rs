//! Named configurations for the published examples, embedded at build time.

use serde_json::Value;

use crate::error::CliError;

pub const PRESETS: &[(&str, &str)] = &[
    ("alpha-ratio-ac", include_str!("../presets/alpha-ratio-ac.json")),
    ("example2", include_str!("../presets/example2.json")),
    ("example2-run", include_str!("../presets/example2-run.json")),
    ("example3", include_str!("../presets/example3.json")),
    ("example3-compare", include_str!("../presets/example3-compare.json")),
    ("example4-ac", include_str!("../presets/example4-ac.json")),
    ("example4-ch", include_str!("../presets/example4-ch.json")),
    ("example5", include_str!("../presets/example5.json")),
    ("example6", include_str!("../presets/example6.json")),
    ("example6-desk", include_str!("../presets/example6-desk.json")),
    ("example7", include_str!("../presets/example7.json")),
    ("example7-desk", include_str!("../presets/example7-desk.json")),
    ("example8", include_str!("../presets/example8.json")),
    ("example8-asym", include_str!("../presets/example8-asym.json")),
    ("example8-desk", include_str!("../presets/example8-desk.json")),
    ("table1-ac", include_str!("../presets/table1-ac.json")),
    ("table1-ac-bdf1", include_str!("../presets/table1-ac-bdf1.json")),
    ("table1-ch", include_str!("../presets/table1-ch.json")),
];

pub fn load(name: &str) -> Result<Value, CliError> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::Validation(format!("unknown preset `{name}`; see `csav list-presets`")))?;
    Ok(serde_json::from_str(text).expect("presets are valid JSON"))
}

pub fn description(name: &str) -> String {
    load(name)
        .ok()
        .and_then(|v| v.get("description").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_default()
}
