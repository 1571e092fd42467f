#![allow(dead_code)]

use std::path::Path;

use arena_engine::ScenarioConfig;
use serde_json::Value;

/// A small, fast scenario: 640×480 mm arena seen by a 320×240 camera.
/// `top` holds extra top-level keys, `tables` extra TOML tables.
pub fn small_scenario(dir: &Path, top: &str, tables: &str) -> ScenarioConfig {
    let mut top = top.to_string();
    for (key, default) in [("duration", "duration = 20"), ("mode", "mode = \"headless\"")] {
        if !top.lines().any(|l| l.trim_start().starts_with(key)) {
            top = format!("{default}\n{top}");
        }
    }
    let text = format!(
        r#"
master_seed = 11
{top}

[arena]
width_mm = 640.0
height_mm = 480.0

[camera]
width = 320
height = 240

[logs]
dir = "{dir}"

{tables}
"#,
        dir = dir.display()
    );
    ScenarioConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

pub fn uniform_robots(count: usize, behavior: &str) -> String {
    format!(
        r#"
[robots]
behavior = "{behavior}"

[robots.placement]
kind = "uniform"
count = {count}
"#
    )
}

pub fn read_events(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn tick_lines(events: &[Value]) -> Vec<&Value> {
    events.iter().filter(|e| e["type"] == "tick").collect()
}

/// The event log with every wall-clock section removed, re-serialized.
pub fn events_without_wall(path: &Path) -> String {
    read_events(path)
        .into_iter()
        .map(|mut e| {
            if let Some(o) = e.as_object_mut() {
                o.remove("wall");
            }
            e.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}
