use std::fs;

use arena_engine::config::{load_scenario, ConfigError, Mode};
use proptest::prelude::*;

fn load(text: &str) -> Result<arena_engine::ScenarioConfig, ConfigError> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.toml");
    fs::write(&path, text).unwrap();
    load_scenario(&path)
}

const MINIMAL: &str = r#"
[arena]
width_mm = 1600.0
height_mm = 1200.0

[robots.placement]
kind = "explicit"
poses = [{ x = 800.0, y = 600.0 }]
"#;

#[test]
fn minimal_file_gets_documented_defaults() {
    let cfg = load(MINIMAL).unwrap();
    assert_eq!(cfg.tick_rate, 30.0);
    assert_eq!(cfg.duration, 300);
    assert_eq!(cfg.mode, Mode::ClosedLoop);
    assert!(!cfg.free_run);
    assert_eq!((cfg.camera.width, cfg.camera.height), (1024, 768));
    assert_eq!((cfg.projector.width, cfg.projector.height), (800, 600));
    assert_eq!(cfg.projector.mm_per_px, Some(2.0));
    assert_eq!(cfg.field.cell_size_mm, 10.0);
    assert_eq!(cfg.robots.radius_mm, 16.5);
    assert_eq!(cfg.initial_robots().unwrap().len(), 1);
    // fit scale 1024/1600 = 0.64
    assert!((cfg.robot_radius_px().unwrap() - 16.5 * 0.64).abs() < 1e-12);
    let h = cfg.hough_params();
    assert_eq!((h.r_min, h.r_max), (7, 16));
}

#[test]
fn headless_mode_implies_free_running() {
    let cfg = load(&format!("mode = \"headless\"\n{MINIMAL}")).unwrap();
    assert!(cfg.free_run);
    assert!(cfg.is_closed_loop());
}

#[test]
fn unstable_diffusion_is_rejected_by_key_path() {
    // D·dt/h² = 1000/30/100 > 1/4
    let err = load(&format!("{MINIMAL}\n[field]\ndiffusion_d = 1000.0\n")).unwrap_err();
    assert_eq!(err.key_path(), "field.diffusion_d");
    assert!(err.to_string().contains("field.diffusion_d"), "{err}");
}

#[test]
fn misspelled_key_is_named() {
    let err = load(&format!("{MINIMAL}\n[field]\ndifusion_d = 10.0\n")).unwrap_err();
    assert!(matches!(err, ConfigError::Parse { .. }));
    assert!(err.to_string().contains("difusion_d"), "{err}");
}

#[test]
fn unknown_top_level_key_is_rejected() {
    let err = load(&format!("colour = 3\n{MINIMAL}")).unwrap_err();
    assert!(err.to_string().contains("colour"), "{err}");
}

#[test]
fn missing_arena_is_a_parse_error() {
    let err = load("duration = 5\n").unwrap_err();
    assert!(err.to_string().contains("arena"), "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_scenario("/definitely/not/here.toml").unwrap_err();
    assert!(matches!(err, ConfigError::Io { .. }));
    assert_eq!(err.key_path(), "");
}

#[test]
fn frames_in_without_directory_is_rejected() {
    let err = load(&format!("mode = \"frames_in\"\n{MINIMAL}")).unwrap_err();
    assert_eq!(err.key_path(), "frames_dir");
}

#[test]
fn robot_outside_arena_names_its_pose() {
    let text = MINIMAL.replace("x = 800.0", "x = 1800.0");
    let err = load(&text).unwrap_err();
    assert_eq!(err.key_path(), "robots.placement.poses[0]");
}

#[test]
fn shipped_scenarios_load() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn diffusion_bound_matches_explicit_stability(d in 1.0f64..2000.0, rate in 5.0f64..120.0) {
        let text = format!("tick_rate = {rate}\n{MINIMAL}\n[field]\ndiffusion_d = {d}\n");
        let stable = d * (1.0 / rate) / 100.0 <= 0.25;
        match load(&text) {
            Ok(_) => prop_assert!(stable),
            Err(e) => {
                prop_assert!(!stable);
                prop_assert_eq!(e.key_path(), "field.diffusion_d");
            }
        }
    }

    #[test]
    fn uniform_placement_keeps_robots_apart(count in 1usize..60, seed in 0u64..1000) {
        let text = format!(
            "master_seed = {seed}\n[arena]\nwidth_mm = 1000.0\nheight_mm = 800.0\n[robots.placement]\nkind = \"uniform\"\ncount = {count}\n"
        );
        let cfg = load(&text).unwrap();
        let robots = cfg.initial_robots().unwrap();
        prop_assert_eq!(robots.len(), count);
        let r = cfg.robots.radius_mm;
        for (i, a) in robots.iter().enumerate() {
            prop_assert!(a.pos.x >= r && a.pos.x <= 1000.0 - r && a.pos.y >= r && a.pos.y <= 800.0 - r);
            for b in &robots[i + 1..] {
                prop_assert!(a.pos.dist(b.pos) >= 2.0 * r);
            }
        }
    }
}
