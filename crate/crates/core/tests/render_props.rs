use arena_core::calib::Homography;
use arena_core::field::{Field, TileLayer};
use arena_core::render::{
    compose_projector_frame, ring_for_track, Colormap, FieldScale, LayerSettings, OverlayStyle,
    ProjectorGeometry, Scene,
};
use arena_core::track::{Track, TrackState};
use arena_core::Point;
use proptest::prelude::*;

fn settings() -> LayerSettings {
    LayerSettings {
        geometry: ProjectorGeometry {
            width: 320,
            height: 240,
            mm_per_px: 2.0,
        },
        field_opacity: 0.7,
        field_scale: FieldScale::PerFrame,
        colormap: Colormap::default(),
        source_color: [255, 0, 255],
    }
}

fn tiles() -> TileLayer {
    TileLayer::checkerboard(8, 6, 80.0, [[20, 20, 60], [200, 200, 120]]).unwrap()
}

fn field() -> Field {
    let mut f = Field::new(64, 48, 10.0, 0.0, 0.0, 1.0).unwrap();
    f.deposit(Point::new(300.0, 200.0), 5.0).unwrap();
    f.deposit(Point::new(100.0, 400.0), 2.0).unwrap();
    f
}

fn track(id: u64, cx: f64, cy: f64, state: TrackState) -> Track {
    Track {
        id,
        cx,
        cy,
        vx: 0.0,
        vy: 0.0,
        r: 8.0,
        state,
        hits: 3,
        misses: 0,
        last_update: 0,
    }
}

/// Camera → projector map: mild projective warp.
fn cam_to_proj() -> Homography {
    Homography::from_rows([[0.52, 0.02, 10.0], [-0.01, 0.5, 6.0], [2e-5, 1e-5, 1.0]]).unwrap()
}

fn compose(tracks: &[Track], style: &OverlayStyle) -> arena_core::render::ProjectorFrame {
    let (t, f, h) = (tiles(), field(), cam_to_proj());
    let scene = Scene {
        tiles: &t,
        field: &f,
        objects: &[],
        tracks,
        camera_to_projector: &h,
        style,
        tick: 3,
        track_labels: None,
    };
    compose_projector_frame(&scene, &settings())
}

fn changed(a: &arena_core::render::ProjectorFrame, b: &arena_core::render::ProjectorFrame) -> Vec<(usize, usize)> {
    let (w, h) = (a.image().width(), a.image().height());
    (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| a.pixel(x, y) != b.pixel(x, y))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn composition_is_pure(cx in 0.0f64..600.0, cy in 0.0f64..450.0) {
        let tr = [track(4, cx, cy, TrackState::Confirmed)];
        let style = OverlayStyle::default();
        prop_assert_eq!(compose(&tr, &style), compose(&tr, &style));
    }

    #[test]
    fn adding_a_track_only_touches_its_annulus(cx in 40.0f64..560.0, cy in 40.0f64..410.0, id in 0u64..20) {
        let style = OverlayStyle::default();
        let base = [track(100, 300.0, 200.0, TrackState::Confirmed)];
        let mut more = base.to_vec();
        let t = track(id, cx, cy, TrackState::Confirmed);
        more.push(t.clone());
        let (a, b) = (compose(&base, &style), compose(&more, &style));
        let (c, r) = ring_for_track(&t, &cam_to_proj(), &style).unwrap();
        for (x, y) in changed(&a, &b) {
            let d = Point::new(x as f64, y as f64).dist(c);
            prop_assert!((d - r).abs() <= style.ring_thickness / 2.0 + 1e-9);
        }
    }

    #[test]
    fn ring_centre_maps_back_to_track(cx in 80.0f64..520.0, cy in 80.0f64..370.0) {
        let style = OverlayStyle::default();
        let t = track(1, cx, cy, TrackState::Confirmed);
        let a = compose(&[], &style);
        let b = compose(std::slice::from_ref(&t), &style);
        let px = changed(&a, &b);
        prop_assert!(!px.is_empty());
        // a full ring's pixel centroid is its centre
        let n = px.len() as f64;
        let (mx, my) = px.iter().fold((0.0, 0.0), |s, &(x, y)| (s.0 + x as f64, s.1 + y as f64));
        let centre = Point::new(mx / n, my / n);
        // judged in projector pixels, where the ring is rasterised
        let want = cam_to_proj().map_point(Point::new(cx, cy)).unwrap();
        prop_assert!(centre.dist(want) <= 0.5, "{}", centre.dist(want));
    }
}

#[test]
fn rings_only_for_confirmed_tracks() {
    let style = OverlayStyle::default();
    let plain = compose(&[], &style);
    let tentative = [
        track(0, 200.0, 200.0, TrackState::Tentative),
        track(1, 300.0, 200.0, TrackState::Lost),
    ];
    assert_eq!(compose(&tentative, &style), plain);
}

#[test]
fn distinct_ring_colours_by_track_id() {
    let style = OverlayStyle {
        palette: vec![[255, 0, 0], [0, 0, 255]],
        ..OverlayStyle::default()
    };
    let tracks = [
        track(0, 200.0, 200.0, TrackState::Confirmed),
        track(1, 400.0, 200.0, TrackState::Confirmed),
    ];
    let frame = compose(&tracks, &style);
    let plain = compose(&[], &style);
    let colours_near = |t: &Track| {
        let (c, _) = ring_for_track(t, &cam_to_proj(), &style).unwrap();
        changed(&plain, &frame)
            .into_iter()
            .filter(|&(x, y)| Point::new(x as f64, y as f64).dist(c) < 20.0)
            .map(|(x, y)| frame.pixel(x, y))
            .collect::<std::collections::HashSet<_>>()
    };
    assert_eq!(colours_near(&tracks[0]), [[255, 0, 0]].into_iter().collect());
    assert_eq!(colours_near(&tracks[1]), [[0, 0, 255]].into_iter().collect());
}

#[test]
fn empty_scene_is_pure_tile_pattern() {
    let t = tiles();
    let f = Field::new(64, 48, 10.0, 0.0, 0.0, 1.0).unwrap();
    let h = cam_to_proj();
    let style = OverlayStyle::default();
    let scene = Scene {
        tiles: &t,
        field: &f,
        objects: &[],
        tracks: &[],
        camera_to_projector: &h,
        style: &style,
        tick: 0,
        track_labels: None,
    };
    let s = settings();
    let frame = compose_projector_frame(&scene, &s);
    for y in 0..s.geometry.height {
        for x in 0..s.geometry.width {
            let world = Point::new((x as f64 + 0.5) * 2.0, (y as f64 + 0.5) * 2.0);
            let (tx, ty) = ((world.x / 80.0) as usize, (world.y / 80.0) as usize);
            let label = (tx + ty) % 2;
            assert_eq!(frame.pixel(x, y), t.base_colors[label]);
        }
    }
}
