use arena_core::detect::Detection;
use arena_core::track::{associate, step_tracker, Track, TrackState, TrackerParams};
use proptest::prelude::*;

fn track(id: u64, cx: f64, cy: f64) -> Track {
    Track {
        id,
        cx,
        cy,
        vx: 0.0,
        vy: 0.0,
        r: 10.0,
        state: TrackState::Confirmed,
        hits: 3,
        misses: 0,
        last_update: 0,
    }
}

fn det(cx: f64, cy: f64) -> Detection {
    Detection {
        cx,
        cy,
        r: 10.0,
        score: 100,
    }
}

fn dist(t: &Track, d: &Detection) -> f64 {
    ((t.cx - d.cx).powi(2) + (t.cy - d.cy).powi(2)).sqrt()
}

/// Best (maximum cardinality, then minimum cost) gated matching by
/// enumerating every injective assignment.
fn brute_force(tracks: &[Track], dets: &[Detection], gate: f64) -> (usize, f64) {
    fn go(
        i: usize,
        tracks: &[Track],
        dets: &[Detection],
        gate: f64,
        used: &mut Vec<bool>,
        acc: (usize, f64),
        best: &mut (usize, f64),
    ) {
        if i == tracks.len() {
            if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                *best = acc;
            }
            return;
        }
        go(i + 1, tracks, dets, gate, used, acc, best);
        for j in 0..dets.len() {
            let d = dist(&tracks[i], &dets[j]);
            if !used[j] && d <= gate {
                used[j] = true;
                go(i + 1, tracks, dets, gate, used, (acc.0 + 1, acc.1 + d), best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, f64::INFINITY);
    go(0, tracks, dets, gate, &mut vec![false; dets.len()], (0, 0.0), &mut best);
    best
}

fn instance() -> impl Strategy<Value = (Vec<Track>, Vec<Detection>)> {
    (
        proptest::collection::vec((0.0f64..40.0, 0.0f64..40.0), 0..=4),
        proptest::collection::vec((0.0f64..40.0, 0.0f64..40.0), 0..=4),
    )
        .prop_map(|(t, d)| {
            (
                t.into_iter().enumerate().map(|(i, (x, y))| track(i as u64 * 3 + 1, x, y)).collect(),
                d.into_iter().map(|(x, y)| det(x, y)).collect(),
            )
        })
}

proptest! {
    #[test]
    fn greedy_is_a_valid_maximal_matching((tracks, dets) in instance(), gate in 1.0f64..30.0) {
        let a = associate(&tracks, &dets, gate);
        let by_id = |id: u64| tracks.iter().find(|t| t.id == id).unwrap();
        let mut seen_t = std::collections::HashSet::new();
        let mut seen_d = std::collections::HashSet::new();
        for &(id, j) in &a.matches {
            prop_assert!(seen_t.insert(id) && seen_d.insert(j));
            prop_assert!(dist(by_id(id), &dets[j]) <= gate);
        }
        prop_assert_eq!(a.matches.len() + a.unmatched_tracks.len(), tracks.len());
        prop_assert_eq!(a.matches.len() + a.unmatched_detections.len(), dets.len());
        // no leftover pair could still be matched
        for &id in &a.unmatched_tracks {
            for &j in &a.unmatched_detections {
                prop_assert!(dist(by_id(id), &dets[j]) > gate);
            }
        }
        // the closest gated pair is always taken
        let closest = tracks
            .iter()
            .flat_map(|t| dets.iter().enumerate().map(move |(j, d)| (dist(t, d), t.id, j)))
            .filter(|p| p.0 <= gate)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        if let Some((_, id, j)) = closest {
            prop_assert!(a.matches.contains(&(id, j)));
        }
    }

    #[test]
    fn greedy_matches_optimum_when_each_detection_has_one_candidate(
        (tracks, dets) in instance(),
        gate in 1.0f64..30.0,
    ) {
        let unique = dets.iter().all(|d| tracks.iter().filter(|t| dist(t, d) <= gate).count() <= 1)
            && tracks.iter().all(|t| dets.iter().filter(|d| dist(t, d) <= gate).count() <= 1);
        prop_assume!(unique);
        let a = associate(&tracks, &dets, gate);
        let cost: f64 = a
            .matches
            .iter()
            .map(|&(id, j)| dist(tracks.iter().find(|t| t.id == id).unwrap(), &dets[j]))
            .sum();
        let (n, best) = brute_force(&tracks, &dets, gate);
        prop_assert_eq!(a.matches.len(), n);
        if n > 0 {
            prop_assert!((cost - best).abs() < 1e-9);
        }
    }

    #[test]
    fn greedy_cost_bounded_by_optimum_in_small_instances((tracks, dets) in instance(), gate in 1.0f64..30.0) {
        // greedy never matches fewer than half the optimum
        let a = associate(&tracks, &dets, gate);
        let (n, _) = brute_force(&tracks, &dets, gate);
        prop_assert!(2 * a.matches.len() >= n);
    }

    #[test]
    fn association_is_scale_symmetric((tracks, dets) in instance(), gate in 1.0f64..30.0, k in 0.1f64..20.0) {
        let a = associate(&tracks, &dets, gate);
        let ts: Vec<Track> = tracks.iter().map(|t| track(t.id, t.cx * k, t.cy * k)).collect();
        let ds: Vec<Detection> = dets.iter().map(|d| det(d.cx * k, d.cy * k)).collect();
        let b = associate(&ts, &ds, gate * k);
        // ties at exactly the gate can flip under floating point scaling
        let near_gate = tracks.iter().any(|t| dets.iter().any(|d| (dist(t, d) - gate).abs() < 1e-9 * gate));
        prop_assume!(!near_gate);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn silent_tracks_are_lost_after_max_misses(n in 1usize..6, max_misses in 1u32..8) {
        let params = TrackerParams { max_misses, ..TrackerParams::default() };
        let dets: Vec<Detection> = (0..n).map(|i| det(50.0 * i as f64, 0.0)).collect();
        let mut next = 0;
        let (mut tracks, ev) = step_tracker(&[], &dets, &params, 0.1, 0, &mut next).unwrap();
        prop_assert_eq!(ev.spawned.len(), n);
        for k in 1..=max_misses {
            let (t, ev) = step_tracker(&tracks, &[], &params, 0.1, k as u64, &mut next).unwrap();
            if k < max_misses {
                prop_assert!(ev.lost.is_empty());
                prop_assert!(t.iter().all(|t| t.state != TrackState::Lost));
            } else {
                prop_assert_eq!(ev.lost.len(), n);
                prop_assert!(t.iter().all(|t| t.state == TrackState::Lost));
            }
            tracks = t;
        }
        let (t, _) = step_tracker(&tracks, &[], &params, 0.1, 99, &mut next).unwrap();
        prop_assert!(t.is_empty());
    }

    #[test]
    fn ids_increase_and_never_repeat(counts in proptest::collection::vec(0usize..5, 1..20)) {
        let params = TrackerParams { max_misses: 1, ..TrackerParams::default() };
        let mut next = 0;
        let mut tracks = Vec::new();
        let mut seen = Vec::new();
        for (tick, &c) in counts.iter().enumerate() {
            // detections jump far every tick so nothing associates
            let dets: Vec<Detection> = (0..c).map(|i| det(1000.0 * tick as f64, 100.0 * i as f64)).collect();
            let (t, ev) = step_tracker(&tracks, &dets, &params, 0.1, tick as u64, &mut next).unwrap();
            seen.extend(ev.spawned);
            tracks = t;
        }
        prop_assert!(seen.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn single_detection_confirms_with_one_id() {
    let params = TrackerParams::default();
    let mut next = 0;
    let mut tracks = Vec::new();
    for tick in 1..=3 {
        let (t, _) = step_tracker(&tracks, &[det(10.0, 10.0)], &params, 0.1, tick, &mut next).unwrap();
        tracks = t;
    }
    assert_eq!(tracks.len(), 1);
    assert_eq!(tracks[0].id, 0);
    assert_eq!(tracks[0].state, TrackState::Confirmed);
}
