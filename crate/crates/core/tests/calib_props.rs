use arena_core::calib::{
    calibrate_from_fiducials, estimate_homography, invert_homography, map_point, CalibError,
    Correspondence, Homography,
};
use arena_core::detect::HoughParams;
use arena_core::image::{render_camera_view, CameraModel, ImageBuffer, RobotDisc};
use arena_core::Point;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A well-conditioned random homography over a ~1000 px frame:
/// similarity plus mild shear and perspective.
fn random_h(rng: &mut impl Rng) -> Homography {
    let a = rng.gen_range(-0.5..0.5f64);
    let s = rng.gen_range(0.5..2.0f64);
    let rows = [
        [s * a.cos() + rng.gen_range(-0.1..0.1), -s * a.sin(), rng.gen_range(-200.0..200.0)],
        [s * a.sin(), s * a.cos() + rng.gen_range(-0.1..0.1), rng.gen_range(-200.0..200.0)],
        [rng.gen_range(-2e-4..2e-4), rng.gen_range(-2e-4..2e-4), 1.0],
    ];
    Homography::from_rows(rows).unwrap()
}

fn random_point(rng: &mut impl Rng) -> Point {
    Point::new(rng.gen_range(0.0..1000.0), rng.gen_range(0.0..800.0))
}

fn cross_ratio(p: [Point; 4]) -> f64 {
    let d = |a: Point, b: Point| {
        let s = (b.x - a.x) + (b.y - a.y);
        s.signum() * a.dist(b)
    };
    (d(p[0], p[2]) * d(p[1], p[3])) / (d(p[1], p[2]) * d(p[0], p[3]))
}

proptest! {
    #[test]
    fn cross_ratio_is_preserved(seed in any::<u64>(), t in proptest::array::uniform4(0.0f64..1.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_h(&mut rng);
        let (a, b) = (random_point(&mut rng), random_point(&mut rng));
        prop_assume!(a.dist(b) > 50.0);
        let mut ts = t;
        ts.sort_by(|x, y| x.total_cmp(y));
        prop_assume!(ts.windows(2).all(|w| w[1] - w[0] > 0.05));
        let pts = ts.map(|s| Point::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)));
        let mapped = pts.map(|p| map_point(&h, p).unwrap());
        let (c0, c1) = (cross_ratio(pts), cross_ratio(mapped));
        prop_assert!((c0 - c1).abs() <= 1e-6 * c0.abs().max(1.0), "{} vs {}", c0, c1);
    }

    #[test]
    fn inverse_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_h(&mut rng);
        let inv = invert_homography(&h).unwrap();
        for _ in 0..100 {
            let p = random_point(&mut rng);
            let q = map_point(&inv, map_point(&h, p).unwrap()).unwrap();
            prop_assert!(p.dist(q) < 1e-9);
        }
    }

    #[test]
    fn similarity_pre_transform_composes(seed in any::<u64>(), s in 0.1f64..10.0, ang in -3.0f64..3.0, tx in -500.0f64..500.0, ty in -500.0f64..500.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_h(&mut rng);
        let src: Vec<Point> = (0..12).map(|_| random_point(&mut rng)).collect();
        let corr: Vec<Correspondence> = src.iter().map(|&p| Correspondence::new(p, map_point(&h, p).unwrap())).collect();
        let sim = Homography::from_rows([
            [s * ang.cos(), -s * ang.sin(), tx],
            [s * ang.sin(), s * ang.cos(), ty],
            [0.0, 0.0, 1.0],
        ]).unwrap();
        let moved: Vec<Correspondence> = corr.iter().map(|c| Correspondence::new(map_point(&sim, c.src).unwrap(), c.dst)).collect();
        let (h0, _) = estimate_homography(&corr).unwrap();
        let (h1, _) = estimate_homography(&moved).unwrap();
        // h1 ∘ sim must equal h0
        let composed = sim.then(&h1).unwrap();
        for _ in 0..20 {
            let p = random_point(&mut rng);
            let a = map_point(&h0, p).unwrap();
            let b = map_point(&composed, p).unwrap();
            prop_assert!(a.dist(b) < 1e-7, "{}", a.dist(b));
        }
    }
}

#[test]
fn exact_recovery_over_many_trials() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let h = random_h(&mut rng);
        let n = rng.gen_range(4..20);
        let corr: Vec<Correspondence> = (0..n)
            .map(|_| {
                let p = random_point(&mut rng);
                Correspondence::new(p, map_point(&h, p).unwrap())
            })
            .collect();
        let (est, rms) = estimate_homography(&corr).unwrap();
        assert!(rms < 1e-8);
        for _ in 0..20 {
            let p = random_point(&mut rng);
            worst = worst.max(map_point(&est, p).unwrap().dist(map_point(&h, p).unwrap()));
        }
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn noisy_correspondences_monte_carlo() {
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut rms_all = Vec::new();
    let mut max_all = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_h(&mut rng);
        let corr: Vec<Correspondence> = (0..16)
            .map(|_| {
                let p = random_point(&mut rng);
                let q = map_point(&h, p).unwrap();
                Correspondence::new(p, Point::new(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng)))
            })
            .collect();
        let (est, rms) = estimate_homography(&corr).unwrap();
        let max = corr
            .iter()
            .map(|c| map_point(&est, c.src).unwrap().dist(c.dst))
            .fold(0.0, f64::max);
        rms_all.push(rms);
        max_all.push(max);
    }
    let p95 = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.total_cmp(b));
        v[94]
    };
    let (r, m) = (p95(&mut rms_all), p95(&mut max_all));
    assert!(r <= 0.6, "rms p95 {r}");
    assert!(m <= 1.5, "max p95 {m}");
}

/// Render the projector dot grid into a camera frame through `proj_to_cam`.
fn fiducial_frame(dots: &[Point], proj_to_cam: &Homography, skip: Option<usize>) -> ImageBuffer {
    let cam = CameraModel {
        width: 640,
        height: 480,
        world_to_camera: *proj_to_cam,
        arena_width_mm: 800.0,
        arena_height_mm: 600.0,
        background_level: 20,
        robot_body_level: 230,
        pixel_noise_sigma: 0.0,
        vignette_strength: 0.0,
    };
    let discs: Vec<RobotDisc> = dots
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(_, &c)| RobotDisc { center: c, radius: 18.0 })
        .collect();
    render_camera_view(&discs, &cam, 0).unwrap()
}

fn grid() -> Vec<Point> {
    let mut v = Vec::new();
    for y in [150.0, 300.0, 450.0] {
        for x in [200.0, 400.0, 600.0] {
            v.push(Point::new(x, y));
        }
    }
    v
}

fn proj_to_cam() -> Homography {
    Homography::from_rows([[0.74, 0.05, 25.0], [-0.04, 0.71, 30.0], [3e-5, -2e-5, 1.0]]).unwrap()
}

#[test]
fn fiducial_pipeline_end_to_end() {
    let truth = proj_to_cam();
    let frame = fiducial_frame(&grid(), &truth, None);
    let (cam_to_proj, _) = calibrate_from_fiducials(&grid(), &frame, &HoughParams::default()).unwrap();
    let truth_inv = truth.inverse().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let c = Point::new(rng.gen_range(60.0..580.0), rng.gen_range(60.0..420.0));
        let err = map_point(&cam_to_proj, c).unwrap().dist(map_point(&truth_inv, c).unwrap());
        assert!(err < 0.5, "{err}");
    }
}

#[test]
fn fiducial_count_mismatch() {
    let blank = ImageBuffer::filled(640, 480, 1, 20).unwrap();
    assert!(matches!(
        calibrate_from_fiducials(&grid(), &blank, &HoughParams::default()),
        Err(CalibError::CountMismatch { detected: 0, expected: 9 })
    ));
    let occluded = fiducial_frame(&grid(), &proj_to_cam(), Some(4));
    assert!(matches!(
        calibrate_from_fiducials(&grid(), &occluded, &HoughParams::default()),
        Err(CalibError::CountMismatch { detected: 8, expected: 9 })
    ));
}
