//! Core algorithms for a light-projected augmented-reality robot arena.
//!
//! The crate is organised along the perception/actuation loop:
//!
//! - [`image`]: raster buffers, PNM I/O, filtering and the synthetic camera.
//! - [`detect`]: marker-free circle detection with a two-stage gradient Hough transform.
//! - [`track`]: persistent identities over per-frame detections.
//! - [`calib`]: homographies between camera, projector and world frames.
//! - [`field`]: the virtual environment (pheromone grid, tiles, virtual objects).
//! - [`render`]: projector frame composition.
//! - [`swarm`]: simulated robots that sense the projected environment.
//!
//! All randomness is derived from counter-based keys (see [`rng`]) so that any
//! run is reproducible from its seed.

// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod detect;
pub mod field;
pub mod geom;
pub mod image;
pub mod render;
pub mod rng;
pub mod swarm;
pub mod track;

pub use geom::Point;
