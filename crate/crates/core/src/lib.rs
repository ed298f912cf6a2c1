//! Classroom name indication: pan-tilt scan planning, tile capture,
//! panorama stitching, face matching against an enrolled gallery, and a
//! snapshot service for a live teacher view.

pub mod api;
pub mod boxes;
pub mod capture;
pub mod cli;
pub mod config;
pub mod embedding;
pub mod gallery;
pub mod geometry;
pub mod harness;
pub mod imaging;
pub mod matcher;
pub mod profile;
pub mod seed;
pub mod session;
pub mod stitch;
pub mod vision;
