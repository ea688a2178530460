//! REST service, seed import and reports on top of `journeys-core`.

pub mod api;
pub mod config;
pub mod geocoder;
pub mod http;
pub mod report;
pub mod seed;
