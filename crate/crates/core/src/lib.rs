//! Domain model and event-sourced store for shared journeys and the notes
//! travellers leave on them.

pub mod engagement;
pub mod error;
pub mod geo;
pub mod identity;
pub mod ids;
pub mod journeys;
pub mod notes;
pub mod store;

pub use error::{Error, Result};
