//! File formats: 8-bit PNG for images and masks, PFM for raw float exports.

mod pfm;
mod png;

pub use pfm::{read_pfm, write_pfm};
pub use png::{load_image, load_mask, save_image, save_mask};
