//! Texture dataset generation in three stages: class-wise patch extraction,
//! mosaic stitching, and Voronoi surrogate-task synthesis.

mod cache;
mod generate;
mod mosaic;
mod patches;
mod voronoi;

pub use cache::{load_pool, save_pool};
pub use generate::{generate_texture_dataset, SeedCount, TextureConfig};
pub use mosaic::{build_mosaic, contour_fill, ContourFilledImage, MosaicImage};
pub use patches::{
    augment_patch, balance_pool, extract_patches, AugmentParams, PatchPool, TexturePatch,
    DEFAULT_MIN_SEGMENT_PIXELS,
};
pub use voronoi::{assign_and_fill, cells_for_seeds, rasterize_voronoi, VoronoiLayout};
