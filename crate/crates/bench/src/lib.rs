//! Shared fixtures for the pipeline benchmarks.

use rand::{Rng, SeedableRng};

use spxrefine_core::raster::RgbRaster;

/// Deterministic noise image.
pub fn noise_image(width: u32, height: u32, seed: u64) -> RgbRaster {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut img = RgbRaster::new(width, height).unwrap();
    for p in img.pixels.iter_mut() {
        *p = [rng.random(), rng.random(), rng.random()];
    }
    img
}
