//! Shared fixtures for the benchmarks: representative pages and rasters.

use layoutgraph::doc::{NormBox, Page};
use layoutgraph::features::PageRaster;
use layoutgraph::io::{generate_pages, SynthConfig};

/// A single busy synthetic page with around two hundred boxes.
pub fn busy_page() -> Page {
    let cfg = SynthConfig {
        seed: 404,
        pages: 1,
        columns: 2,
        body_blocks: (5, 5),
        paragraph_lines: (4, 4),
        words_per_line: (6, 8),
        ..SynthConfig::default()
    };
    generate_pages(&cfg).expect("valid generator config").remove(0)
}

/// The busy page's normalized boxes.
pub fn busy_boxes() -> Vec<NormBox> {
    busy_page().norm_boxes().expect("generator emits valid boxes")
}

/// A deterministic grayscale raster with a mild gradient texture.
pub fn textured_raster(width: usize, height: usize) -> PageRaster {
    let gray = (0..width * height)
        .map(|i| {
            let x = (i % width) as f64 / width as f64;
            let y = (i / width) as f64 / height as f64;
            0.25 + 0.5 * (0.5 * x + 0.3 * y) + 0.05 * ((i % 17) as f64 / 17.0)
        })
        .collect();
    PageRaster {
        width,
        height,
        gray,
    }
}
