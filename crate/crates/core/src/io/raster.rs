//! Page image loading into the grayscale raster the image pathway pools.

use std::path::Path;

use crate::doc::Page;
use crate::features::PageRaster;
use crate::io::IoError;

/// Reads an image file as grayscale with values in `[0, 1]`.
pub fn load_raster(path: &Path) -> Result<PageRaster, IoError> {
    let img = image::open(path).map_err(|e| IoError::BadImage {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (width, height) = (gray.width() as usize, gray.height() as usize);
    Ok(PageRaster {
        width,
        height,
        gray: gray.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
    })
}

/// The page's raster when it references an image, `None` otherwise.
pub fn raster_for_page(page: &Page) -> Result<Option<PageRaster>, IoError> {
    match &page.image_path {
        None => Ok(None),
        Some(path) => load_raster(path).map(Some),
    }
}
