//! 8-bit PNG load/save. Intensities are divided by 255 on load; quantization
//! back to 8 bit happens only at export.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use crate::error::{CueError, Result};
use crate::raster::{ColorSpace, LabelMask, RasterImage};

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(CueError::MissingFile(path.to_path_buf()));
    }
    ImageReader::open(path)
        .map_err(|e| CueError::io(path, e))?
        .decode()
        .map_err(|e| CueError::Png {
            path: path.to_path_buf(),
            source: e,
        })
}

/// Load a 1-channel PNG as GRAY or a 3-channel PNG as RGB.
pub fn load_image(path: &Path) -> Result<RasterImage> {
    let img = open(path)?;
    match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            let data = g.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
            RasterImage::new(ColorSpace::Gray, h, w, data)
        }
        DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let n = w * h;
            let mut data = vec![0.0; 3 * n];
            for (i, p) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    data[c * n + i] = p.0[c] as f64 / 255.0;
                }
            }
            RasterImage::new(ColorSpace::Rgb, h, w, data)
        }
        other => Err(CueError::Schema(format!(
            "{}: expected 8-bit 1- or 3-channel PNG, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Save RGB as 3-channel PNG, GRAY/EDGE as 1-channel. HSV must be converted
/// back to RGB first.
pub fn save_image(img: &RasterImage, path: &Path) -> Result<()> {
    let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (w, h) = (img.width() as u32, img.height() as u32);
    match img.space() {
        ColorSpace::Rgb => {
            let n = img.width() * img.height();
            let mut buf = Vec::with_capacity(3 * n);
            for i in 0..n {
                for c in 0..3 {
                    buf.push(quant(img.data()[c * n + i]));
                }
            }
            let out = RgbImage::from_raw(w, h, buf).expect("sized buffer");
            out.save(path).map_err(|e| CueError::Png {
                path: path.to_path_buf(),
                source: e,
            })
        }
        ColorSpace::Gray | ColorSpace::Edge => {
            let buf: Vec<u8> = img.plane(0).iter().map(|&v| quant(v)).collect();
            let out = GrayImage::from_raw(w, h, buf).expect("sized buffer");
            out.save(path).map_err(|e| CueError::Png {
                path: path.to_path_buf(),
                source: e,
            })
        }
        ColorSpace::Hsv => Err(CueError::WrongColorSpace {
            expected: "RGB or GRAY".into(),
            found: "HSV".into(),
        }),
    }
}

/// Load a single-channel PNG of raw class ids (255 = ignore).
pub fn load_mask(path: &Path) -> Result<LabelMask> {
    let img = open(path)?;
    match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            let labels = g.pixels().map(|p| p.0[0]).collect();
            LabelMask::new(h, w, labels)
        }
        other => Err(CueError::Schema(format!(
            "{}: masks must be single-channel 8-bit PNG, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn save_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    let out = GrayImage::from_raw(
        mask.width() as u32,
        mask.height() as u32,
        mask.labels().to_vec(),
    )
    .expect("sized buffer");
    out.save(path).map_err(|e| CueError::Png {
        path: path.to_path_buf(),
        source: e,
    })
}
