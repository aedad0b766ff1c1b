//! Portable float map read/write for diffusion intermediates and softmax
//! planes. Little-endian f32, rows stored bottom-to-top per the format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CueError, Result};
use crate::raster::{ColorSpace, RasterImage};

pub fn write_pfm(img: &RasterImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| CueError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let channels = img.channels();
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let io = |e| CueError::io(path, e);
    write!(w, "{magic}\n{} {}\n-1.0\n", img.width(), img.height()).map_err(io)?;
    let (width, height) = (img.width(), img.height());
    for y in (0..height).rev() {
        for x in 0..width {
            for c in 0..channels {
                w.write_all(&(img.get(x, y, c) as f32).to_le_bytes())
                    .map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read_pfm(path: &Path) -> Result<RasterImage> {
    if !path.exists() {
        return Err(CueError::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|e| CueError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| CueError::io(path, e))?;

    let bad = |msg: &str| CueError::Schema(format!("{}: {msg}", path.display()));
    // Header: three whitespace-terminated tokens (magic, "w h", scale).
    let mut pos = 0;
    let mut token = || -> Result<String> {
        let mut t = Vec::new();
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            t.push(bytes[pos]);
            pos += 1;
        }
        // One whitespace byte terminates the token.
        pos += 1;
        String::from_utf8(t).map_err(|_| CueError::Schema("non-utf8 pfm header".into()))
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("not a PFM file")),
    };
    let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = token()?.parse().map_err(|_| bad("bad scale"))?;
    let little_endian = scale < 0.0;

    let n = width * height;
    let expected = 4 * channels * n;
    // `token` consumed exactly one whitespace byte after the scale, so the
    // binary block starts at `pos`.
    if bytes.len() < pos + expected {
        return Err(bad("truncated pixel data"));
    }
    let pixel_bytes = &bytes[pos..pos + expected];
    let mut data = vec![0.0f64; channels * n];
    let mut off = 0;
    for y in (0..height).rev() {
        for x in 0..width {
            for c in 0..channels {
                let raw: [u8; 4] = pixel_bytes[off..off + 4].try_into().unwrap();
                let v = if little_endian {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                data[c * n + y * width + x] = v as f64;
                off += 4;
            }
        }
    }
    let space = if channels == 3 {
        ColorSpace::Rgb
    } else {
        ColorSpace::Gray
    };
    RasterImage::new(space, height, width, data)
}
