use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::missing_or_io;
use crate::labeler::LabelMask;
use crate::sweep::GrayImage;

pub fn save_gray_png(path: &Path, image: &GrayImage) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(w, image.width, image.height);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
    writer.write_image_data(&image.data).map_err(|e| Error::format(path, e.to_string()))?;
    writer.finish().map_err(|e| Error::format(path, e.to_string()))
}

/// Writes interleaved 8-bit RGB.
pub fn save_rgb_png(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width as usize * height as usize * 3 {
        return Err(Error::domain(format!("{} bytes for a {width}x{height} RGB image", rgb.len())));
    }
    let w = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(w, width, height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
    writer.write_image_data(rgb).map_err(|e| Error::format(path, e.to_string()))?;
    writer.finish().map_err(|e| Error::format(path, e.to_string()))
}

/// Reads an 8-bit grayscale PNG; other color types are rejected.
pub fn load_gray_png(path: &Path) -> Result<GrayImage> {
    let file = File::open(path).map_err(|e| missing_or_io(path, e, "png image"))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(
            path,
            format!("expected 8-bit grayscale, found {:?} {:?}", info.color_type, info.bit_depth),
        ));
    }
    buf.truncate(info.width as usize * info.height as usize);
    Ok(GrayImage {
        width: info.width,
        height: info.height,
        data: buf,
    })
}

pub fn save_mask_png(path: &Path, mask: &LabelMask) -> Result<()> {
    let image = GrayImage {
        width: mask.width,
        height: mask.height,
        data: mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
    };
    save_gray_png(path, &image)
}

/// Reads a 0/255 mask; any other value is a format error.
pub fn load_mask_png(path: &Path) -> Result<LabelMask> {
    let image = load_gray_png(path)?;
    if let Some(i) = image.data.iter().position(|&x| x != 0 && x != 255) {
        return Err(Error::format(
            path,
            format!("mask value {} at pixel ({}, {})", image.data[i], i % image.width as usize, i / image.width as usize),
        ));
    }
    Ok(LabelMask::from_bits(image.width, image.height, image.data.iter().map(|&x| x == 255).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.png");
        let mut im = GrayImage::new(5, 3);
        for (i, x) in im.data.iter_mut().enumerate() {
            *x = (i * 17) as u8;
        }
        save_gray_png(&p, &im).unwrap();
        assert_eq!(load_gray_png(&p).unwrap(), im);
    }

    #[test]
    fn mask_round_trip_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let mut m = LabelMask::empty(4, 2);
        m.set(3, 1, true);
        save_mask_png(&p, &m).unwrap();
        assert_eq!(load_mask_png(&p).unwrap().pixels(), vec![(3, 1)]);
        let mut im = GrayImage::new(2, 2);
        im.set(1, 0, 7);
        save_gray_png(&p, &im).unwrap();
        let e = load_mask_png(&p).unwrap_err().to_string();
        assert!(e.contains("m.png") && e.contains("(1, 0)"), "{e}");
    }

    #[test]
    fn missing_png() {
        let e = load_gray_png(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(matches!(e, Error::MissingFile { .. }));
    }
}
