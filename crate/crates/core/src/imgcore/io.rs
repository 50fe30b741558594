//! 8/16-bit grayscale PNG and binary PGM (P5) I/O.
//!
//! Everything is written at 16 bits so the round trip error stays within one
//! quantization step (1/65535). Values outside `[0, 1]` are clamped on write.

use super::{Channel, ImageError, ImagePlane};
use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma};
use std::io::Cursor;
use std::path::Path;

// Rejects headers that claim absurd sizes before any pixel buffer is allocated.
const MAX_PIXELS: u64 = 1 << 28;

enum DiskFormat {
    Png,
    Pgm,
}

fn disk_format(path: &Path) -> Result<DiskFormat, ImageError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => Ok(DiskFormat::Png),
        Some("pgm") => Ok(DiskFormat::Pgm),
        _ => Err(ImageError::UnsupportedFormat {
            path: path.to_path_buf(),
        }),
    }
}

/// Read an image, taking the channel from the filename suffix
/// (`*_vis`, `*_thm`, `*_fused`); unknown suffixes read as visible.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImagePlane, ImageError> {
    let path = path.as_ref();
    let channel = Channel::from_path(path).unwrap_or(Channel::Visible);
    read_image_as(path, channel)
}

pub fn read_image_as(path: impl AsRef<Path>, channel: Channel) -> Result<ImagePlane, ImageError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corrupt = |reason: String| ImageError::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.is_empty() {
        return Err(corrupt("empty file".into()));
    }

    let reader = ImageReader::new(Cursor::new(&bytes))
        .with_guessed_format()
        .map_err(|e| corrupt(e.to_string()))?;
    if reader.format().is_none() {
        return Err(corrupt("unrecognized header".into()));
    }
    let (w, h) = reader.into_dimensions().map_err(|e| corrupt(e.to_string()))?;
    if (w as u64) * (h as u64) > MAX_PIXELS {
        return Err(ImageError::DimensionOverflow {
            path: path.to_path_buf(),
            width: w as u64,
            height: h as u64,
        });
    }

    let decoded = ImageReader::new(Cursor::new(&bytes))
        .with_guessed_format()
        .map_err(|e| corrupt(e.to_string()))?
        .decode()
        .map_err(|e| corrupt(e.to_string()))?;

    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|c| c as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|c| c as f64 / 65535.0).collect(),
        other => {
            return Err(ImageError::UnsupportedDepth {
                path: path.to_path_buf(),
                found: format!("{:?}", other.color()),
            })
        }
    };
    ImagePlane::from_vec(width, height, channel, data)
}

/// Write a 16-bit grayscale PNG or PGM, chosen by extension.
pub fn write_image(img: &ImagePlane, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let format = disk_format(path)?;
    let codes: Vec<u16> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let io_err = |e: image::ImageError| ImageError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };

    match format {
        DiskFormat::Png => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, codes).expect("buffer length matches dimensions");
            buf.save_with_format(path, ImageFormat::Png).map_err(io_err)
        }
        DiskFormat::Pgm => {
            // Binary P5 with maxval 65535: big-endian 16-bit samples.
            let mut bytes = format!("P5\n{w} {h}\n65535\n").into_bytes();
            bytes.extend(codes.iter().flat_map(|c| c.to_be_bytes()));
            std::fs::write(path, bytes).map_err(|source| ImageError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> ImagePlane {
        ImagePlane::from_fn(w, h, Channel::Thermal, |x, y| (x + y * w) as f64 / (w * h - 1) as f64).unwrap()
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient(16, 16);
        let path = dir.path().join("grad_thm.png");
        write_image(&img, &path).unwrap();
        let back = read_image(&path).unwrap();
        assert_eq!(back.channel(), Channel::Thermal);
        assert!(img.max_abs_diff(&back) <= 1.0 / 65535.0);
    }

    #[test]
    fn pgm_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient(13, 7);
        let path = dir.path().join("grad.pgm");
        write_image(&img, &path).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert!(raw.starts_with(b"P5"));
        let back = read_image(&path).unwrap();
        assert!(img.max_abs_diff(&back) <= 1.0 / 65535.0);
    }

    #[test]
    fn full_scale_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImagePlane::filled(64, 64, Channel::Visible, 1.0).unwrap();
        let path = dir.path().join("one_vis.png");
        write_image(&img, &path).unwrap();
        let back = read_image(&path).unwrap();
        assert!(back.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn reads_eight_bit_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eight.png");
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(2, 1, vec![0u8, 255]).unwrap();
        buf.save(&path).unwrap();
        let img = read_image(&path).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn zero_byte_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.png");
        std::fs::write(&path, b"").unwrap();
        let err = read_image(&path).unwrap_err();
        assert!(err.to_string().contains("unsupported or corrupt image"), "{err}");
        assert!(err.to_string().contains("empty.png"));
    }

    #[test]
    fn color_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let buf: ImageBuffer<image::Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(1, 1, vec![1, 2, 3]).unwrap();
        buf.save(&path).unwrap();
        assert!(matches!(read_image(&path), Err(ImageError::UnsupportedDepth { .. })));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_image("/definitely/not/here_thm.png").unwrap_err();
        assert!(matches!(err, ImageError::Io { .. }));
        assert!(err.to_string().contains("here_thm.png"));
    }

    #[test]
    fn unknown_extension_on_write() {
        let img = ImagePlane::filled(2, 2, Channel::Visible, 0.0).unwrap();
        assert!(matches!(
            write_image(&img, "/tmp/x.tiff"),
            Err(ImageError::UnsupportedFormat { .. })
        ));
    }
}
