use std::path::Path;

use anyhow::{bail, Context};
use flowtex::ImageGrid;
use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};

/// Loads an 8- or 16-bit PNG with 1 or 3 channels into `[0, 1]`. An alpha
/// channel is dropped with a warning.
pub fn load_png(path: impl AsRef<Path>) -> anyhow::Result<ImageGrid> {
    let path = path.as_ref();
    let mut reader = ImageReader::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    reader.set_format(ImageFormat::Png);
    let img = reader.decode().with_context(|| format!("cannot decode {} as PNG", path.display()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let warn_alpha = || log::warn!("{}: alpha channel ignored", path.display());
    let grid = |channels: usize, data: Vec<f64>| {
        ImageGrid::from_vec(w, h, channels, data).map_err(anyhow::Error::from)
    };
    let scale8 = |v: &[u8]| v.iter().map(|&x| x as f64 / 255.0).collect::<Vec<_>>();
    let scale16 = |v: &[u16]| v.iter().map(|&x| x as f64 / 65535.0).collect::<Vec<_>>();
    match img {
        DynamicImage::ImageLuma8(b) => grid(1, scale8(b.as_raw())),
        DynamicImage::ImageRgb8(b) => grid(3, scale8(b.as_raw())),
        DynamicImage::ImageLuma16(b) => grid(1, scale16(b.as_raw())),
        DynamicImage::ImageRgb16(b) => grid(3, scale16(b.as_raw())),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgba8(_) => {
            warn_alpha();
            let stride = if matches!(img, DynamicImage::ImageLumaA8(_)) { 2 } else { 4 };
            let keep = stride - 1;
            let raw = img.as_bytes();
            grid(keep, raw.chunks_exact(stride).flat_map(|p| scale8(&p[..keep])).collect())
        }
        DynamicImage::ImageLumaA16(b) => {
            warn_alpha();
            grid(1, b.as_raw().chunks_exact(2).map(|p| p[0] as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgba16(b) => {
            warn_alpha();
            grid(3, b.as_raw().chunks_exact(4).flat_map(|p| scale16(&p[..3])).collect())
        }
        other => bail!("{}: unsupported pixel format {:?}", path.display(), other.color()),
    }
}

/// 8-bit quantization: clamp to `[0, 1]`, scale and round half to even.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

/// Writes a 1- or 3-channel image as an 8-bit PNG.
pub fn save_png(path: impl AsRef<Path>, image: &ImageGrid) -> anyhow::Result<()> {
    let path = path.as_ref();
    let (w, h) = (image.width() as u32, image.height() as u32);
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    let result = match image.channels() {
        1 => GrayImage::from_raw(w, h, bytes).map(|b| b.save_with_format(path, ImageFormat::Png)),
        3 => RgbImage::from_raw(w, h, bytes).map(|b| b.save_with_format(path, ImageFormat::Png)),
        c => bail!("cannot save a {c}-channel image as PNG"),
    };
    result
        .expect("buffer size matches image dimensions")
        .with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma, Rgba};
    use rand::{Rng, SeedableRng};

    #[test]
    fn eight_bit_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for channels in [1, 3] {
            let bytes: Vec<u8> = (0..13 * 7 * channels).map(|_| rng.gen()).collect();
            let img = ImageGrid::from_vec(13, 7, channels, bytes.iter().map(|&b| b as f64 / 255.0).collect()).unwrap();
            let path = dir.path().join(format!("rt{channels}.png"));
            save_png(&path, &img).unwrap();
            let back = load_png(&path).unwrap();
            assert_eq!(back, img);
            let again: Vec<u8> = back.data().iter().map(|&v| quantize(v)).collect();
            assert_eq!(again, bytes);
        }
    }

    #[test]
    fn sixteen_bit_full_scale_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g16.png");
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(2, 1, vec![65535, 0]).unwrap();
        buf.save(&path).unwrap();
        let img = load_png(&path).unwrap();
        assert_eq!(img.channels(), 1);
        assert_eq!(img.data(), &[1.0, 0.0]);
    }

    #[test]
    fn alpha_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgba.png");
        let buf: ImageBuffer<Rgba<u8>, Vec<u8>> = ImageBuffer::from_raw(1, 1, vec![255, 0, 51, 7]).unwrap();
        buf.save(&path).unwrap();
        let img = load_png(&path).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(img.data(), &[1.0, 0.0, 0.2]);
    }

    #[test]
    fn ties_round_to_even() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.25 + 0.25 / 255.0), 64);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(7.0), 255);
    }

    #[test]
    fn unreadable_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_png(dir.path().join("missing.png")).is_err());
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not a png").unwrap();
        assert!(load_png(&junk).is_err());
    }
}
