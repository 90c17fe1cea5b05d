//! PNG rendering: magnitude as linear 8-bit grayscale, phase through a fixed
//! cyclic colormap so that -pi and pi land on the same color.

use crate::array::atomic_write;
use crate::error::{CliError, Result};
use prtk_core::field::ComplexImage;
use std::f64::consts::PI;
use std::path::Path;

/// Cyclic phase colormap: six anchor colors around the hue circle, linearly
/// interpolated. Index 0 corresponds to phase -pi, wrapping back at +pi.
const PHASE_ANCHORS: [[f64; 3]; 6] = [
    [62.0, 80.0, 176.0],
    [139.0, 53.0, 135.0],
    [196.0, 74.0, 57.0],
    [196.0, 164.0, 60.0],
    [105.0, 171.0, 82.0],
    [54.0, 141.0, 162.0],
];

fn phase_color(phase: f64) -> [u8; 3] {
    // map [-pi, pi) to [0, 6)
    let t = ((phase + PI) / (2.0 * PI)).rem_euclid(1.0) * 6.0;
    let i = (t as usize) % 6;
    let frac = t - t.floor();
    let a = PHASE_ANCHORS[i];
    let b = PHASE_ANCHORS[(i + 1) % 6];
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (a[c] + (b[c] - a[c]) * frac).round().clamp(0.0, 255.0) as u8;
    }
    out
}

pub fn render_png(image: &ComplexImage, out_mag: &Path, out_phase: &Path) -> Result<()> {
    let n = image.side();
    if !image.data().iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(CliError::Validation("cannot render a non-finite image".into()));
    }
    let max_mag = image
        .data()
        .iter()
        .map(|v| v.norm())
        .fold(0.0_f64, f64::max);

    let mut mag = image::GrayImage::new(n as u32, n as u32);
    let mut phase = image::RgbImage::new(n as u32, n as u32);
    for r in 0..n {
        for c in 0..n {
            let v = image.at(r, c);
            let g = if max_mag > 0.0 {
                (v.norm() / max_mag * 255.0).round() as u8
            } else {
                0
            };
            mag.put_pixel(c as u32, r as u32, image::Luma([g]));
            phase.put_pixel(c as u32, r as u32, image::Rgb(phase_color(v.arg())));
        }
    }

    for (img, path) in [
        (image::DynamicImage::ImageLuma8(mag), out_mag),
        (image::DynamicImage::ImageRgb8(phase), out_phase),
    ] {
        let mut bytes = Vec::new();
        img.write_to(
            &mut std::io::Cursor::new(&mut bytes),
            image::ImageOutputFormat::Png,
        )
        .map_err(|e| CliError::Validation(format!("png encoding failed: {e}")))?;
        atomic_write(path, &bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use tempfile::tempdir;

    fn paths(dir: &tempfile::TempDir) -> (std::path::PathBuf, std::path::PathBuf) {
        (dir.path().join("m.png"), dir.path().join("p.png"))
    }

    #[test]
    fn constant_magnitude_gives_uniform_grayscale() {
        let dir = tempdir().unwrap();
        let (m, p) = paths(&dir);
        let img = ComplexImage::new(
            4,
            (0..16)
                .map(|i| Complex64::from_polar(2.5, i as f64 * 0.3))
                .collect(),
        )
        .unwrap();
        render_png(&img, &m, &p).unwrap();
        let decoded = image::open(&m).unwrap().to_luma8();
        assert!(decoded.pixels().all(|px| px.0[0] == 255));
    }

    #[test]
    fn real_positive_image_has_constant_phase_color() {
        let dir = tempdir().unwrap();
        let (m, p) = paths(&dir);
        let img = ComplexImage::new(
            3,
            (0..9).map(|i| Complex64::new(0.1 + i as f64, 0.0)).collect(),
        )
        .unwrap();
        render_png(&img, &m, &p).unwrap();
        let decoded = image::open(&p).unwrap().to_rgb8();
        let first = *decoded.get_pixel(0, 0);
        assert!(decoded.pixels().all(|px| *px == first));
    }

    #[test]
    fn rendering_is_deterministic() {
        let dir = tempdir().unwrap();
        let (m1, p1) = (dir.path().join("m1.png"), dir.path().join("p1.png"));
        let (m2, p2) = (dir.path().join("m2.png"), dir.path().join("p2.png"));
        let img = ComplexImage::new(
            5,
            (0..25)
                .map(|i| Complex64::new((i as f64).sin(), (i as f64).cos()))
                .collect(),
        )
        .unwrap();
        render_png(&img, &m1, &p1).unwrap();
        render_png(&img, &m2, &p2).unwrap();
        assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn phase_colormap_is_cyclic() {
        let a = phase_color(-PI);
        let b = phase_color(PI - 1e-12);
        for c in 0..3 {
            assert!((a[c] as i32 - b[c] as i32).abs() <= 1);
        }
    }
}
