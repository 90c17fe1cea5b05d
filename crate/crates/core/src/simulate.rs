//! Generators for the two test families: real-valued toy images with
//! translation freedom, and complex-valued simulated crystal data whose
//! phases come from defect displacement fields projected onto a momentum
//! transfer vector.

use crate::field::{forward_intensities, ComplexImage, DiffractionPattern};
use crate::{PrError, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Scalar projection of the displacement field onto the momentum transfer
/// vector. With b = 1 a single defect winds the phase by exactly 2*pi.
const MOMENTUM_TRANSFER_SCALE: f64 = 2.0 * PI;

const MAX_RESAMPLE_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Convex,
    Concave,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrystalParams {
    pub frame: usize,
    /// Side of the centered sub-grid the scattering points are drawn from.
    pub region: usize,
    /// Inclusive range for the number of scattering points.
    pub num_points: (usize, usize),
    pub shape_kind: ShapeKind,
    pub num_defects: usize,
    /// Inclusive range for the winding strength of each defect.
    pub defect_strength: (f64, f64),
    pub rng_seed: u64,
}

impl Default for CrystalParams {
    fn default() -> Self {
        Self {
            frame: 128,
            region: 110,
            num_points: (6, 12),
            shape_kind: ShapeKind::Convex,
            num_defects: 2,
            defect_strength: (0.5, 2.0),
            rng_seed: 0,
        }
    }
}

impl CrystalParams {
    fn validate(&self) -> Result<()> {
        if self.region > self.frame {
            return Err(PrError::Validation("region must fit in the frame".into()));
        }
        if self.num_points.0 < 3 || self.num_points.1 < self.num_points.0 {
            return Err(PrError::Validation("need at least 3 scattering points".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ToyParams {
    pub frame: usize,
    /// Inclusive range for the number of shapes.
    pub num_shapes: (usize, usize),
    /// Shape intensities, a sub-range of [0, 1].
    pub intensity: (f64, f64),
    /// Maximum whole-content translation, per axis, in pixels.
    pub max_offset: usize,
    pub rng_seed: u64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            frame: 32,
            num_shapes: (1, 2),
            intensity: (0.6, 1.0),
            max_offset: 4,
            rng_seed: 0,
        }
    }
}

impl ToyParams {
    fn validate(&self) -> Result<()> {
        if self.max_offset + 2 >= self.frame {
            return Err(PrError::Validation("max_offset leaves no room for shapes".into()));
        }
        if !(0.0 <= self.intensity.0 && self.intensity.0 <= self.intensity.1 && self.intensity.1 <= 1.0) {
            return Err(PrError::Validation("intensity range must lie in [0,1]".into()));
        }
        if self.num_shapes.0 == 0 || self.num_shapes.1 < self.num_shapes.0 {
            return Err(PrError::Validation("invalid shape count range".into()));
        }
        Ok(())
    }
}

/// Andrew's monotone chain; returns the hull in counter-clockwise order.
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Star-shaped polygon: the points ordered by polar angle about their centroid.
fn star_polygon(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| {
        let aa = (a.1 - cy).atan2(a.0 - cx);
        let ab = (b.1 - cy).atan2(b.0 - cx);
        aa.partial_cmp(&ab).unwrap()
    });
    pts
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}

/// Even-odd rule with the query point at a pixel center.
fn point_in_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        if (y0 > y) != (y1 > y) {
            let xi = x0 + (y - y0) / (y1 - y0) * (x1 - x0);
            if x < xi {
                inside = !inside;
            }
        }
    }
    inside
}

fn rasterize(poly: &[(f64, f64)], frame: usize) -> Vec<bool> {
    let mut mask = vec![false; frame * frame];
    for r in 0..frame {
        for c in 0..frame {
            if point_in_polygon(poly, c as f64 + 0.5, r as f64 + 0.5) {
                mask[r * frame + c] = true;
            }
        }
    }
    mask
}

/// Keeps only the largest 4-connected component.
fn largest_component(mask: &mut [bool], frame: usize) -> usize {
    let mut label = vec![0usize; mask.len()];
    let mut sizes = vec![0usize];
    for start in 0..mask.len() {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        let id = sizes.len();
        sizes.push(0);
        let mut stack = vec![start];
        label[start] = id;
        while let Some(p) = stack.pop() {
            sizes[id] += 1;
            let (r, c) = (p / frame, p % frame);
            let mut push = |q: usize| {
                if mask[q] && label[q] == 0 {
                    label[q] = id;
                    stack.push(q);
                }
            };
            if r > 0 {
                push(p - frame);
            }
            if r + 1 < frame {
                push(p + frame);
            }
            if c > 0 {
                push(p - 1);
            }
            if c + 1 < frame {
                push(p + 1);
            }
        }
    }
    let best = (1..sizes.len()).max_by_key(|&i| sizes[i]).unwrap_or(0);
    for p in 0..mask.len() {
        mask[p] = label[p] == best && best != 0;
    }
    if best == 0 {
        0
    } else {
        sizes[best]
    }
}

fn wrap_phase(v: f64) -> f64 {
    (v + PI).rem_euclid(2.0 * PI) - PI
}

/// Unit-magnitude complex object on a random convex or concave support with
/// defect-induced phase vortices, plus its oversampled measurement at
/// `m = 2 * frame`.
pub fn simulate_crystal(p: &CrystalParams) -> Result<(ComplexImage, DiffractionPattern)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
    let offset = ((p.frame - p.region) / 2) as f64;

    let mut support = None;
    for _ in 0..MAX_RESAMPLE_ATTEMPTS {
        let count = rng.gen_range(p.num_points.0..=p.num_points.1);
        let points: Vec<(f64, f64)> = (0..count)
            .map(|_| {
                (
                    offset + rng.gen_range(0.0..p.region as f64),
                    offset + rng.gen_range(0.0..p.region as f64),
                )
            })
            .collect();
        let poly = match p.shape_kind {
            ShapeKind::Convex => convex_hull(&points),
            ShapeKind::Concave => star_polygon(&points),
        };
        if poly.len() < 3 || polygon_area(&poly) < 4.0 {
            continue;
        }
        let mut mask = rasterize(&poly, p.frame);
        if largest_component(&mut mask, p.frame) >= 4 {
            support = Some(mask);
            break;
        }
    }
    let support = support.ok_or_else(|| {
        PrError::Validation("could not sample a non-degenerate shape".into())
    })?;

    let support_pixels: Vec<usize> = (0..support.len()).filter(|&i| support[i]).collect();
    let defects: Vec<(f64, f64, f64)> = (0..p.num_defects)
        .map(|_| {
            let pix = support_pixels[rng.gen_range(0..support_pixels.len())];
            let b = rng.gen_range(p.defect_strength.0..=p.defect_strength.1);
            (
                (pix % p.frame) as f64 + 0.5,
                (pix / p.frame) as f64 + 0.5,
                b,
            )
        })
        .collect();

    let mut data = vec![Complex64::default(); p.frame * p.frame];
    for r in 0..p.frame {
        for c in 0..p.frame {
            let idx = r * p.frame + c;
            if !support[idx] {
                continue;
            }
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            let displacement: f64 = defects
                .iter()
                .map(|&(cx, cy, b)| b * (y - cy).atan2(x - cx) / (2.0 * PI))
                .sum();
            let phase = wrap_phase(MOMENTUM_TRANSFER_SCALE * displacement);
            data[idx] = Complex64::from_polar(1.0, phase);
        }
    }
    let image = ComplexImage::new(p.frame, data)?;
    let pattern = forward_intensities(&image, 2 * p.frame)?;
    Ok((image, pattern))
}

/// Real-valued image in [0,1]: randomly placed filled convex shapes, then a
/// uniform whole-content translation (no wrap), plus its measurement at
/// `m = 2 * frame`.
pub fn simulate_toy(p: &ToyParams) -> Result<(ComplexImage, DiffractionPattern)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
    let inner = p.frame - p.max_offset;

    let mut values = vec![0.0_f64; p.frame * p.frame];
    let count = rng.gen_range(p.num_shapes.0..=p.num_shapes.1);
    for _ in 0..count {
        let radius = rng.gen_range(inner as f64 / 3.0..inner as f64 / 2.2).max(1.5);
        let cx = rng.gen_range(radius..inner as f64 - radius);
        let cy = rng.gen_range(radius..inner as f64 - radius);
        let verts = rng.gen_range(4..=7);
        let points: Vec<(f64, f64)> = (0..verts)
            .map(|_| {
                let ang = rng.gen_range(0.0..2.0 * PI);
                let rad = rng.gen_range(0.75 * radius..radius);
                (cx + rad * ang.cos(), cy + rad * ang.sin())
            })
            .collect();
        let hull = convex_hull(&points);
        if hull.len() < 3 {
            continue;
        }
        let intensity = rng.gen_range(p.intensity.0..=p.intensity.1);
        for r in 0..inner {
            for c in 0..inner {
                if point_in_polygon(&hull, c as f64 + 0.5, r as f64 + 0.5) {
                    let v = &mut values[r * p.frame + c];
                    *v = v.max(intensity);
                }
            }
        }
    }

    // translation freedom: shift the whole content inside the frame
    let dr = rng.gen_range(0..=p.max_offset);
    let dc = rng.gen_range(0..=p.max_offset);
    let mut shifted = vec![0.0_f64; p.frame * p.frame];
    for r in 0..inner {
        for c in 0..inner {
            shifted[(r + dr) * p.frame + (c + dc)] = values[r * p.frame + c];
        }
    }

    let image = ComplexImage::new(
        p.frame,
        shifted.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    )?;
    let pattern = forward_intensities(&image, 2 * p.frame)?;
    Ok((image, pattern))
}

/// Optional Poisson corruption of a measurement: each entry is replaced by a
/// Poisson draw with mean `y * photons_per_unit`, rescaled back. Off by
/// default in every pipeline.
pub fn apply_poisson_noise(
    y: &DiffractionPattern,
    photons_per_unit: f64,
    rng_seed: u64,
) -> Result<DiffractionPattern> {
    if !(photons_per_unit > 0.0) {
        return Err(PrError::Validation("photons_per_unit must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let data = y
        .data()
        .iter()
        .map(|&v| {
            let lambda = v * photons_per_unit;
            if lambda == 0.0 {
                0.0
            } else {
                Poisson::new(lambda).expect("positive lambda").sample(&mut rng)
                    / photons_per_unit
            }
        })
        .collect();
    DiffractionPattern::new(y.side(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::loss;

    fn small_crystal(seed: u64, kind: ShapeKind) -> CrystalParams {
        CrystalParams {
            frame: 32,
            region: 28,
            shape_kind: kind,
            rng_seed: seed,
            ..CrystalParams::default()
        }
    }

    #[test]
    fn crystal_moduli_are_exactly_one_on_support() {
        let (img, _) = simulate_crystal(&small_crystal(1, ShapeKind::Convex)).unwrap();
        let mut nonzero = 0;
        for v in img.data() {
            let m = v.norm();
            assert!(m == 0.0 || (m - 1.0).abs() <= 1e-15);
            if m > 0.0 {
                nonzero += 1;
            }
        }
        assert!(nonzero >= 4);
    }

    #[test]
    fn crystal_support_stays_in_centered_region() {
        let p = CrystalParams {
            rng_seed: 3,
            ..CrystalParams::default()
        };
        let (img, _) = simulate_crystal(&p).unwrap();
        let lo = (p.frame - p.region) / 2;
        let hi = lo + p.region;
        for r in 0..p.frame {
            for c in 0..p.frame {
                if img.at(r, c).norm() > 0.0 {
                    assert!(r >= lo && r < hi && c >= lo && c < hi);
                }
            }
        }
    }

    #[test]
    fn no_defects_means_zero_phase() {
        let p = CrystalParams {
            num_defects: 0,
            ..small_crystal(5, ShapeKind::Convex)
        };
        let (img, _) = simulate_crystal(&p).unwrap();
        for v in img.data() {
            assert!(v.im == 0.0 && v.re >= 0.0);
        }
    }

    #[test]
    fn crystal_phases_are_wrapped() {
        let p = CrystalParams {
            num_defects: 4,
            defect_strength: (1.0, 3.0),
            ..small_crystal(7, ShapeKind::Concave)
        };
        let (img, _) = simulate_crystal(&p).unwrap();
        for v in img.data() {
            if v.norm() > 0.0 {
                let ph = v.arg();
                assert!((-PI..PI).contains(&ph));
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let p = small_crystal(11, ShapeKind::Concave);
        let (a, ya) = simulate_crystal(&p).unwrap();
        let (b, yb) = simulate_crystal(&p).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(ya.data(), yb.data());

        let tp = ToyParams {
            rng_seed: 11,
            ..ToyParams::default()
        };
        let (ta, tya) = simulate_toy(&tp).unwrap();
        let (tb, tyb) = simulate_toy(&tp).unwrap();
        assert_eq!(ta.data(), tb.data());
        assert_eq!(tya.data(), tyb.data());
    }

    #[test]
    fn emitted_patterns_are_self_consistent() {
        let (img, y) = simulate_crystal(&small_crystal(13, ShapeKind::Convex)).unwrap();
        assert!(loss(&y, &img).unwrap() <= 1e-12 * y.norm_sq().max(1.0));
        let (timg, ty) = simulate_toy(&ToyParams {
            rng_seed: 13,
            ..ToyParams::default()
        })
        .unwrap();
        assert!(loss(&ty, &timg).unwrap() <= 1e-12 * ty.norm_sq().max(1.0));
    }

    #[test]
    fn toy_values_are_real_in_unit_interval() {
        let (img, _) = simulate_toy(&ToyParams {
            rng_seed: 17,
            ..ToyParams::default()
        })
        .unwrap();
        let mut nonzero = 0;
        for v in img.data() {
            assert_eq!(v.im, 0.0);
            assert!((0.0..=1.0).contains(&v.re));
            if v.re > 0.0 {
                nonzero += 1;
            }
        }
        assert!(nonzero > 0);
    }

    #[test]
    fn translation_does_not_change_the_measurement() {
        // retranslating the emitted content inside the frame must leave the
        // measurement unchanged (up to FFT rounding)
        let base = ToyParams {
            rng_seed: 19,
            ..ToyParams::default()
        };
        let (img, y) = simulate_toy(&base).unwrap();
        let f = base.frame;
        // the content fits in an (f - max_offset) box, so a shift to the
        // top-left corner never wraps
        let mut rmin = f;
        let mut cmin = f;
        for r in 0..f {
            for c in 0..f {
                if img.at(r, c).norm() > 0.0 {
                    rmin = rmin.min(r);
                    cmin = cmin.min(c);
                }
            }
        }
        let mut back = vec![Complex64::default(); f * f];
        for r in rmin..f {
            for c in cmin..f {
                back[(r - rmin) * f + (c - cmin)] = img.at(r, c);
            }
        }
        let shifted = ComplexImage::new(f, back).unwrap();
        let y2 = forward_intensities(&shifted, 2 * f).unwrap();
        let scale = y.data().iter().cloned().fold(0.0, f64::max);
        for (a, b) in y2.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn supports_are_single_4connected_components() {
        for seed in 0..6u64 {
            for kind in [ShapeKind::Convex, ShapeKind::Concave] {
                let (img, _) = simulate_crystal(&small_crystal(seed, kind)).unwrap();
                let f = img.side();
                let mut mask: Vec<bool> = img.data().iter().map(|v| v.norm() > 0.0).collect();
                let total = mask.iter().filter(|&&b| b).count();
                let largest = largest_component(&mut mask, f);
                assert_eq!(total, largest, "seed {seed} kind {kind:?}");
            }
        }
    }

    #[test]
    fn poisson_noise_preserves_scale_roughly() {
        let (_, y) = simulate_toy(&ToyParams {
            rng_seed: 23,
            ..ToyParams::default()
        })
        .unwrap();
        let noisy = apply_poisson_noise(&y, 10.0, 1).unwrap();
        let s0: f64 = y.data().iter().sum();
        let s1: f64 = noisy.data().iter().sum();
        assert!((s1 - s0).abs() < 0.05 * s0);
    }
}
