//! Plain hybrid input-output baseline.
//!
//! Alternates the Fourier-modulus projection with Fienup's feedback update
//! on constraint-violating pixels. The support cue comes from the
//! autocorrelation unless an exact mask is supplied; no shrinkwrap-style
//! support refinement is performed.

use crate::error::TraceEntry;
use crate::fft::Fft2d;
use crate::field::{autocorrelation_support, ComplexImage, DiffractionPattern, SupportMask};
use crate::optimize::RecoveryResult;
use crate::{PrError, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HioConfig {
    /// Feedback parameter, in (0, 1].
    pub beta: f64,
    pub iterations: usize,
    /// Autocorrelation support threshold, in (0, 1).
    pub tau: f64,
    pub support: bool,
    pub real: bool,
    pub nonneg: bool,
    pub rng_seed: u64,
}

impl Default for HioConfig {
    fn default() -> Self {
        Self {
            beta: 0.9,
            iterations: 2000,
            tau: 0.04,
            support: true,
            real: false,
            nonneg: false,
            rng_seed: 0,
        }
    }
}

impl HioConfig {
    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(PrError::Validation("beta must lie in (0,1]".into()));
        }
        if self.support && !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(PrError::Validation("tau must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Replaces every spectral entry by `sqrt(y) * z/|z|`; zero-modulus entries
/// get phase 0 (the documented tie-break), i.e. the value `sqrt(y)`.
pub fn magnitude_project(
    z_spec: &ComplexImage,
    y: &DiffractionPattern,
) -> Result<ComplexImage> {
    if z_spec.side() != y.side() {
        return Err(PrError::Dimension("spectrum/pattern size mismatch".into()));
    }
    let data = z_spec
        .data()
        .iter()
        .zip(y.data())
        .map(|(z, &yv)| {
            let target = yv.sqrt();
            let mag = z.norm();
            if mag == 0.0 {
                Complex64::new(target, 0.0)
            } else {
                z * (target / mag)
            }
        })
        .collect();
    ComplexImage::new(y.side(), data)
}

/// One HIO update on the full padded frame.
///
/// `x' = F^{-1}(P_y(F x))`; pixels violating the active constraints get the
/// feedback `x - beta x'`, all others take `x'` (with the imaginary part
/// zeroed when the realness flag is set).
pub fn hio_step(
    x_in: &ComplexImage,
    y: &DiffractionPattern,
    mask: &SupportMask,
    cfg: &HioConfig,
) -> Result<ComplexImage> {
    Ok(hio_step_full(x_in, y, mask, cfg)?.0)
}

/// As [`hio_step`], but also returns the magnitude-consistent estimate `x'`
/// (the image HIO actually recovers; the iterate itself is the feedback
/// accumulator and does not converge to the object).
fn hio_step_full(
    x_in: &ComplexImage,
    y: &DiffractionPattern,
    mask: &SupportMask,
    cfg: &HioConfig,
) -> Result<(ComplexImage, ComplexImage)> {
    cfg.validate()?;
    let m = y.side();
    if x_in.side() != m || mask.side() != m {
        return Err(PrError::Dimension("HIO buffers must all be m x m".into()));
    }
    let fft = Fft2d::new(m);
    let mut spec = x_in.data().to_vec();
    fft.forward2d(&mut spec);
    let projected = magnitude_project(&ComplexImage::new(m, spec)?, y)?;
    let mut x_new = projected.data().to_vec();
    fft.inverse2d(&mut x_new);

    let out = x_new
        .iter()
        .enumerate()
        .map(|(p, &xp)| {
            let violates = (cfg.support && !mask.data()[p])
                || (cfg.nonneg && xp.re < 0.0);
            if violates {
                x_in.data()[p] - cfg.beta * xp
            } else if cfg.real {
                Complex64::new(xp.re, 0.0)
            } else {
                xp
            }
        })
        .collect();
    Ok((ComplexImage::new(m, out)?, ComplexImage::new(m, x_new)?))
}

/// Offset of the n x n cyclic window capturing the most `|x|^2` energy.
fn max_energy_window(x: &ComplexImage, n: usize) -> (usize, usize) {
    let m = x.side();
    // cyclic sliding-window sums via a prefix table on the doubled grid
    let d = 2 * m;
    let mut pref = vec![0.0; (d + 1) * (d + 1)];
    for r in 0..d {
        for c in 0..d {
            let e = x.at(r % m, c % m).norm_sqr();
            pref[(r + 1) * (d + 1) + c + 1] =
                e + pref[r * (d + 1) + c + 1] + pref[(r + 1) * (d + 1) + c]
                    - pref[r * (d + 1) + c];
        }
    }
    let window = |r0: usize, c0: usize| {
        pref[(r0 + n) * (d + 1) + c0 + n] - pref[r0 * (d + 1) + c0 + n]
            - pref[(r0 + n) * (d + 1) + c0]
            + pref[r0 * (d + 1) + c0]
    };
    let mut best = (0usize, 0usize);
    let mut best_e = f64::NEG_INFINITY;
    for r0 in 0..m {
        for c0 in 0..m {
            let e = window(r0, c0);
            if e > best_e {
                best_e = e;
                best = (r0, c0);
            }
        }
    }
    best
}

fn crop_cyclic(x: &ComplexImage, n: usize, r0: usize, c0: usize) -> ComplexImage {
    let m = x.side();
    let data = (0..n * n)
        .map(|p| x.at((r0 + p / n) % m, (c0 + p % n) % m))
        .collect();
    ComplexImage::new(n, data).expect("finite crop")
}

/// Full HIO solve with autocorrelation support estimation.
pub fn solve_hio(y: &DiffractionPattern, n: usize, cfg: &HioConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    let mask = if cfg.support {
        autocorrelation_support(y, cfg.tau)?
    } else {
        SupportMask::full(y.side())
    };
    solve_hio_with_mask(y, n, cfg, &mask)
}

/// HIO solve against a caller-supplied support mask (e.g. the exact one).
pub fn solve_hio_with_mask(
    y: &DiffractionPattern,
    n: usize,
    cfg: &HioConfig,
    mask: &SupportMask,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    let m = y.side();
    if m < 2 * n - 1 {
        return Err(PrError::Dimension("oversampling condition violated".into()));
    }
    if mask.side() != m {
        return Err(PrError::Dimension("mask side mismatch".into()));
    }
    let start = Instant::now();
    let fft = Fft2d::new(m);

    // x0 = F^{-1}( sqrt(y) .* e^{i phi} ) with i.i.d. uniform random phases
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut spec: Vec<Complex64> = y
        .data()
        .iter()
        .map(|&yv| Complex64::from_polar(yv.sqrt(), rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)))
        .collect();
    fft.inverse2d(&mut spec);
    let mut x = ComplexImage::new(m, spec)?;

    let y_norm = y.norm_sq().sqrt();
    if y_norm == 0.0 {
        return Err(PrError::Validation("zero measurement".into()));
    }
    let residual_of = |img: &ComplexImage| -> Result<f64> {
        let mut s = img.data().to_vec();
        Fft2d::new(m).forward2d(&mut s);
        let r: f64 = s
            .iter()
            .zip(y.data())
            .map(|(v, &yv)| {
                let d = v.norm_sqr() - yv;
                d * d
            })
            .sum();
        Ok(r.sqrt() / y_norm)
    };

    let mut trace = vec![TraceEntry {
        iter: 0,
        loss: residual_of(&x)?,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }];
    // the running estimate is x' (magnitude-consistent), not the iterate
    let mut estimate = x.clone();
    for it in 1..=cfg.iterations {
        let (next, x_prime) = hio_step_full(&x, y, mask, cfg)?;
        x = next;
        estimate = x_prime;
        if !x.data().iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(PrError::Diverged { iter: it, trace });
        }
        trace.push(TraceEntry {
            iter: it,
            loss: residual_of(&estimate)?,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    let (r0, c0) = max_energy_window(&estimate, n);
    let image = crop_cyclic(&estimate, n, r0, c0);
    let residual = trace.last().unwrap().loss;
    Ok(RecoveryResult {
        image,
        trace,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        fourier_residual: residual,
        solver: "hio".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::forward_intensities;
    use crate::metrics::best_symmetry_alignment;
    use rand::Rng;

    fn random_image(n: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexImage::new(n, data).unwrap()
    }

    #[test]
    fn projection_is_idempotent_on_the_constraint_set() {
        let m = 6;
        let x = random_image(m, 1);
        let y = DiffractionPattern::new(
            m,
            x.data().iter().map(|v| v.norm_sqr()).collect(),
        )
        .unwrap();
        let out = magnitude_project(&x, &y).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn zero_entry_takes_phase_zero() {
        let mut x = ComplexImage::zeros(2);
        x.data_mut()[3] = Complex64::new(0.0, 2.0);
        let y = DiffractionPattern::new(2, vec![4.0, 1.0, 9.0, 16.0]).unwrap();
        let out = magnitude_project(&x, &y).unwrap();
        assert_eq!(out.data()[0], Complex64::new(2.0, 0.0));
        assert_eq!(out.data()[1], Complex64::new(1.0, 0.0));
        assert_eq!(out.data()[2], Complex64::new(3.0, 0.0));
        assert!((out.data()[3] - Complex64::new(0.0, 4.0)).norm() <= 1e-12);
    }

    #[test]
    fn projection_preserves_phases_and_sets_moduli() {
        let m = 5;
        let z = random_image(m, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = DiffractionPattern::new(
            m,
            (0..m * m).map(|_| rng.gen_range(0.0..4.0)).collect(),
        )
        .unwrap();
        let out = magnitude_project(&z, &y).unwrap();
        for ((o, z), &yv) in out.data().iter().zip(z.data()).zip(y.data()) {
            assert!((o.norm() - yv.sqrt()).abs() <= 1e-12);
            if z.norm() > 0.0 {
                assert!((o.arg() - z.arg()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn consistent_iterate_is_a_fixed_point() {
        // a real nonnegative object on its own support
        let m = 8;
        let n = 3;
        let mut obj = ComplexImage::zeros(n);
        obj.data_mut()[0] = Complex64::new(1.0, 0.0);
        obj.data_mut()[4] = Complex64::new(0.5, 0.0);
        let y = forward_intensities(&obj, m).unwrap();
        let padded = ComplexImage::new(m, obj.pad_to(m).unwrap()).unwrap();
        let mask = SupportMask::new(
            m,
            padded.data().iter().map(|v| v.norm() > 0.0).collect(),
        )
        .unwrap();
        let cfg = HioConfig {
            real: true,
            nonneg: true,
            ..HioConfig::default()
        };
        let out = hio_step(&padded, &y, &mask, &cfg).unwrap();
        for (a, b) in out.data().iter().zip(padded.data()) {
            assert!((a - b).norm() <= 1e-10);
        }
    }

    #[test]
    fn beta_zero_keeps_outside_pixels() {
        let m = 6;
        let x = random_image(m, 5);
        let y = forward_intensities(&random_image(2, 6), m).unwrap();
        let mask = SupportMask::new(m, (0..m * m).map(|p| p < 10).collect()).unwrap();
        // beta=0 is outside the validated range; exercise the formula directly
        let cfg = HioConfig {
            beta: 1e-300,
            ..HioConfig::default()
        };
        let out = hio_step(&x, &y, &mask, &cfg).unwrap();
        for p in 10..m * m {
            assert!((out.data()[p] - x.data()[p]).norm() <= 1e-280);
        }
    }

    #[test]
    fn step_matches_scripted_transcript() {
        // independent recomputation of one update on a 4x4 instance
        let m = 4;
        let x = random_image(m, 7);
        let y = forward_intensities(&random_image(2, 8), m).unwrap();
        let mask = SupportMask::new(m, (0..16).map(|p| p % 3 != 0).collect()).unwrap();
        let cfg = HioConfig {
            beta: 0.7,
            nonneg: true,
            ..HioConfig::default()
        };
        let out = hio_step(&x, &y, &mask, &cfg).unwrap();

        // transcript: DFT -> modulus replacement -> inverse -> feedback
        let fft = Fft2d::new(m);
        let mut spec = x.data().to_vec();
        fft.forward2d(&mut spec);
        for (s, &yv) in spec.iter_mut().zip(y.data()) {
            let t = yv.sqrt();
            *s = if s.norm() == 0.0 {
                Complex64::new(t, 0.0)
            } else {
                *s * (t / s.norm())
            };
        }
        fft.inverse2d(&mut spec);
        for p in 0..16 {
            let xp = spec[p];
            let expect = if !mask.data()[p] || xp.re < 0.0 {
                x.data()[p] - 0.7 * xp
            } else {
                xp
            };
            assert!((out.data()[p] - expect).norm() <= 1e-12);
        }
    }

    #[test]
    fn beta_one_full_mask_no_flags_passes_through() {
        let m = 6;
        let x = random_image(m, 9);
        let y = forward_intensities(&random_image(2, 10), m).unwrap();
        let cfg = HioConfig {
            beta: 1.0,
            support: false,
            ..HioConfig::default()
        };
        let out = hio_step(&x, &y, &SupportMask::full(m), &cfg).unwrap();
        // with nothing violating, the output is exactly x'
        let proj = {
            let fft = Fft2d::new(m);
            let mut spec = x.data().to_vec();
            fft.forward2d(&mut spec);
            let p = magnitude_project(&ComplexImage::new(m, spec).unwrap(), &y).unwrap();
            let mut inv = p.data().to_vec();
            fft.inverse2d(&mut inv);
            inv
        };
        for (a, b) in out.data().iter().zip(&proj) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let y = forward_intensities(&random_image(3, 11), 8).unwrap();
        let cfg = HioConfig {
            iterations: 0,
            ..HioConfig::default()
        };
        let res = solve_hio(&y, 3, &cfg).unwrap();
        assert_eq!(res.trace.len(), 1);
        assert!(res.fourier_residual.is_finite());
        let res2 = solve_hio(&y, 3, &cfg).unwrap();
        assert_eq!(res.image.data(), res2.image.data());
    }

    #[test]
    fn recovers_real_positive_object_with_exact_support() {
        // small version of the classical positivity success case
        let n = 8;
        let m = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut obj = ComplexImage::zeros(n);
        for r in 1..5 {
            for c in 2..7 {
                obj.data_mut()[r * n + c] = Complex64::new(rng.gen_range(0.2..1.0), 0.0);
            }
        }
        let y = forward_intensities(&obj, m).unwrap();
        let padded = obj.pad_to(m).unwrap();
        let mask =
            SupportMask::new(m, padded.iter().map(|v| v.norm() > 0.0).collect()).unwrap();
        let cfg = HioConfig {
            iterations: 600,
            real: true,
            nonneg: true,
            rng_seed: 4,
            ..HioConfig::default()
        };
        let res = solve_hio_with_mask(&y, n, &cfg, &mask).unwrap();
        let a = best_symmetry_alignment(&obj, &res.image, m).unwrap();
        assert!(a.rel_error < 0.05, "rel_error = {}", a.rel_error);
    }

    #[test]
    fn max_energy_window_finds_wrapped_content() {
        let m = 8;
        let mut x = ComplexImage::zeros(m);
        // 3x3 blob wrapped around the frame corner
        for dr in 0..3usize {
            for dc in 0..3usize {
                let r = (7 + dr) % m;
                let c = (6 + dc) % m;
                x.data_mut()[r * m + c] = Complex64::new(1.0, 0.0);
            }
        }
        assert_eq!(max_energy_window(&x, 3), (7, 6));
    }
}
