//! Oversampled Fourier forward model, measurement misfit and its gradient,
//! and autocorrelation-based support estimation.

use crate::fft::Fft2d;
use crate::{PrError, Result};
use num_complex::Complex64;

/// Square complex-valued object `X` (row-major, `side x side`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    side: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(side: usize, data: Vec<Complex64>) -> Result<Self> {
        if side == 0 {
            return Err(PrError::Validation("image side must be positive".into()));
        }
        if data.len() != side * side {
            return Err(PrError::Dimension(format!(
                "expected {} entries for a {side}x{side} image, got {}",
                side * side,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(PrError::Validation("image contains non-finite entries".into()));
        }
        Ok(Self { side, data })
    }

    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            data: vec![Complex64::default(); side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.side + c]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Embeds the image in the top-left corner of an `m x m` zero frame.
    pub fn pad_to(&self, m: usize) -> Result<Vec<Complex64>> {
        if m < self.side {
            return Err(PrError::Dimension(format!(
                "cannot pad a {}x{} image into an {m}x{m} frame",
                self.side, self.side
            )));
        }
        let mut out = vec![Complex64::default(); m * m];
        for r in 0..self.side {
            out[r * m..r * m + self.side]
                .copy_from_slice(&self.data[r * self.side..(r + 1) * self.side]);
        }
        Ok(out)
    }
}

/// Measured intensity `Y = |F(X)|^2` on an `m x m` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffractionPattern {
    side: usize,
    data: Vec<f64>,
}

impl DiffractionPattern {
    pub fn new(side: usize, data: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(PrError::Validation("pattern side must be positive".into()));
        }
        if data.len() != side * side {
            return Err(PrError::Dimension(format!(
                "expected {} entries for a {side}x{side} pattern, got {}",
                side * side,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(PrError::Validation(
                "pattern entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Boolean support mask on the padded `m x m` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMask {
    side: usize,
    data: Vec<bool>,
}

impl SupportMask {
    pub fn new(side: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != side * side {
            return Err(PrError::Dimension("mask size mismatch".into()));
        }
        Ok(Self { side, data })
    }

    pub fn full(side: usize) -> Self {
        Self {
            side,
            data: vec![true; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

fn check_oversampling(n: usize, m: usize) -> Result<()> {
    if m < 2 * n - 1 {
        return Err(PrError::Dimension(format!(
            "measurement side {m} violates the oversampling condition m >= 2n-1 for n={n}"
        )));
    }
    Ok(())
}

/// `Y = |F(X_pad)|^2` with the unnormalized forward DFT on the `m x m` frame.
pub fn forward_intensities(x: &ComplexImage, m: usize) -> Result<DiffractionPattern> {
    check_oversampling(x.side(), m)?;
    let mut buf = x.pad_to(m)?;
    Fft2d::new(m).forward2d(&mut buf);
    let data: Vec<f64> = buf.iter().map(|v| v.norm_sqr()).collect();
    DiffractionPattern::new(m, data)
}

/// Squared Frobenius misfit `||Y - |F(X_pad)|^2||_F^2`.
pub fn loss(y: &DiffractionPattern, x: &ComplexImage) -> Result<f64> {
    let fwd = forward_intensities(x, y.side())?;
    Ok(y.data()
        .iter()
        .zip(fwd.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Gradient of [`loss`] with respect to the `2n^2` real parameters of `x`,
/// packaged as a complex image `g` with `Re g = dL/dRe x`, `Im g = dL/dIm x`.
///
/// Closed form: `g = 4 * crop( F^H( (|F x_pad|^2 - y) .* F x_pad ) )` where
/// `F^H` is the unnormalized adjoint DFT.
pub fn loss_gradient(y: &DiffractionPattern, x: &ComplexImage) -> Result<ComplexImage> {
    let n = x.side();
    let m = y.side();
    check_oversampling(n, m)?;
    let fft = Fft2d::new(m);
    let mut spec = x.pad_to(m)?;
    fft.forward2d(&mut spec);
    for (s, &yv) in spec.iter_mut().zip(y.data()) {
        let resid = s.norm_sqr() - yv;
        *s *= resid;
    }
    fft.adjoint2d(&mut spec);
    let mut g = vec![Complex64::default(); n * n];
    for r in 0..n {
        for c in 0..n {
            g[r * n + c] = 4.0 * spec[r * m + c];
        }
    }
    ComplexImage::new(n, g)
}

/// [`loss`] and [`loss_gradient`] from a single spectrum evaluation; used by
/// the iterative solvers.
pub fn loss_and_gradient(
    y: &DiffractionPattern,
    x: &ComplexImage,
) -> Result<(f64, ComplexImage)> {
    let n = x.side();
    let m = y.side();
    check_oversampling(n, m)?;
    let fft = Fft2d::new(m);
    let mut spec = x.pad_to(m)?;
    fft.forward2d(&mut spec);
    let mut loss = 0.0;
    for (s, &yv) in spec.iter_mut().zip(y.data()) {
        let resid = s.norm_sqr() - yv;
        loss += resid * resid;
        *s *= resid;
    }
    fft.adjoint2d(&mut spec);
    let mut g = vec![Complex64::default(); n * n];
    for r in 0..n {
        for c in 0..n {
            g[r * n + c] = 4.0 * spec[r * m + c];
        }
    }
    Ok((loss, ComplexImage::new(n, g)?))
}

/// Thresholded modulus of the autocorrelation `F^{-1}(Y)`; a crude support cue.
///
/// The `(0,0)` pixel (zero-lag peak) is always included.
pub fn autocorrelation_support(y: &DiffractionPattern, tau: f64) -> Result<SupportMask> {
    if !(0.0 < tau && tau < 1.0) {
        return Err(PrError::Validation(format!("tau must lie in (0,1), got {tau}")));
    }
    if y.data().iter().all(|&v| v == 0.0) {
        return Err(PrError::Validation("all-zero pattern has no support cue".into()));
    }
    let m = y.side();
    let mut buf: Vec<Complex64> = y.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft2d::new(m).inverse2d(&mut buf);
    let mods: Vec<f64> = buf.iter().map(|v| v.norm()).collect();
    let peak = mods.iter().cloned().fold(0.0_f64, f64::max);
    let mut data: Vec<bool> = mods.iter().map(|&v| v > tau * peak).collect();
    data[0] = true;
    SupportMask::new(m, data)
}
