use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniformly sampled complex envelope. Times in ns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<C64>,
}

impl Waveform {
    pub fn new(t0: f64, dt: f64, samples: Vec<C64>) -> Result<Self> {
        let w = Waveform { t0, dt, samples };
        w.validate()?;
        Ok(w)
    }

    pub fn from_fn<F: Fn(f64) -> C64>(t0: f64, dt: f64, n: usize, f: F) -> Result<Self> {
        let samples = (0..n).map(|k| f(t0 + k as f64 * dt)).collect();
        Self::new(t0, dt, samples)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid(format!("waveform dt must be positive, got {}", self.dt)));
        }
        if !self.t0.is_finite() {
            return Err(invalid("waveform t0 must be finite"));
        }
        if let Some(k) = self.samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(invalid(format!("waveform sample {k} is not finite")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Time of the last sample.
    pub fn t_end(&self) -> f64 {
        self.time(self.samples.len().saturating_sub(1))
    }

    /// Linear interpolation of the samples padded with one zero on each
    /// side, so the envelope stays continuous at a hard edge.
    pub fn value_at(&self, t: f64) -> C64 {
        let n = self.samples.len() as isize;
        let x = (t - self.t0) / self.dt;
        if !(x > -1.0 && x < n as f64) {
            return C64::new(0.0, 0.0);
        }
        let k = x.floor() as isize;
        let frac = x - k as f64;
        let at = |i: isize| {
            if (0..n).contains(&i) {
                self.samples[i as usize]
            } else {
                C64::new(0.0, 0.0)
            }
        };
        at(k) * (1.0 - frac) + at(k + 1) * frac
    }

    /// `int |s|^2 dt` by the trapezoid rule.
    pub fn energy(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.samples.iter().map(|s| s.norm_sqr()).sum();
        (inner - 0.5 * (self.samples[0].norm_sqr() + self.samples[n - 1].norm_sqr())) * self.dt
    }

    pub fn scaled(&self, factor: f64) -> Waveform {
        Waveform {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples.iter().map(|s| s * factor).collect(),
        }
    }

    /// Rescaled to unit energy.
    pub fn normalized(&self) -> Result<Waveform> {
        let e = self.energy();
        if !(e > 0.0) {
            return Err(invalid("waveform has zero energy"));
        }
        Ok(self.scaled(1.0 / e.sqrt()))
    }

    /// Resampled on a new uniform grid by linear interpolation.
    pub fn resampled(&self, t0: f64, dt: f64, n: usize) -> Result<Waveform> {
        Waveform::from_fn(t0, dt, n, |t| self.value_at(t))
    }

    /// Time of maximum `|s|^2`, refined by a parabola through the three
    /// samples around the peak.
    pub fn peak_time(&self) -> Option<f64> {
        let (k, _) = self
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))?;
        if k == 0 || k + 1 == self.samples.len() {
            return Some(self.time(k));
        }
        let (y0, y1, y2) = (
            self.samples[k - 1].norm_sqr(),
            self.samples[k].norm_sqr(),
            self.samples[k + 1].norm_sqr(),
        );
        let denom = y0 - 2.0 * y1 + y2;
        let shift = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
        Some(self.time(k) + shift * self.dt)
    }
}

/// Amplitude half-width, from the peak, at which a Gaussian of intensity
/// FWHM `fwhm` has fallen to `fraction` of its peak amplitude.
fn gaussian_offset(fwhm: f64, fraction: f64) -> f64 {
    fwhm * ((1.0 / fraction).ln() / (2.0 * std::f64::consts::LN_2)).sqrt()
}

/// Gaussian amplitude envelope with intensity FWHM `fwhm`, peak at `center`.
pub fn gaussian_envelope(t: f64, center: f64, fwhm: f64) -> f64 {
    let x = (t - center) / fwhm;
    (-2.0 * std::f64::consts::LN_2 * x * x).exp()
}

/// Peak time of [`truncated_gaussian`]: late enough that the trailing cut
/// lands on the window end, but never before the window centre.
pub fn truncated_gaussian_peak(fwhm: f64, truncation_fraction: f64, total_duration: f64) -> f64 {
    let half = 0.5 * total_duration;
    if truncation_fraction <= 0.0 {
        return half;
    }
    (total_duration - gaussian_offset(fwhm, truncation_fraction)).max(half)
}

/// Gaussian probe on the window `[0, total_duration]` whose trailing edge is
/// cut to zero once the amplitude has fallen to `truncation_fraction` of the
/// peak.
///
/// The peak sits at [`truncated_gaussian_peak`], so the cut coincides with
/// the end of the window unless that would push the peak into the first
/// half. `truncation_fraction = 1` gives the rising half Gaussian; `0` keeps
/// the whole Gaussian centred in the window.
pub fn truncated_gaussian(
    fwhm: f64,
    truncation_fraction: f64,
    total_duration: f64,
    dt: f64,
) -> Result<Waveform> {
    if !(total_duration > 0.0) || !total_duration.is_finite() {
        return Err(invalid("total_duration must be positive"));
    }
    if !(fwhm > 0.0) || !fwhm.is_finite() {
        return Err(invalid("fwhm must be positive"));
    }
    if !(0.0..=1.0).contains(&truncation_fraction) {
        return Err(invalid("truncation_fraction must lie in [0, 1]"));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    let peak = truncated_gaussian_peak(fwhm, truncation_fraction, total_duration);
    let cut = if truncation_fraction > 0.0 {
        peak + gaussian_offset(fwhm, truncation_fraction)
    } else {
        f64::INFINITY
    };
    let n = (total_duration / dt).round() as usize + 1;
    Waveform::from_fn(0.0, dt, n, |t| {
        // small slack so a cut landing on the last sample keeps it
        if t <= cut + 1e-9 * dt {
            C64::new(gaussian_envelope(t, peak, fwhm), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Untruncated Gaussian of intensity FWHM `fwhm` peaked at `peak_time`,
/// sampled out to three FWHM on either side.
pub fn full_gaussian(fwhm: f64, peak_time: f64, dt: f64) -> Result<Waveform> {
    if !(fwhm > 0.0) || !(dt > 0.0) {
        return Err(invalid("fwhm and dt must be positive"));
    }
    let half = (3.0 * fwhm / dt).ceil() as usize;
    let t0 = peak_time - half as f64 * dt;
    Waveform::from_fn(t0, dt, 2 * half + 1, |t| C64::new(gaussian_envelope(t, peak_time, fwhm), 0.0))
}
