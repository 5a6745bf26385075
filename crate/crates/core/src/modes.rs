//! Laguerre-Gaussian (`p = 0`) mode geometry and its overlap with the
//! transverse column-density profile of the atomic cloud.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Rb D1 excited-state decay rate, `2 pi x 5.75 MHz`.
pub const RB_D1_GAMMA: f64 = 2.0 * PI * 5.75e6;

/// Vortex mode `LG_{p=0}^{l}` with Gaussian waist `w0`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LGMode {
    /// OAM winding number.
    pub l: i32,
    /// Gaussian waist, um.
    pub w0: f64,
}

impl LGMode {
    pub fn new(l: i32, w0: f64) -> Result<Self> {
        let m = LGMode { l, w0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 0 {
            return Err(invalid(format!("negative OAM order l = {}", self.l)));
        }
        if !(self.w0 > 0.0) || !self.w0.is_finite() {
            return Err(invalid(format!("beam waist must be positive, got {}", self.w0)));
        }
        Ok(())
    }

    /// Radial index; only `p = 0` modes are modelled.
    pub fn p(&self) -> u32 {
        0
    }

    pub fn waist(&self) -> f64 {
        ((self.l as f64) + 1.0).sqrt() * self.w0
    }
}

/// Atomic ensemble seen by the probe.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Peak (on-axis) optical depth on the probe transition.
    pub peak_od: f64,
    /// Transverse 1/e^2 radius of the Gaussian column density, um.
    pub sigma_t: f64,
    /// Medium length, mm.
    pub length: f64,
    /// Excited-state decay rate, rad/s.
    pub gamma_e: f64,
    /// Ground-state decoherence rate, rad/s.
    pub gamma_12: f64,
}

/// `sigma_t` and `gamma_12` are the values found by the calibration fit
/// (SE 0.65 at l = 1, 0.26 at l = 5, w0 = 100 um), rounded.
impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            peak_od: 220.0,
            sigma_t: 123.5,
            length: 20.0,
            gamma_e: RB_D1_GAMMA,
            gamma_12: 1.92e-3 * RB_D1_GAMMA,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| Err(invalid(format!("ensemble: {what}")));
        if !(self.peak_od >= 0.0) || !self.peak_od.is_finite() {
            return fail("peak_od must be finite and >= 0");
        }
        if !(self.sigma_t > 0.0) {
            return fail("sigma_t must be > 0");
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return fail("length must be > 0");
        }
        if !(self.gamma_e > 0.0) || !self.gamma_e.is_finite() {
            return fail("gamma_e must be > 0");
        }
        if !(self.gamma_12 >= 0.0 && self.gamma_12 < self.gamma_e) {
            return fail("gamma_12 must satisfy 0 <= gamma_12 < gamma_e");
        }
        Ok(())
    }
}

/// `sqrt(l + 1) * w0`.
pub fn mode_waist(l: i32, w0: f64) -> Result<f64> {
    Ok(LGMode::new(l, w0)?.waist())
}

/// Radial intensity `r^{2l} exp(-2 r^2 / w0^2)`, normalized to
/// `int I(r) 2 pi r dr = 1` (units 1/um^2).
pub fn lg_intensity(mode: &LGMode, r: f64) -> f64 {
    let l = mode.l.max(0) as f64;
    let w2 = mode.w0 * mode.w0;
    let u = r * r;
    if u == 0.0 {
        return if mode.l == 0 { 2.0 / (PI * w2) } else { 0.0 };
    }
    // log of 2^{l+1} / (pi l! w0^{2l+2}) * u^l exp(-2u/w0^2)
    let log_norm = (l + 1.0) * (2.0f64.ln() - w2.ln()) - PI.ln() - ln_factorial(mode.l.max(0) as u32);
    (log_norm + l * u.ln() - 2.0 * u / w2).exp()
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Relative tolerance of the radial quadrature.
pub const QUAD_RTOL: f64 = 1e-8;
const QUAD_MAX_DEPTH: u32 = 48;

/// Integrates `f(r) 2 pi r` over `[0, 8 max(mode waist, sigma_t)]`.
///
/// The domain is cut into geometrically growing panels starting at the
/// smaller length scale, so very wide clouds do not hide the beam.
pub(crate) fn radial_integral<F: Fn(f64) -> f64>(
    f: F,
    inner_scale: f64,
    outer_scale: f64,
) -> Result<f64> {
    let r_max = 8.0 * outer_scale;
    let integrand = |r: f64| f(r) * 2.0 * PI * r;
    let mut edges = vec![0.0];
    let mut edge = inner_scale / 4.0;
    while edge < r_max {
        edges.push(edge);
        edge *= 2.0;
    }
    edges.push(r_max);

    let panels: Vec<[f64; 5]> = edges
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (fa, fm, fb) = (integrand(a), integrand(0.5 * (a + b)), integrand(b));
            [a, b, fa, fm, fb]
        })
        .collect();
    // absolute floor, spread by width, so panels where the integrand is
    // negligible do not chase relative accuracy
    let scale: f64 = panels
        .iter()
        .map(|p| simpson(p[0], p[1], p[2], p[3], p[4]).abs())
        .sum();
    let atol_density = 1e-3 * QUAD_RTOL * scale / r_max;

    let mut total = 0.0;
    for [a, b, fa, fm, fb] in panels {
        let whole = simpson(a, b, fa, fm, fb);
        let tol = Tolerance {
            rtol: QUAD_RTOL,
            atol_density,
        };
        total += adaptive_simpson(&integrand, a, b, fa, fm, fb, whole, tol, 0)?;
    }
    Ok(total)
}

#[derive(Copy, Clone)]
struct Tolerance {
    rtol: f64,
    atol_density: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: Tolerance,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    let allowed = (tol.rtol * (left + right).abs()).max(tol.atol_density * (b - a));
    if delta.abs() <= 15.0 * allowed.max(1e-300) {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= QUAD_MAX_DEPTH {
        return Err(Error::Quadrature(format!(
            "panel [{a:e}, {b:e}] um: depth {depth}, error estimate {:e}",
            delta.abs() / 15.0
        )));
    }
    let l = adaptive_simpson(f, a, m, fa, flm, fm, left, tol, depth + 1)?;
    let r = adaptive_simpson(f, m, b, fm, frm, fb, right, tol, depth + 1)?;
    Ok(l + r)
}

/// Intensity-weighted transverse average of the Gaussian column-OD profile.
pub fn effective_od(mode: &LGMode, ens: &EnsembleConfig) -> Result<f64> {
    mode.validate()?;
    if !(ens.sigma_t > 0.0) {
        return Err(invalid("sigma_t must be > 0"));
    }
    if ens.peak_od == 0.0 {
        return Ok(0.0);
    }
    let two_s2 = 2.0 * ens.sigma_t * ens.sigma_t;
    let waist = mode.waist();
    let overlap = radial_integral(
        |r| lg_intensity(mode, r) * (-r * r / two_s2).exp(),
        mode.w0.min(ens.sigma_t),
        if ens.sigma_t.is_finite() {
            waist.max(ens.sigma_t)
        } else {
            waist
        },
    )?;
    Ok(ens.peak_od * overlap)
}
