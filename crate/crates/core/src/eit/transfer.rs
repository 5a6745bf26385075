//! Frequency-domain propagation through the same linear medium.
//!
//! Convention: a spectral component varies as `exp(+i delta t)`. Eliminating
//! the coherences in steady state gives
//!
//! ```text
//! T(delta) = exp[ -(od Gamma / 4) (g12 + i delta)
//!                 / ((Gamma/2 + i delta)(g12 + i delta) + |Oc|^2 / 4) ]
//! ```
//!
//! so `|T(0)| = exp(-od/2)` with no control, `|T(0)| = 1` for `g12 = 0`,
//! and the group delay is `-d arg T / d delta`.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use super::waveform::Waveform;
use crate::error::{invalid, Result};
use crate::modes::EnsembleConfig;

/// Amplitude transfer coefficient at detuning `delta` (rad/s).
pub fn transmission_transfer(delta: f64, od: f64, ens: &EnsembleConfig, omega_c: f64) -> C64 {
    let gamma = ens.gamma_e;
    let ground = C64::new(ens.gamma_12, delta);
    let optical = C64::new(0.5 * gamma, delta);
    let denom = optical * ground + 0.25 * omega_c * omega_c;
    (-(0.25 * od * gamma) * ground / denom).exp()
}

/// Group delay `-d arg T / d delta` at resonance, seconds, by central
/// difference.
pub fn group_delay(od: f64, ens: &EnsembleConfig, omega_c: f64) -> f64 {
    let h = 1e-6 * ens.gamma_e;
    let plus = transmission_transfer(h, od, ens, omega_c);
    let minus = transmission_transfer(-h, od, ens, omega_c);
    -(plus / minus).arg() / (2.0 * h)
}

/// Propagates `input` through the medium with the spectral transfer
/// function. The record is zero-padded to at least `pad` times its length
/// (rounded up to a power of two) to keep the circular wrap negligible.
pub fn spectral_propagate(
    input: &Waveform,
    od: f64,
    ens: &EnsembleConfig,
    omega_c: f64,
    pad: usize,
) -> Result<Waveform> {
    input.validate()?;
    if input.is_empty() {
        return Err(invalid("empty waveform"));
    }
    let n = (input.len() * pad.max(1)).next_power_of_two();
    let mut buf = input.samples.clone();
    buf.resize(n, C64::new(0.0, 0.0));

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let dt_s = input.dt * 1e-9;
    for (k, x) in buf.iter_mut().enumerate() {
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let omega = 2.0 * std::f64::consts::PI * signed / (n as f64 * dt_s);
        *x *= transmission_transfer(omega, od, ens, omega_c);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.truncate(input.len());
    for x in buf.iter_mut() {
        *x *= scale;
    }
    Waveform::new(input.t0, input.dt, buf)
}
