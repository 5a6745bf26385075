//! Weak-coherent-source photon statistics, detection with background, and
//! the intercept-resend fidelity threshold.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::BasisLabel;

/// `nbar^n e^{-nbar} / n!`, evaluated in log space.
pub fn poisson_pmf(nbar: f64, n: u64) -> f64 {
    if nbar == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let n_f = n as f64;
    (n_f * nbar.ln() - nbar - ln_gamma_int(n)).exp()
}

/// `ln(n!)`.
fn ln_gamma_int(n: u64) -> f64 {
    // exact sum is cheap for the photon numbers that matter; Stirling with
    // two correction terms beyond
    if n < 256 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
}

/// Tail bound below which the threshold series is cut.
pub const THRESHOLD_TAIL: f64 = 1e-12;

/// Classical (measure-and-resend) fidelity bound for a weak coherent input:
/// `sum_{N>=1} (N+1)/(N+2) p(nbar, N) / (1 - p(nbar, 0))`.
pub fn coherent_fidelity_threshold(nbar: f64) -> Result<f64> {
    if !(nbar > 0.0) || !nbar.is_finite() {
        return Err(invalid(format!("nbar must be positive and finite, got {nbar}")));
    }
    let not_vacuum = -(-nbar).exp_m1();
    let mut sum = 0.0;
    let mut p = poisson_pmf(nbar, 1);
    let mut n = 1u64;
    loop {
        let nf = n as f64;
        sum += (nf + 1.0) / (nf + 2.0) * p;
        // remaining terms have weight < 1 and, once N + 2 > nbar, shrink at
        // least geometrically with ratio nbar / (N + 2)
        let ratio = nbar / (nf + 2.0);
        if ratio < 1.0 {
            let next = p * nbar / (nf + 1.0);
            let tail = next / (1.0 - ratio) / not_vacuum;
            if tail < THRESHOLD_TAIL {
                break;
            }
        }
        p *= nbar / (nf + 1.0);
        n += 1;
    }
    Ok(sum / not_vacuum)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherentSource {
    /// Mean photon number per pulse.
    pub nbar: f64,
    /// Pulses per second.
    pub rep_rate: f64,
}

impl Default for CoherentSource {
    fn default() -> Self {
        CoherentSource {
            nbar: 0.5,
            rep_rate: 2.5e5,
        }
    }
}

impl CoherentSource {
    pub fn validate(&self) -> Result<()> {
        if !(self.nbar > 0.0 && self.nbar.is_finite()) {
            return Err(invalid("source: nbar must be > 0"));
        }
        if !(self.rep_rate > 0.0 && self.rep_rate.is_finite()) {
            return Err(invalid("source: rep_rate must be > 0"));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    /// Overall detection efficiency, in (0, 1].
    pub efficiency: f64,
    /// Background counts per second.
    pub background_rate: f64,
    /// Histogram bin width, ns.
    pub gate_width: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            efficiency: 0.3,
            background_rate: 300.0,
            gate_width: 10.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(invalid("detector: efficiency must lie in (0, 1]"));
        }
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return Err(invalid("detector: background_rate must be >= 0"));
        }
        if !(self.gate_width > 0.0 && self.gate_width.is_finite()) {
            return Err(invalid("detector: gate_width must be > 0"));
        }
        Ok(())
    }
}

/// Total counts in one projection basis.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub basis: BasisLabel,
    pub counts: u64,
    pub collection_time_s: f64,
}

impl CountRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.collection_time_s > 0.0 && self.collection_time_s.is_finite()) {
            return Err(invalid(format!(
                "{}: collection time must be > 0, got {}",
                self.basis, self.collection_time_s
            )));
        }
        Ok(())
    }
}

pub fn write_count_records<W: Write>(out: W, records: &[CountRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_count_records<R: Read>(input: R) -> Result<Vec<CountRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: CountRecord = row?;
        r.validate()?;
        out.push(r);
    }
    Ok(out)
}

/// Generator for stream `stream` of `seed`; distinct streams are
/// independent, so parallel draws never share state.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Expected counts `time (rep_rate nbar efficiency prob + background)`.
pub fn expected_counts(prob: f64, source: &CoherentSource, det: &DetectorModel, time: f64) -> f64 {
    time * (source.rep_rate * source.nbar * det.efficiency * prob + det.background_rate)
}

/// One Poisson draw with mean [`expected_counts`].
pub fn simulate_counts(
    prob: f64,
    source: &CoherentSource,
    det: &DetectorModel,
    time: f64,
    seed: u64,
) -> Result<u64> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(invalid(format!("probability {prob} outside [0, 1]")));
    }
    if !(time > 0.0 && time.is_finite()) {
        return Err(invalid("collection time must be > 0"));
    }
    source.validate()?;
    det.validate()?;
    poisson_draw(expected_counts(prob, source, det, time), &mut stream_rng(seed, 0))
}

/// Largest mean accepted for a count draw; well inside both `u64` and the
/// sampler's range.
pub const MAX_MEAN_COUNTS: f64 = 1e18;

pub(crate) fn poisson_draw(mean: f64, rng: &mut ChaCha8Rng) -> Result<u64> {
    if !(mean <= MAX_MEAN_COUNTS) {
        return Err(Error::CountOverflow(mean));
    }
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|_| Error::CountOverflow(mean))?;
    let x: f64 = dist.sample(rng);
    Ok(x as u64)
}

/// `eta = n_out / n_in` with `sigma = sqrt(eta (1 + eta) / n_in)`, the
/// propagated error of a ratio of two independent Poisson counts.
pub fn estimate_se(n_in: u64, n_out: u64) -> Result<(f64, f64)> {
    if n_in == 0 {
        return Err(invalid("n_in must be > 0"));
    }
    let eta = n_out as f64 / n_in as f64;
    Ok((eta, (eta * (1.0 + eta) / n_in as f64).sqrt()))
}
