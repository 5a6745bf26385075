//! Six-projector qubit tomography: simulated counts, Stokes-ratio
//! reconstruction, and bootstrap error bars on the fidelity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::{
    density_from_stokes, fidelity, project_physical, BasisLabel, DensityMatrix2, QubitKet, StokesVector,
};
use crate::stats::{expected_counts, poisson_draw, stream_rng, CoherentSource, CountRecord, DetectorModel};

/// Born-rule probability `<psi|rho|psi>`.
pub fn projection_probability(rho: &DensityMatrix2, basis_state: &QubitKet) -> f64 {
    rho.expectation(basis_state).clamp(0.0, 1.0)
}

/// Counts for all six projectors, in [`BasisLabel::ALL`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyRecord {
    records: Vec<CountRecord>,
}

impl TomographyRecord {
    /// Checks that each label appears once and all collection times agree.
    pub fn new(records: Vec<CountRecord>) -> Result<Self> {
        let mut sorted = Vec::with_capacity(6);
        for label in BasisLabel::ALL {
            let mut matching = records.iter().filter(|r| r.basis == label);
            let r = matching
                .next()
                .ok_or_else(|| invalid(format!("no count record for basis {label}")))?;
            if matching.next().is_some() {
                return Err(invalid(format!("basis {label} appears more than once")));
            }
            r.validate()?;
            sorted.push(*r);
        }
        if records.len() != 6 {
            return Err(invalid(format!("expected 6 count records, got {}", records.len())));
        }
        let t = sorted[0].collection_time_s;
        if sorted.iter().any(|r| r.collection_time_s != t) {
            return Err(invalid("collection times differ between bases"));
        }
        Ok(TomographyRecord { records: sorted })
    }

    pub fn records(&self) -> &[CountRecord] {
        &self.records
    }

    pub fn counts(&self, label: BasisLabel) -> u64 {
        self.records.iter().find(|r| r.basis == label).map_or(0, |r| r.counts)
    }

    pub fn collection_time(&self) -> f64 {
        self.records[0].collection_time_s
    }

    /// Same record with every count multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> TomographyRecord {
        TomographyRecord {
            records: self
                .records
                .iter()
                .map(|r| CountRecord {
                    counts: r.counts * factor,
                    ..*r
                })
                .collect(),
        }
    }
}

/// Counts from six independent Poisson draws. Each projector mean is
/// `time (rep_rate nbar efficiency throughput p_j + background)` with
/// `throughput` the memory (or link) transmission in front of the detector.
pub fn simulate_tomography(
    state: &DensityMatrix2,
    throughput: f64,
    source: &CoherentSource,
    det: &DetectorModel,
    time: f64,
    seed: u64,
) -> Result<TomographyRecord> {
    state.check_physical("tomography state")?;
    if !(0.0..=1.0).contains(&throughput) {
        return Err(invalid(format!("throughput {throughput} outside [0, 1]")));
    }
    if !(time > 0.0 && time.is_finite()) {
        return Err(invalid("collection time must be > 0"));
    }
    source.validate()?;
    det.validate()?;
    let records = BasisLabel::ALL
        .iter()
        .enumerate()
        .map(|(k, &label)| {
            let p = throughput * projection_probability(state, &label.ket());
            let mean = expected_counts(p, source, det, time);
            Ok(CountRecord {
                basis: label,
                counts: poisson_draw(mean, &mut stream_rng(seed, k as u64))?,
                collection_time_s: time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TomographyRecord::new(records)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// Stokes vector from the raw count ratios.
    pub stokes: StokesVector,
    /// Physical density matrix.
    pub rho: DensityMatrix2,
}

/// Stokes parameters from the count ratios, e.g. `S1 = (P_H - P_V) / (P_H + P_V)`,
/// then the nearest physical state.
pub fn reconstruct(record: &TomographyRecord) -> Result<Reconstruction> {
    reconstruct_from(|l| record.counts(l) as f64)
}

/// As [`reconstruct`] after removing `background_rate * time` from each
/// count, floored at zero.
pub fn reconstruct_background_subtracted(record: &TomographyRecord, background_rate: f64) -> Result<Reconstruction> {
    if !(background_rate >= 0.0) {
        return Err(invalid("background_rate must be >= 0"));
    }
    let bg = background_rate * record.collection_time();
    reconstruct_from(|l| (record.counts(l) as f64 - bg).max(0.0))
}

fn reconstruct_from<F: Fn(BasisLabel) -> f64>(counts: F) -> Result<Reconstruction> {
    use BasisLabel::*;
    let ratio = |a: BasisLabel, b: BasisLabel| -> Result<f64> {
        let (pa, pb) = (counts(a), counts(b));
        if pa + pb <= 0.0 {
            return Err(Error::Degenerate(format!("{a}/{b}")));
        }
        Ok((pa - pb) / (pa + pb))
    };
    let stokes = StokesVector::new(ratio(H, V)?, ratio(D, A)?, ratio(G, R)?);
    let rho = project_physical(&density_from_stokes(stokes))?;
    Ok(Reconstruction { stokes, rho })
}

/// Point fidelity and its parametric-bootstrap standard deviation.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub fidelity: f64,
    pub sigma: f64,
    /// Resamples that could not be reconstructed (zero-count pairs).
    pub failed_resamples: usize,
}

/// Minimum number of bootstrap resamples.
pub const MIN_RESAMPLES: usize = 100;

/// Fidelity of the reconstruction with `rho_in`, with sigma from
/// `resamples` Poisson resamplings of the observed counts. Resample `k`
/// draws from its own stream of `seed`, so the result does not depend on
/// scheduling.
pub fn fidelity_with_error(
    record: &TomographyRecord,
    rho_in: &DensityMatrix2,
    resamples: usize,
    seed: u64,
) -> Result<FidelityEstimate> {
    if resamples < MIN_RESAMPLES {
        return Err(invalid(format!("need at least {MIN_RESAMPLES} resamples, got {resamples}")));
    }
    let point = fidelity(rho_in, &reconstruct(record)?.rho)?;
    let samples: Vec<Option<f64>> = (0..resamples)
        .into_par_iter()
        .map(|k| -> Result<Option<f64>> {
            let mut rng = stream_rng(seed, k as u64);
            let mut drawn = Vec::with_capacity(6);
            for r in record.records() {
                drawn.push(CountRecord {
                    counts: poisson_draw(r.counts as f64, &mut rng)?,
                    ..*r
                });
            }
            match reconstruct(&TomographyRecord { records: drawn }) {
                Ok(rec) => Ok(Some(fidelity(rho_in, &rec.rho)?)),
                Err(Error::Degenerate(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let good: Vec<f64> = samples.iter().flatten().copied().collect();
    let failed = samples.len() - good.len();
    if good.len() < 2 {
        return Err(Error::Degenerate("every bootstrap resample was degenerate".into()));
    }
    Ok(FidelityEstimate {
        fidelity: point,
        sigma: std_dev(&good),
        failed_resamples: failed,
    })
}

/// Sample standard deviation with compensated sums; input order is fixed
/// by resample index.
fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = neumaier_sum(xs.iter().copied()) / n;
    let ss = neumaier_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
    (ss / (n - 1.0)).sqrt()
}

fn neumaier_sum<I: Iterator<Item = f64>>(xs: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Result document of one tomography run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub stokes: [f64; 3],
    pub rho_re: [[f64; 2]; 2],
    pub rho_im: [[f64; 2]; 2],
    pub fidelity: f64,
    pub fidelity_sigma: f64,
}

impl ReconstructionResult {
    pub fn new(rec: &Reconstruction, est: &FidelityEstimate) -> Self {
        ReconstructionResult {
            stokes: rec.stokes.as_array(),
            rho_re: rec.rho.real_part(),
            rho_im: rec.rho.imag_part(),
            fidelity: est.fidelity,
            fidelity_sigma: est.sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use BasisLabel::*;

    fn record(h: u64, v: u64, d: u64, a: u64, g: u64, r: u64) -> TomographyRecord {
        let c = [(H, h), (V, v), (D, d), (A, a), (G, g), (R, r)];
        TomographyRecord::new(
            c.iter()
                .map(|&(basis, counts)| CountRecord {
                    basis,
                    counts,
                    collection_time_s: 1200.0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn projection_examples() {
        let h = H.ket().density();
        assert_abs_diff_eq!(projection_probability(&h, &H.ket()), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(projection_probability(&h, &V.ket()), 0.0, epsilon = 1e-12);
        let mixed = DensityMatrix2::maximally_mixed();
        for l in BasisLabel::ALL {
            assert_abs_diff_eq!(projection_probability(&mixed, &l.ket()), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruct_examples() {
        let r = reconstruct(&record(500, 500, 500, 500, 500, 500)).unwrap();
        assert_eq!(r.stokes.as_array(), [0.0, 0.0, 0.0]);
        assert!(r.rho.approx_eq(&DensityMatrix2::maximally_mixed(), 1e-12));

        let r = reconstruct(&record(1000, 0, 500, 500, 500, 500)).unwrap();
        assert!(r.rho.approx_eq(&H.ket().density(), 1e-12));

        let r = reconstruct(&record(900, 100, 480, 520, 510, 490)).unwrap();
        let s = r.stokes.as_array();
        assert_abs_diff_eq!(s[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], -0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(s[2], 0.02, epsilon = 1e-12);
        assert!(r.rho.approx_eq(&density_from_stokes(r.stokes), 1e-12));
    }

    #[test]
    fn degenerate_pair_named() {
        match reconstruct(&record(10, 10, 0, 0, 3, 4)) {
            Err(Error::Degenerate(pair)) => assert_eq!(pair, "D/A"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scale_invariance() {
        let r = record(913, 87, 455, 545, 612, 388);
        assert_eq!(reconstruct(&r).unwrap(), reconstruct(&r.scaled(7)).unwrap());
    }

    #[test]
    fn record_validation() {
        let mut recs = record(1, 1, 1, 1, 1, 1).records().to_vec();
        recs[5].collection_time_s = 10.0;
        assert!(TomographyRecord::new(recs.clone()).is_err());
        recs[5] = recs[0];
        assert!(TomographyRecord::new(recs).is_err());
    }

    #[test]
    fn background_subtraction_floors_at_zero() {
        // 0.1 counts/s over 1200 s removes 120 from each
        let r = record(1120, 100, 620, 620, 620, 620);
        let sub = reconstruct_background_subtracted(&r, 0.1).unwrap();
        assert_abs_diff_eq!(sub.stokes.s1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_background_basis_state() {
        let det = DetectorModel {
            background_rate: 0.0,
            ..DetectorModel::default()
        };
        let rec = simulate_tomography(&G.ket().density(), 1.0, &CoherentSource::default(), &det, 10.0, 3).unwrap();
        assert_eq!(rec.counts(R), 0);
        assert!(rec.counts(G) > 0);
    }

    #[test]
    fn bootstrap_sigma_scales() {
        let rho = D.ket().density();
        let det = DetectorModel {
            background_rate: 50.0,
            ..DetectorModel::default()
        };
        let rec = simulate_tomography(&rho, 0.6, &CoherentSource::default(), &det, 1.0, 9).unwrap();
        let a = fidelity_with_error(&rec, &rho, 400, 1).unwrap();
        let b = fidelity_with_error(&rec.scaled(100), &rho, 400, 1).unwrap();
        let ratio = a.sigma / b.sigma;
        assert!((7.0..14.0).contains(&ratio), "ratio {ratio}");
        assert!(fidelity_with_error(&rec, &rho, 10, 1).is_err());
    }
}
