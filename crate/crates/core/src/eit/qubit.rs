use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quantum::QubitKet;

/// Storage efficiency of each basis mode and the relative phase the memory
/// adds to `|R>`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerModeEfficiency {
    pub eta_g: f64,
    pub eta_r: f64,
    #[serde(default)]
    pub dphi: f64,
}

/// Maps `alpha|G> + beta|R>` to the normalized conditional output
/// `alpha sqrt(eta_g)|G> + beta e^{i dphi} sqrt(eta_r)|R>` and the overall
/// efficiency `|alpha|^2 eta_g + |beta|^2 eta_r`.
pub fn store_qubit(ket: &QubitKet, per_mode: &PerModeEfficiency) -> Result<(QubitKet, f64)> {
    let PerModeEfficiency { eta_g, eta_r, dphi } = *per_mode;
    for (name, eta) in [("eta_g", eta_g), ("eta_r", eta_r)] {
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid(format!("{name} = {eta} outside [0, 1]")));
        }
    }
    if eta_g == 0.0 && eta_r == 0.0 {
        return Err(Error::NothingRetrieved("both mode efficiencies are zero".into()));
    }
    let g = ket.amp_g() * eta_g.sqrt();
    let r = ket.amp_r() * C64::from_polar(eta_r.sqrt(), dphi);
    let overall = ket.amp_g().norm_sqr() * eta_g + ket.amp_r().norm_sqr() * eta_r;
    let out = QubitKet::from_amplitudes(g, r)
        .map_err(|_| Error::NothingRetrieved("no amplitude survives storage".into()))?;
    Ok((out, overall))
}
