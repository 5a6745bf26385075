//! Time-domain Maxwell-Bloch integration of a weak probe through a
//! Lambda-type medium, in the frame moving with the probe.
//!
//! With time in units of `1/Gamma`, `z` in units of the medium length and
//! all Rabi frequencies in units of `Gamma`:
//!
//! ```text
//! d s13/dt = -s13/2 + (i/2) Op + (i/2) Oc s12
//! d s12/dt = -g12 s12 + (i/2) Oc* s13
//! d Op/dz  = i (od/2) s13
//! ```
//!
//! The field is accumulated along `z` with the trapezoid rule at every stage
//! evaluation, and the coherences are advanced with classic RK4.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::protocol::StorageProtocol;
use super::waveform::Waveform;
use crate::error::{invalid, Error, Result};
use crate::modes::EnsembleConfig;

/// Speed of light in mm/ns.
const C_MM_PER_NS: f64 = 299.792458;

/// Largest `dt * rate` accepted before the run is rejected as unstable.
pub const STABILITY_LIMIT: f64 = 2.5;

/// Discretization of a run.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimGrid {
    /// Number of spatial cells (`nz + 1` nodes).
    pub nz: usize,
    /// Time step, ns.
    pub dt: f64,
    /// Simulated time after `switch_on_time` (or after the probe for a
    /// constant control), ns.
    #[serde(default = "SimGrid::default_window")]
    pub retrieval_window: f64,
    /// Record the full field every this many steps.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

impl Default for SimGrid {
    fn default() -> Self {
        SimGrid {
            nz: 400,
            dt: 0.25,
            retrieval_window: Self::default_window(),
            snapshot_every: None,
        }
    }
}

impl SimGrid {
    fn default_window() -> f64 {
        600.0
    }

    /// Half the resolution in both directions.
    pub fn coarsened(&self) -> SimGrid {
        SimGrid {
            nz: (self.nz / 2).max(2),
            dt: self.dt * 2.0,
            ..*self
        }
    }

    /// Twice the resolution in both directions.
    pub fn refined(&self) -> SimGrid {
        SimGrid {
            nz: self.nz * 2,
            dt: self.dt / 2.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nz < 2 {
            return Err(invalid("grid: nz must be at least 2"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("grid: dt must be positive"));
        }
        if !(self.retrieval_window >= 0.0) || !self.retrieval_window.is_finite() {
            return Err(invalid("grid: retrieval_window must be >= 0"));
        }
        if self.snapshot_every == Some(0) {
            return Err(invalid("grid: snapshot_every must be >= 1"));
        }
        Ok(())
    }
}

/// Probe field along the medium at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub t_ns: f64,
    pub field: Vec<C64>,
}

/// Outcome of one storage run. Energies are `int |Omega|^2 dt` in the
/// probe's amplitude units times ns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryResult {
    pub input_energy: f64,
    /// Exit-face energy before `switch_on_time`.
    pub transmitted_energy: f64,
    /// Exit-face energy from `switch_on_time` on.
    pub retrieved_energy: f64,
    /// Energy taken by the atoms: integrated decay of both coherences plus
    /// whatever excitation is still stored when the run ends.
    pub dissipated_energy: f64,
    pub se: f64,
    #[serde(skip)]
    pub exit_waveform: Waveform,
    #[serde(skip)]
    pub retrieved_waveform: Waveform,
    #[serde(skip)]
    pub snapshots: Vec<FieldSnapshot>,
}

impl MemoryResult {
    /// `input - (transmitted + retrieved + dissipated)`, relative to input.
    pub fn balance_error(&self) -> f64 {
        (self.input_energy - self.transmitted_energy - self.retrieved_energy - self.dissipated_energy)
            / self.input_energy
    }
}

struct Medium<'a> {
    probe: &'a Waveform,
    proto: &'a StorageProtocol,
    /// Rabi-frequency scale: rad/s -> units of Gamma.
    inv_gamma: f64,
    g12: f64,
    od: f64,
    nz: usize,
    dz: f64,
}

impl Medium<'_> {
    /// Fills `field` with the probe along z for coherence profile `s13`.
    fn field(&self, t_ns: f64, s13: &[C64], field: &mut [C64]) {
        let input = self.probe.value_at(t_ns);
        let coupling = C64::new(0.0, 0.5 * self.od);
        let mut acc = C64::new(0.0, 0.0);
        field[0] = input;
        for k in 1..=self.nz {
            acc += 0.5 * self.dz * (s13[k - 1] + s13[k]);
            field[k] = input + coupling * acc;
        }
    }

    fn rhs(&self, t_ns: f64, state: &[C64], out: &mut [C64], field: &mut [C64]) {
        let m = self.nz + 1;
        let (s13, s12) = state.split_at(m);
        let (d13, d12) = out.split_at_mut(m);
        self.field(t_ns, s13, field);
        let oc = self.proto.control_at(t_ns) * self.inv_gamma;
        let half_i = C64::new(0.0, 0.5);
        for k in 0..m {
            d13[k] = -0.5 * s13[k] + half_i * (field[k] + oc * s12[k]);
            d12[k] = -self.g12 * s12[k] + half_i * oc * s13[k];
        }
    }

    /// Trapezoid over z of `f(s13_k, s12_k)`.
    fn z_integral<F: Fn(C64, C64) -> f64>(&self, state: &[C64], f: F) -> f64 {
        let m = self.nz + 1;
        let (s13, s12) = state.split_at(m);
        let mut sum = 0.0;
        for k in 0..m {
            let w = if k == 0 || k == self.nz { 0.5 } else { 1.0 };
            sum += w * f(s13[k], s12[k]);
        }
        sum * self.dz
    }
}

/// Runs the write / store / read cycle and gates the exit field into
/// transmitted and retrieved parts.
pub fn simulate_storage(
    probe: &Waveform,
    proto: &StorageProtocol,
    od: f64,
    ens: &EnsembleConfig,
    grid: &SimGrid,
) -> Result<MemoryResult> {
    probe.validate()?;
    proto.validate()?;
    ens.validate()?;
    grid.validate()?;
    if !(od >= 0.0) || !od.is_finite() {
        return Err(invalid(format!("optical depth must be finite and >= 0, got {od}")));
    }
    if probe.len() < 2 {
        return Err(invalid("probe waveform needs at least two samples"));
    }

    let gamma_ns = ens.gamma_e * 1e-9;
    let medium = Medium {
        probe,
        proto,
        inv_gamma: 1.0 / ens.gamma_e,
        g12: ens.gamma_12 / ens.gamma_e,
        od,
        nz: grid.nz,
        dz: 1.0 / grid.nz as f64,
    };

    let dt_hat = grid.dt * gamma_ns;
    let oc_max = proto.control_rabi / ens.gamma_e;
    let rate = 0.5 + 0.5 * oc_max + 0.25 * od;
    if dt_hat * rate > STABILITY_LIMIT {
        return Err(Error::Stability(format!(
            "time step dt = {} ns gives dt*rate = {:.3} > {STABILITY_LIMIT} \
             (od = {od}, control = {oc_max:.3} Gamma); reduce dt below {:.4} ns",
            grid.dt,
            dt_hat * rate,
            STABILITY_LIMIT / rate / gamma_ns
        )));
    }

    let t_start = probe.t0;
    let t_end = if proto.is_constant() {
        probe.t_end() + grid.retrieval_window
    } else {
        proto.switch_on_time.max(probe.t_end()) + grid.retrieval_window
    };
    let steps = ((t_end - t_start) / grid.dt).ceil() as usize;
    let m = grid.nz + 1;

    let mut state = vec![C64::new(0.0, 0.0); 2 * m];
    let mut k1 = vec![C64::new(0.0, 0.0); 2 * m];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    let mut field = vec![C64::new(0.0, 0.0); m];

    let loss = |s13: C64, s12: C64| s13.norm_sqr() + 2.0 * medium.g12 * s12.norm_sqr();

    let mut exit = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut losses = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();

    let mut record = |n: usize, state: &[C64], field: &mut [C64], snaps: &mut Vec<FieldSnapshot>| {
        let t = t_start + n as f64 * grid.dt;
        medium.field(t, &state[..m], field);
        inputs.push(field[0]);
        exit.push(field[grid.nz]);
        losses.push(medium.z_integral(state, loss));
        if let Some(every) = grid.snapshot_every {
            if n % every == 0 {
                snaps.push(FieldSnapshot {
                    t_ns: t,
                    field: field.to_vec(),
                });
            }
        }
        field[grid.nz]
    };

    record(0, &state, &mut field, &mut snapshots);
    for n in 0..steps {
        let t = t_start + n as f64 * grid.dt;
        let th = t + 0.5 * grid.dt;
        medium.rhs(t, &state, &mut k1, &mut field);
        axpy(&state, &k1, 0.5 * dt_hat, &mut tmp);
        medium.rhs(th, &tmp, &mut k2, &mut field);
        axpy(&state, &k2, 0.5 * dt_hat, &mut tmp);
        medium.rhs(th, &tmp, &mut k3, &mut field);
        axpy(&state, &k3, dt_hat, &mut tmp);
        medium.rhs(t + grid.dt, &tmp, &mut k4, &mut field);
        for i in 0..2 * m {
            state[i] += dt_hat / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let out = record(n + 1, &state, &mut field, &mut snapshots);
        if !(out.re.is_finite() && out.im.is_finite()) {
            let z_index = state
                .iter()
                .position(|s| !(s.re.is_finite() && s.im.is_finite()))
                .map(|i| i % m)
                .unwrap_or(grid.nz);
            return Err(Error::NonFinite {
                time_ns: t + grid.dt,
                z_index,
            });
        }
    }

    let weight = |n: usize| {
        if n == 0 || n == steps {
            0.5 * grid.dt
        } else {
            grid.dt
        }
    };
    // The solver sees the probe as a piecewise-linear function, so field
    // energies are integrated exactly per interval. The trapezoid rule is
    // off by dt/6 |jump|^2 at a hard truncation edge.
    let segment = |a: C64, b: C64| grid.dt / 3.0 * (a.norm_sqr() + (a * b.conj()).re + b.norm_sqr());
    let input_energy: f64 = inputs.windows(2).map(|w| segment(w[0], w[1])).sum();
    if !(input_energy > 0.0) {
        return Err(invalid("probe carries no energy inside the simulated window"));
    }
    let mut transmitted_energy = 0.0;
    let mut retrieved_energy = 0.0;
    let mut first_retrieved = exit.len();
    for (n, w) in exit.windows(2).enumerate() {
        let t = t_start + n as f64 * grid.dt;
        if t < proto.switch_on_time {
            transmitted_energy += segment(w[0], w[1]);
        } else {
            first_retrieved = first_retrieved.min(n);
            retrieved_energy += segment(w[0], w[1]);
        }
    }
    let decayed: f64 = losses.iter().enumerate().map(|(n, l)| weight(n) * l).sum();
    let stored_at_end = medium.z_integral(&state, |a, b| a.norm_sqr() + b.norm_sqr());
    let dissipated_energy = od * (decayed + stored_at_end / gamma_ns);

    // retarded frame: the exit face sees the input delayed by L/c
    let delay = ens.length / C_MM_PER_NS;
    let exit_waveform = Waveform {
        t0: t_start + delay,
        dt: grid.dt,
        samples: exit.clone(),
    };
    let retrieved_waveform = Waveform {
        t0: t_start + first_retrieved as f64 * grid.dt + delay,
        dt: grid.dt,
        samples: exit[first_retrieved.min(exit.len())..].to_vec(),
    };

    Ok(MemoryResult {
        input_energy,
        transmitted_energy,
        retrieved_energy,
        dissipated_energy,
        se: retrieved_energy / input_energy,
        exit_waveform,
        retrieved_waveform,
        snapshots,
    })
}

fn axpy(x: &[C64], y: &[C64], a: f64, out: &mut [C64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + a * yi;
    }
}
