//! State algebra for a single OAM qubit.
//!
//! The computational basis is `{|G>, |R>}` (Gaussian `l = 0` and `l = 1`
//! vortex mode). Pauli operators are fixed so that `sigma_3` is diagonal on
//! that basis (`+1` for `|G>`, `-1` for `|R>`), `sigma_1` has `|H>`/`|V>` as
//! its `+1`/`-1` eigenstates and `sigma_2` has `|D>`/`|A>`:
//!
//! ```text
//! |H> = (|G> + |R>)/sqrt2    |V> = (|G> - |R>)/sqrt2
//! |D> = (|G> + i|R>)/sqrt2   |A> = (|G> - i|R>)/sqrt2
//! ```
//!
//! A density matrix is then `rho = (I + s1 sigma_1 + s2 sigma_2 + s3 sigma_3)/2`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const NORM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

/// Label of one of the six mutually-unbiased basis states.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasisLabel {
    G,
    R,
    H,
    V,
    D,
    A,
}

impl BasisLabel {
    /// All six labels in the canonical record order.
    pub const ALL: [BasisLabel; 6] = [
        BasisLabel::G,
        BasisLabel::R,
        BasisLabel::H,
        BasisLabel::V,
        BasisLabel::D,
        BasisLabel::A,
    ];

    pub fn ket(self) -> QubitKet {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (g, r) = match self {
            BasisLabel::G => (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            BasisLabel::R => (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
            BasisLabel::H => (C64::new(s, 0.0), C64::new(s, 0.0)),
            BasisLabel::V => (C64::new(s, 0.0), C64::new(-s, 0.0)),
            BasisLabel::D => (C64::new(s, 0.0), C64::new(0.0, s)),
            BasisLabel::A => (C64::new(s, 0.0), C64::new(0.0, -s)),
        };
        QubitKet { amp_g: g, amp_r: r }
    }

    /// The orthogonal partner within the same basis.
    pub fn partner(self) -> BasisLabel {
        match self {
            BasisLabel::G => BasisLabel::R,
            BasisLabel::R => BasisLabel::G,
            BasisLabel::H => BasisLabel::V,
            BasisLabel::V => BasisLabel::H,
            BasisLabel::D => BasisLabel::A,
            BasisLabel::A => BasisLabel::D,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BasisLabel::G => "G",
            BasisLabel::R => "R",
            BasisLabel::H => "H",
            BasisLabel::V => "V",
            BasisLabel::D => "D",
            BasisLabel::A => "A",
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BasisLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "G" | "g" => Ok(BasisLabel::G),
            "R" | "r" => Ok(BasisLabel::R),
            "H" | "h" => Ok(BasisLabel::H),
            "V" | "v" => Ok(BasisLabel::V),
            "D" | "d" => Ok(BasisLabel::D),
            "A" | "a" => Ok(BasisLabel::A),
            other => Err(invalid(format!("unknown basis label {other:?}"))),
        }
    }
}

/// Normalized qubit state `amp_g |G> + amp_r |R>`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitKet {
    amp_g: C64,
    amp_r: C64,
}

impl QubitKet {
    /// Builds a ket from raw amplitudes, normalizing them.
    pub fn from_amplitudes(amp_g: C64, amp_r: C64) -> Result<Self> {
        let norm = (amp_g.norm_sqr() + amp_r.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(invalid("ket amplitudes have zero or non-finite norm"));
        }
        Ok(QubitKet {
            amp_g: amp_g / norm,
            amp_r: amp_r / norm,
        })
    }

    /// `alpha |G> + beta e^{i phi} |R>`, normalized.
    pub fn from_coeffs(alpha: f64, beta: f64, phi: f64) -> Result<Self> {
        if alpha < 0.0 || beta < 0.0 {
            return Err(invalid("alpha and beta must be nonnegative"));
        }
        if !(alpha * alpha + beta * beta > 0.0) {
            return Err(invalid("alpha^2 + beta^2 must be positive"));
        }
        Self::from_amplitudes(C64::new(alpha, 0.0), C64::from_polar(beta, phi))
    }

    pub fn amp_g(&self) -> C64 {
        self.amp_g
    }

    pub fn amp_r(&self) -> C64 {
        self.amp_r
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &QubitKet) -> C64 {
        self.amp_g.conj() * other.amp_g + self.amp_r.conj() * other.amp_r
    }

    /// `|<self|other>|^2`.
    pub fn overlap(&self, other: &QubitKet) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Representative with `amp_g` real and nonnegative (or `amp_r` when
    /// `amp_g` vanishes).
    pub fn gauge_fixed(&self) -> QubitKet {
        let pivot = if self.amp_g.norm() > NORM_TOL {
            self.amp_g
        } else {
            self.amp_r
        };
        let phase = C64::from_polar(1.0, -pivot.arg());
        QubitKet {
            amp_g: self.amp_g * phase,
            amp_r: self.amp_r * phase,
        }
    }

    /// Equality up to a global phase.
    pub fn approx_eq(&self, other: &QubitKet, tol: f64) -> bool {
        let a = self.gauge_fixed();
        let b = other.gauge_fixed();
        (a.amp_g - b.amp_g).norm() <= tol && (a.amp_r - b.amp_r).norm() <= tol
    }

    pub fn density(&self) -> DensityMatrix2 {
        let v = [self.amp_g, self.amp_r];
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = v[i] * v[j].conj();
            }
        }
        DensityMatrix2 { entries: m }
    }

    pub fn stokes(&self) -> StokesVector {
        stokes_from_density(&self.density())
    }
}

/// `ket_from_coeffs` entry point.
pub fn ket_from_coeffs(alpha: f64, beta: f64, phi: f64) -> Result<QubitKet> {
    QubitKet::from_coeffs(alpha, beta, phi)
}

/// Three real Stokes parameters.
#[derive(Copy, Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct StokesVector {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub const fn new(s1: f64, s2: f64, s3: f64) -> Self {
        StokesVector { s1, s2, s3 }
    }

    pub fn norm(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.s1, self.s2, self.s3]
    }
}

/// 2x2 complex matrix in the `(|G>, |R>)` basis.
///
/// Values produced by the reconstruction formula may be unphysical; use
/// [`DensityMatrix2::is_physical`] or [`project_physical`] before treating one
/// as a state.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix2 {
    entries: [[C64; 2]; 2],
}

impl DensityMatrix2 {
    pub fn from_entries(entries: [[C64; 2]; 2]) -> Result<Self> {
        let m = DensityMatrix2 { entries };
        if !m.is_hermitian(NORM_TOL) {
            return Err(invalid("matrix is not Hermitian"));
        }
        Ok(m)
    }

    pub fn from_real_imag(re: [[f64; 2]; 2], im: [[f64; 2]; 2]) -> Result<Self> {
        let mut e = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                e[i][j] = C64::new(re[i][j], im[i][j]);
            }
        }
        Self::from_entries(e)
    }

    pub fn maximally_mixed() -> Self {
        density_from_stokes(StokesVector::default())
    }

    pub fn entries(&self) -> &[[C64; 2]; 2] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i][j]
    }

    pub fn trace(&self) -> f64 {
        (self.entries[0][0] + self.entries[1][1]).re
    }

    pub fn det(&self) -> f64 {
        let e = &self.entries;
        (e[0][0] * e[1][1] - e[0][1] * e[1][0]).re
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let e = &self.entries;
        e[0][0].im.abs() <= tol
            && e[1][1].im.abs() <= tol
            && (e[0][1] - e[1][0].conj()).norm() <= tol
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let (t, s) = bloch_parts(&self.entries);
        let r = norm3(s);
        [(t - r) / 2.0, (t + r) / 2.0]
    }

    pub fn is_physical(&self) -> bool {
        self.is_hermitian(NORM_TOL)
            && (self.trace() - 1.0).abs() <= NORM_TOL
            && self.eigenvalues()[0] >= -PSD_TOL
    }

    /// `<psi|rho|psi>`.
    pub fn expectation(&self, ket: &QubitKet) -> f64 {
        let v = [ket.amp_g(), ket.amp_r()];
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                acc += v[i].conj() * self.entries[i][j] * v[j];
            }
        }
        acc.re
    }

    pub fn real_part(&self) -> [[f64; 2]; 2] {
        let e = &self.entries;
        [[e[0][0].re, e[0][1].re], [e[1][0].re, e[1][1].re]]
    }

    pub fn imag_part(&self) -> [[f64; 2]; 2] {
        let e = &self.entries;
        [[e[0][0].im, e[0][1].im], [e[1][0].im, e[1][1].im]]
    }

    /// Trace distance `||a - b||_1 / 2`.
    pub fn trace_distance(&self, other: &DensityMatrix2) -> f64 {
        let mut d = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                d[i][j] = self.entries[i][j] - other.entries[i][j];
            }
        }
        let (t, s) = bloch_parts(&d);
        let r = norm3(s);
        (((t - r) / 2.0).abs() + ((t + r) / 2.0).abs()) / 2.0
    }

    pub fn approx_eq(&self, other: &DensityMatrix2, tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| (self.entries[i][j] - other.entries[i][j]).norm() <= tol))
    }

    pub fn check_physical(&self, what: &str) -> Result<()> {
        if !self.is_hermitian(1e-10) {
            return Err(invalid(format!("{what} is not Hermitian")));
        }
        if (self.trace() - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("{what} has trace {}", self.trace())));
        }
        let lo = self.eigenvalues()[0];
        if lo < -PSD_TOL {
            return Err(invalid(format!(
                "{what} is not positive semidefinite (eigenvalue {lo:e})"
            )));
        }
        Ok(())
    }
}

/// Decomposes a Hermitian `m` as `(t I + s . sigma)/2`.
fn bloch_parts(m: &[[C64; 2]; 2]) -> (f64, [f64; 3]) {
    let a = m[0][0].re;
    let d = m[1][1].re;
    // Hermitian part of the off-diagonal element.
    let b = (m[0][1] + m[1][0].conj()) / 2.0;
    (a + d, [2.0 * b.re, -2.0 * b.im, a - d])
}

fn from_bloch(t: f64, s: [f64; 3]) -> [[C64; 2]; 2] {
    [
        [C64::new((t + s[2]) / 2.0, 0.0), C64::new(s[0] / 2.0, -s[1] / 2.0)],
        [C64::new(s[0] / 2.0, s[1] / 2.0), C64::new((t - s[2]) / 2.0, 0.0)],
    ]
}

fn norm3(s: [f64; 3]) -> f64 {
    (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
}

fn matmul(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let mut c = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Square root of a Hermitian PSD matrix via its spectral decomposition.
fn sqrt_psd(m: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let (t, s) = bloch_parts(m);
    let r = norm3(s);
    let lo = ((t - r) / 2.0).max(0.0).sqrt();
    let hi = ((t + r) / 2.0).max(0.0).sqrt();
    if r == 0.0 {
        return from_bloch(2.0 * hi, [0.0; 3]);
    }
    // sqrt(m) = hi P+ + lo P-, P+- = (I +- s_hat . sigma)/2
    let scale = (hi - lo) / r;
    from_bloch(hi + lo, [s[0] * scale, s[1] * scale, s[2] * scale])
}

/// `rho = (I + sum_i s_i sigma_i) / 2`. No physicality check.
pub fn density_from_stokes(s: StokesVector) -> DensityMatrix2 {
    DensityMatrix2 {
        entries: from_bloch(1.0, [s.s1, s.s2, s.s3]),
    }
}

/// `s_i = Tr(rho sigma_i)`.
pub fn stokes_from_density(rho: &DensityMatrix2) -> StokesVector {
    let (_, s) = bloch_parts(&rho.entries);
    StokesVector::new(s[0], s[1], s[2])
}

/// Uhlmann fidelity via the 2x2 closed form
/// `Tr(rho1 rho2) + 2 sqrt(det rho1 det rho2)`.
pub fn fidelity(rho_in: &DensityMatrix2, rho_out: &DensityMatrix2) -> Result<f64> {
    rho_in.check_physical("input state")?;
    rho_out.check_physical("output state")?;
    let prod = matmul(&rho_in.entries, &rho_out.entries);
    let tr = (prod[0][0] + prod[1][1]).re;
    let dets = rho_in.det().max(0.0) * rho_out.det().max(0.0);
    Ok((tr + 2.0 * dets.sqrt()).clamp(0.0, 1.0))
}

/// Uhlmann fidelity from its definition,
/// `(Tr sqrt(sqrt(rho_out) rho_in sqrt(rho_out)))^2`.
pub fn fidelity_uhlmann(rho_in: &DensityMatrix2, rho_out: &DensityMatrix2) -> Result<f64> {
    rho_in.check_physical("input state")?;
    rho_out.check_physical("output state")?;
    let root = sqrt_psd(&rho_out.entries);
    let inner = matmul(&matmul(&root, &rho_in.entries), &root);
    let (t, s) = bloch_parts(&inner);
    let r = norm3(s);
    let tr_sqrt = ((t - r) / 2.0).max(0.0).sqrt() + ((t + r) / 2.0).max(0.0).sqrt();
    Ok((tr_sqrt * tr_sqrt).clamp(0.0, 1.0))
}

/// Clamps negative eigenvalues to zero and renormalizes to unit trace.
pub fn project_physical(rho: &DensityMatrix2) -> Result<DensityMatrix2> {
    let (t, s) = bloch_parts(&rho.entries);
    let r = norm3(s);
    let lo = (t - r) / 2.0;
    let hi = (t + r) / 2.0;
    let entries = if lo >= 0.0 {
        if !(t > 0.0) {
            return Err(invalid("cannot project the zero matrix"));
        }
        from_bloch(1.0, [s[0] / t, s[1] / t, s[2] / t])
    } else if hi > 0.0 {
        // only the upper eigenvector survives: a pure state
        from_bloch(1.0, [s[0] / r, s[1] / r, s[2] / r])
    } else {
        return Err(invalid("matrix has no positive eigenvalue to keep"));
    };
    Ok(DensityMatrix2 { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn coeffs_examples() {
        let g = ket_from_coeffs(1.0, 0.0, 0.0).unwrap();
        assert!(g.approx_eq(&BasisLabel::G.ket(), 1e-12));
        let h = ket_from_coeffs(1.0, 1.0, 0.0).unwrap();
        assert!(h.approx_eq(&BasisLabel::H.ket(), 1e-12));
        let a = ket_from_coeffs(1.0, 1.0, -FRAC_PI_2).unwrap();
        assert!(a.approx_eq(&BasisLabel::A.ket(), 1e-12));
        assert!(ket_from_coeffs(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn stokes_density_examples() {
        let mixed = density_from_stokes(StokesVector::new(0.0, 0.0, 0.0));
        assert_abs_diff_eq!(mixed.get(0, 0).re, 0.5);
        assert_abs_diff_eq!(mixed.get(1, 1).re, 0.5);
        assert_abs_diff_eq!(mixed.get(0, 1).norm(), 0.0);

        let r = density_from_stokes(StokesVector::new(0.0, 0.0, -1.0));
        assert!(r.approx_eq(&BasisLabel::R.ket().density(), 1e-15));
        let h = density_from_stokes(StokesVector::new(1.0, 0.0, 0.0));
        assert!(h.approx_eq(&BasisLabel::H.ket().density(), 1e-15));

        let s = stokes_from_density(&BasisLabel::G.ket().density());
        assert_eq!(s.as_array(), [0.0, 0.0, 1.0]);
        let s = stokes_from_density(&BasisLabel::D.ket().density());
        assert_abs_diff_eq!(s.s1, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.s2, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.s3, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let h = BasisLabel::H.ket().density();
        let d = BasisLabel::D.ket().density();
        let g = BasisLabel::G.ket().density();
        let r = BasisLabel::R.ket().density();
        assert_abs_diff_eq!(fidelity(&h, &h).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&g, &r).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&h, &d).unwrap(), 0.5, epsilon = 1e-12);
        let mixed = DensityMatrix2::maximally_mixed();
        assert_abs_diff_eq!(fidelity(&mixed, &mixed).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_rejects_unphysical() {
        let bad = density_from_stokes(StokesVector::new(1.2, 0.0, 0.0));
        let h = BasisLabel::H.ket().density();
        assert!(matches!(fidelity(&bad, &h), Err(Error::InvalidArgument(_))));
        assert!(fidelity_uhlmann(&h, &bad).is_err());
    }

    #[test]
    fn projection_examples() {
        let mixed = DensityMatrix2::maximally_mixed();
        assert!(project_physical(&mixed).unwrap().approx_eq(&mixed, 1e-15));

        let m = DensityMatrix2::from_real_imag([[1.1, 0.0], [0.0, -0.1]], [[0.0; 2]; 2]).unwrap();
        let p = project_physical(&m).unwrap();
        assert!(p.approx_eq(&BasisLabel::G.ket().density(), 1e-12));

        // (I + 1.2 sigma_1)/2 has eigenvalues 1.1 and -0.1 with eigenvectors
        // |H>, |V>; dropping -0.1 and renormalizing leaves |H><H|.
        let m = density_from_stokes(StokesVector::new(1.2, 0.0, 0.0));
        let p = project_physical(&m).unwrap();
        assert!(p.approx_eq(&BasisLabel::H.ket().density(), 1e-12));

        let zero = DensityMatrix2::from_real_imag([[0.0; 2]; 2], [[0.0; 2]; 2]).unwrap();
        assert!(project_physical(&zero).is_err());
    }

    #[test]
    fn mub_overlaps() {
        for a in BasisLabel::ALL {
            for b in BasisLabel::ALL {
                let o = a.ket().overlap(&b.ket());
                let expect = if a == b {
                    1.0
                } else if a.partner() == b {
                    0.0
                } else {
                    0.5
                };
                assert_abs_diff_eq!(o, expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn label_parse() {
        for l in BasisLabel::ALL {
            assert_eq!(l.as_str().parse::<BasisLabel>().unwrap(), l);
        }
        assert!("X".parse::<BasisLabel>().is_err());
    }

    #[test]
    fn gauge_prefers_amp_r_when_g_vanishes() {
        let k = QubitKet::from_amplitudes(C64::new(0.0, 0.0), C64::new(0.0, -1.0)).unwrap();
        let f = k.gauge_fixed();
        assert_abs_diff_eq!(f.amp_r().re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.amp_r().im, 0.0, epsilon = 1e-15);
    }
}
