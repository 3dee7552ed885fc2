// SPDX-License-Identifier: Apache-2.0

//! NV⁻ ground-state spin Hamiltonian under electric coupling.
//!
//! In the basis |+1⟩, |0⟩, |−1⟩ the Hamiltonian
//! `(D + σ + Π_z) S_z² + Π_x (S_y² − S_x²) + Π_y (S_x S_y + S_y S_x)`
//! only couples |+1⟩ and |−1⟩, so its eigenvalues are `0` and
//! `D + σ + Π_z ± Π_⊥`. Adding `A_zz I_z S_z` for the host ¹⁴N shifts the
//! diagonal of that block by `±A_zz m_I`, which gives `±√(Π_⊥² + A_zz² m_I²)`.

use nalgebra::{Complex, SMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::efield::CouplingVector;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpinModelParams<T> {
    /// Zero-field splitting, MHz.
    pub d_gs: T,
    /// ¹⁴N axial hyperfine constant, MHz.
    pub a_zz: T,
    /// Standard deviation of the Gaussian zero-field offset (1/T₂*), MHz.
    pub dephasing_rate: T,
    pub include_hyperfine: bool,
}

impl<T: Real> Default for SpinModelParams<T> {
    fn default() -> Self {
        Self { d_gs: T::lit(2870.0), a_zz: T::lit(-2.16), dephasing_rate: T::zero(), include_hyperfine: false }
    }
}

impl<T: Real> SpinModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_gs > T::zero()) {
            return Err(Error::InvalidInput("d_gs must be positive".into()));
        }
        if !(self.dephasing_rate >= T::zero()) {
            return Err(Error::InvalidInput("dephasing_rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// m_s = 0 → ±1 transition frequencies with their relative weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSet<T> {
    /// MHz, ascending.
    pub frequencies: Vec<T>,
    /// Non-negative, summing to one.
    pub weights: Vec<T>,
}

/// The three eigenvalues without hyperfine coupling: `[0, D′ − Π_⊥, D′ + Π_⊥]`.
pub fn eigenvalues<T: Real>(coupling: &CouplingVector<T>, params: &SpinModelParams<T>, d_offset: T) -> [T; 3] {
    let d = params.d_gs + d_offset + coupling.pi_z;
    let p = coupling.pi_perp();
    [T::zero(), d - p, d + p]
}

/// Transition frequencies from the m_s = 0 manifold.
///
/// Without hyperfine: two lines of weight ½. With hyperfine: six lines of
/// weight ⅙, two per nuclear projection m_I ∈ {−1, 0, +1}.
pub fn resonances<T: Real>(coupling: &CouplingVector<T>, params: &SpinModelParams<T>, d_offset: T) -> ResonanceSet<T> {
    let d = params.d_gs + d_offset + coupling.pi_z;
    let p = coupling.pi_perp();
    if !params.include_hyperfine {
        let half = T::lit(0.5);
        return ResonanceSet { frequencies: vec![d - p, d + p], weights: vec![half, half] };
    }
    let q = p.hypot(params.a_zz);
    let mut frequencies = vec![d - q, d - q, d - p, d + p, d + q, d + q];
    frequencies.sort_by(|a, b| a.partial_cmp(b).expect("finite resonance"));
    ResonanceSet { frequencies, weights: vec![T::one() / T::lit(6.0); 6] }
}

/// Gaussian zero-field offset σ ~ N(0, dephasing_rate). Always consumes one
/// normal draw so later draws do not depend on the rate.
pub fn sample_dephasing_offset<T: Real, R: Rng + ?Sized>(params: &SpinModelParams<T>, rng: &mut R) -> T {
    let z: f64 = rng.sample(StandardNormal);
    params.dephasing_rate * T::lit(z)
}

/// Uniformly distributed NV symmetry axis.
pub fn sample_nv_axis<R: Rng + ?Sized>(rng: &mut R) -> Vec3<f64> {
    let cos_t: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t)
}

pub type Matrix3c = SMatrix<Complex<f64>, 3, 3>;
pub type Matrix9c = SMatrix<Complex<f64>, 9, 9>;

/// Spin-1 operators (S_x, S_y, S_z) in the basis |+1⟩, |0⟩, |−1⟩.
pub fn spin_one_operators() -> (Matrix3c, Matrix3c, Matrix3c) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| Complex::new(re, im);
    let z = c(0.0, 0.0);
    let sx = Matrix3c::new(z, c(s, 0.0), z, c(s, 0.0), z, c(s, 0.0), z, c(s, 0.0), z);
    let sy = Matrix3c::new(z, c(0.0, -s), z, c(0.0, s), z, c(0.0, -s), z, c(0.0, s), z);
    let sz = Matrix3c::new(c(1.0, 0.0), z, z, z, z, z, z, z, c(-1.0, 0.0));
    (sx, sy, sz)
}

/// Explicit 3×3 electron-spin Hamiltonian, MHz.
pub fn hamiltonian_matrix(coupling: &CouplingVector<f64>, params: &SpinModelParams<f64>, d_offset: f64) -> Matrix3c {
    let (sx, sy, sz) = spin_one_operators();
    let r = |x: f64| Complex::new(x, 0.0);
    (sz * sz) * r(params.d_gs + d_offset + coupling.pi_z)
        + (sy * sy - sx * sx) * r(coupling.pi_x)
        + (sx * sy + sy * sx) * r(coupling.pi_y)
}

/// Explicit 9×9 Hamiltonian on S ⊗ I including `A_zz I_z S_z`, MHz.
pub fn hyperfine_hamiltonian_matrix(
    coupling: &CouplingVector<f64>,
    params: &SpinModelParams<f64>,
    d_offset: f64,
) -> Matrix9c {
    let h = hamiltonian_matrix(coupling, params, d_offset);
    let (_, _, sz) = spin_one_operators();
    let id = Matrix3c::identity();
    let iz = sz;
    h.kronecker(&id) + sz.kronecker(&iz) * Complex::new(params.a_zz, 0.0)
}
