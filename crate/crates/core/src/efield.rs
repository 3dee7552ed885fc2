// SPDX-License-Identifier: Apache-2.0

//! Internal electric field at NV⁻ sites and its spin coupling.
//!
//! Each NV paired with a donor carries −e; each donor nitrogen carries +e once,
//! no matter how many NV centers chose it. Nitrogen atoms that donated nothing
//! are neutral. Fields are in V/nm and couplings in MHz.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::lattice::DefectConfiguration;
use crate::scalar::Real;

/// e/(4πε₀) in V·nm.
pub const ELEMENTARY_COULOMB_V_NM: f64 = 1.439_964_547_9;

/// 1 Hz·cm/V expressed in MHz·nm/V.
pub const HZ_CM_PER_V_IN_MHZ_NM_PER_V: f64 = 1e7 * 1e-6;

/// Sources closer than this to the evaluation point are rejected, nm.
pub const SINGULAR_DISTANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalConstants<T> {
    /// Relative permittivity of diamond.
    pub eps_r: T,
    /// Axial susceptibility, Hz·cm/V.
    pub d_parallel: T,
    /// Transverse susceptibility, Hz·cm/V.
    pub d_perp: T,
    /// Orientation average of the transverse projection, √6/3.
    pub orientation_factor: T,
}

impl<T: Real> Default for PhysicalConstants<T> {
    fn default() -> Self {
        Self {
            eps_r: T::lit(5.7),
            d_parallel: T::lit(0.35),
            d_perp: T::lit(17.0),
            orientation_factor: T::lit(6f64.sqrt() / 3.0),
        }
    }
}

impl<T: Real> PhysicalConstants<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_r > T::zero() && self.d_parallel > T::zero() && self.d_perp > T::zero()) {
            return Err(Error::InvalidInput("eps_r and susceptibilities must be positive".into()));
        }
        Ok(())
    }

    /// e/(4πε₀ε_r) in V·nm: the field magnitude of a unit charge at 1 nm.
    pub fn coulomb_constant_over_eps(&self) -> T {
        T::lit(ELEMENTARY_COULOMB_V_NM) / self.eps_r
    }

    /// d_∥ in MHz·nm/V.
    pub fn d_parallel_mhz(&self) -> T {
        self.d_parallel * T::lit(HZ_CM_PER_V_IN_MHZ_NM_PER_V)
    }

    /// d_⊥ in MHz·nm/V.
    pub fn d_perp_mhz(&self) -> T {
        self.d_perp * T::lit(HZ_CM_PER_V_IN_MHZ_NM_PER_V)
    }
}

/// Electric field, V/nm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldVector<T>(pub Vec3<T>);

impl<T: Real> FieldVector<T> {
    pub fn magnitude(&self) -> T {
        self.0.norm()
    }
}

/// Electric-field coupling in the NV frame, MHz.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingVector<T> {
    pub pi_x: T,
    pub pi_y: T,
    pub pi_z: T,
}

impl<T: Real> CouplingVector<T> {
    pub fn new(pi_x: T, pi_y: T, pi_z: T) -> Self {
        Self { pi_x, pi_y, pi_z }
    }

    pub fn pi_perp(&self) -> T {
        self.pi_x.hypot(self.pi_y)
    }
}

/// Field of point charge `q` (units of e) at `source`, evaluated at `target`.
pub fn point_charge_field<T: Real>(q: T, source: Vec3<T>, target: Vec3<T>, k: T) -> Vec3<T> {
    let d = target - source;
    let r2 = d.norm_squared();
    d * (q * k / (r2 * r2.sqrt()))
}

/// Field at `target` from charges `(position, charge in e)`.
pub fn field_from_charges<T: Real>(
    target: Vec3<T>,
    charges: impl IntoIterator<Item = (Vec3<T>, T)>,
    constants: &PhysicalConstants<T>,
) -> Result<FieldVector<T>> {
    let k = constants.coulomb_constant_over_eps();
    let tiny = T::lit(SINGULAR_DISTANCE);
    let mut e = Vec3::zero();
    for (pos, q) in charges {
        let dist = (target - pos).norm();
        if dist < tiny {
            return Err(Error::SingularGeometry { nv: usize::MAX, distance: dist.as_f64() });
        }
        e += point_charge_field(q, pos, target, k);
    }
    Ok(FieldVector(e))
}

/// Field at NV `i` from every other charged NV and every donor nitrogen.
pub fn field_at(
    config: &DefectConfiguration,
    i: usize,
    constants: &PhysicalConstants<f64>,
) -> Result<FieldVector<f64>> {
    let donors = config.donors();
    field_at_with_donors(config, &donors, i, constants)
}

/// [`field_at`] with a precomputed donor list, for evaluating many NVs.
pub fn field_at_with_donors(
    config: &DefectConfiguration,
    donors: &[usize],
    i: usize,
    constants: &PhysicalConstants<f64>,
) -> Result<FieldVector<f64>> {
    if i >= config.nv_positions.len() {
        return Err(Error::InvalidInput(format!("NV index {i} out of range")));
    }
    let target = config.nv_positions[i];
    let negatives = config
        .nv_positions
        .iter()
        .zip(&config.pairing)
        .enumerate()
        .filter(|(k, (_, pair))| *k != i && pair.is_some())
        .map(|(_, (p, _))| (*p, -1.0));
    let positives = donors.iter().map(|&j| (config.n_positions[j], 1.0));
    field_from_charges(target, negatives.chain(positives), constants).map_err(|e| match e {
        Error::SingularGeometry { distance, .. } => Error::SingularGeometry { nv: i, distance },
        other => other,
    })
}

/// Fields at every NV of the configuration.
pub fn fields(config: &DefectConfiguration, constants: &PhysicalConstants<f64>) -> Result<Vec<FieldVector<f64>>> {
    let donors = config.donors();
    (0..config.nv_positions.len()).map(|i| field_at_with_donors(config, &donors, i, constants)).collect()
}

/// Projects a field onto the frame of an NV with symmetry axis `nv_axis`.
///
/// The transverse frame is fixed by [`Vec3::orthonormal_basis`]; only
/// `pi_perp` and `pi_z` are frame independent.
pub fn coupling_from_field<T: Real>(
    e: FieldVector<T>,
    nv_axis: Vec3<T>,
    constants: &PhysicalConstants<T>,
) -> CouplingVector<T> {
    let (ex, ey) = nv_axis.orthonormal_basis();
    let f = e.0;
    CouplingVector {
        pi_x: constants.d_perp_mhz() * f.dot(ex),
        pi_y: constants.d_perp_mhz() * f.dot(ey),
        pi_z: constants.d_parallel_mhz() * f.dot(nv_axis),
    }
}

/// Orientation-averaged transverse coupling (√6/3)·d_⊥·|E|, MHz.
pub fn isotropic_perp_coupling<T: Real>(e_magnitude: T, constants: &PhysicalConstants<T>) -> T {
    constants.orientation_factor * constants.d_perp_mhz() * e_magnitude
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use rand::Rng;

    fn c64() -> PhysicalConstants<f64> {
        PhysicalConstants::default()
    }

    fn single_pair(n_pos: Vec3<f64>) -> DefectConfiguration {
        DefectConfiguration::from_positions(vec![Vec3::zero()], vec![n_pos])
    }

    #[test]
    fn single_donor_at_five_nm() {
        // 1.4400 / 5.7 / 25 V/nm, pointing from the N⁺ through the NV
        let cfg = single_pair(Vec3::new(5.0, 0.0, 0.0));
        let e = field_at(&cfg, 0, &c64()).unwrap();
        let expected = 1.439_964_547_9 / 5.7 / 25.0;
        assert!((e.magnitude() - expected).abs() < 1e-15);
        assert!((expected - 1.0105e-2).abs() < 1e-5);
        assert!(e.0.x < 0.0 && e.0.y == 0.0 && e.0.z == 0.0);
    }

    #[test]
    fn symmetric_charges_cancel() {
        let e = field_from_charges(
            Vec3::zero(),
            [(Vec3::new(0.0, 2.0, 0.0), 1.0), (Vec3::new(0.0, -2.0, 0.0), 1.0)],
            &c64(),
        )
        .unwrap();
        assert!(e.magnitude() < 1e-16);
    }

    #[test]
    fn neutral_nitrogen_contributes_nothing() {
        let cfg = DefectConfiguration::from_positions(
            vec![Vec3::zero()],
            vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0)],
        );
        let lone = single_pair(Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(field_at(&cfg, 0, &c64()).unwrap(), field_at(&lone, 0, &c64()).unwrap());
    }

    #[test]
    fn shared_donor_counted_once() {
        let cfg = DefectConfiguration::from_positions(
            vec![Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)],
            vec![Vec3::zero()],
        );
        assert_eq!(cfg.donors(), vec![0]);
        let k = c64().coulomb_constant_over_eps();
        // +e at 1 nm pushes toward −x, −e at 2 nm pulls toward +x
        let e = field_at(&cfg, 0, &c64()).unwrap();
        assert!((e.0.x - (-k + k / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn coincident_source_is_singular() {
        let cfg = single_pair(Vec3::new(0.0, 0.0, 1e-9));
        assert!(matches!(field_at(&cfg, 0, &c64()), Err(Error::SingularGeometry { nv: 0, .. })));
    }

    #[test]
    fn coupling_zero_field() {
        let c = coupling_from_field(FieldVector(Vec3::zero()), Vec3::new(0.0, 0.0, 1.0), &c64());
        assert_eq!(c, CouplingVector::default());
    }

    #[test]
    fn transverse_coupling_magnitude() {
        let e = 1.011e-2;
        let c = coupling_from_field(FieldVector(Vec3::new(e, 0.0, 0.0)), Vec3::new(0.0, 0.0, 1.0), &c64());
        assert!((c.pi_perp() - 170.0 * e).abs() < 1e-12);
        assert!((c.pi_perp() - 1.72).abs() < 5e-3);
        let axial = coupling_from_field(FieldVector(Vec3::new(0.0, 0.0, e)), Vec3::new(0.0, 0.0, 1.0), &c64());
        assert!((axial.pi_z / c.pi_perp() - 0.35 / 17.0).abs() < 1e-14);
        assert_eq!(axial.pi_perp(), 0.0);
    }

    #[test]
    fn isotropic_ratio() {
        let k = c64();
        assert_eq!(isotropic_perp_coupling(0.0, &k), 0.0);
        let r = isotropic_perp_coupling(0.3, &k) / (k.d_perp_mhz() * 0.3);
        assert!((r - 6f64.sqrt() / 3.0).abs() < 1e-15);
        assert!((r - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn generic_over_f32() {
        let k = PhysicalConstants::<f32>::default();
        let e = field_from_charges(Vec3::new(0.0f32, 0.0, 0.0), [(Vec3::new(5.0, 0.0, 0.0), 1.0)], &k).unwrap();
        assert!((e.magnitude() - 1.0105e-2).abs() < 1e-6);
    }

    fn random_config(seed: u64, nv: usize, n: usize) -> DefectConfiguration {
        let mut rng = substream(seed, Purpose::Other(9), 0);
        let mut p = || Vec3::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
        let nvs = (0..nv).map(|_| p()).collect();
        let ns = (0..n).map(|_| p()).collect();
        DefectConfiguration::from_positions(nvs, ns)
    }

    #[test]
    fn brute_force_double_loop() {
        let cfg = random_config(1, 20, 30);
        let k = c64().coulomb_constant_over_eps();
        let fast = fields(&cfg, &c64()).unwrap();
        for (i, (&ri, got)) in cfg.nv_positions.iter().zip(&fast).enumerate() {
            let (mut ex, mut ey, mut ez) = (0.0, 0.0, 0.0);
            for (kk, rk) in cfg.nv_positions.iter().enumerate() {
                if kk == i {
                    continue;
                }
                let (dx, dy, dz) = (ri.x - rk.x, ri.y - rk.y, ri.z - rk.z);
                let r = (dx * dx + dy * dy + dz * dz).sqrt();
                ex -= k * dx / r.powi(3);
                ey -= k * dy / r.powi(3);
                ez -= k * dz / r.powi(3);
            }
            for (j, rj) in cfg.n_positions.iter().enumerate() {
                if !cfg.pairing.contains(&Some(j)) {
                    continue;
                }
                let (dx, dy, dz) = (ri.x - rj.x, ri.y - rj.y, ri.z - rj.z);
                let r = (dx * dx + dy * dy + dz * dz).sqrt();
                ex += k * dx / r.powi(3);
                ey += k * dy / r.powi(3);
                ez += k * dz / r.powi(3);
            }
            let f = got.0;
            let scale = (ex * ex + ey * ey + ez * ez).sqrt();
            let err = (f - Vec3::new(ex, ey, ez)).norm() / scale;
            assert!(err < 1e-12, "NV {i}: relative error {err}");
        }
    }
}
