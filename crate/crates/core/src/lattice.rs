// SPDX-License-Identifier: Apache-2.0

//! Random NV⁻ / N configurations inside a diamond sphere.
//!
//! Defects are placed uniformly in the ball, one at a time, rejecting any
//! candidate closer than `min_separation` to an already placed defect. All
//! nitrogen atoms are placed first and NV centers second, so a configuration
//! with fewer NV centers drawn from the same substream is an exact prefix of
//! one with more. Each NV is then paired with its nearest nitrogen atom.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::rng::{substream, Purpose};

/// Atomic number density of diamond, atoms/nm³.
pub const DIAMOND_CARBON_DENSITY: f64 = 176.0;

/// Carbon density that reproduces 7.93×10⁷ atoms in a 100 nm sphere.
pub const REFERENCE_SPHERE_CARBON_DENSITY: f64 = 7.93e7 / (4.0 / 3.0 * PI * 125_000.0);

/// One diamond lattice constant, nm.
pub const DIAMOND_LATTICE_CONSTANT: f64 = 0.357;

/// Consecutive rejected candidates after which placement gives up.
pub const MAX_CONSECUTIVE_REJECTIONS: u64 = 1_000_000;

/// Geometry and composition of a simulated diamond sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeSpec {
    /// nm
    pub sphere_diameter: f64,
    /// ppm
    pub nv_concentration: f64,
    /// ppm
    pub n_concentration: f64,
    /// atoms/nm³
    pub carbon_density: f64,
    /// Exclusion radius between any two defects, nm.
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            sphere_diameter: 100.0,
            nv_concentration: 3.0,
            n_concentration: 200.0,
            carbon_density: DIAMOND_CARBON_DENSITY,
            min_separation: DIAMOND_LATTICE_CONSTANT,
            seed: 0,
        }
    }
}

impl LatticeSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(self.sphere_diameter > 0.0 && self.sphere_diameter.is_finite()) {
            return bad("sphere_diameter must be positive");
        }
        if !(self.nv_concentration >= 0.0 && self.n_concentration >= 0.0) {
            return bad("concentrations must be non-negative");
        }
        if !(self.carbon_density > 0.0 && self.carbon_density.is_finite()) {
            return bad("carbon_density must be positive");
        }
        if !(self.min_separation >= 0.0) {
            return bad("min_separation must be non-negative");
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.sphere_diameter
    }

    /// nm³
    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius().powi(3)
    }

    pub fn carbon_atoms(&self) -> f64 {
        self.carbon_density * self.volume()
    }

    pub fn with_nv_concentration(&self, ppm: f64) -> Self {
        Self { nv_concentration: ppm, ..self.clone() }
    }

    pub fn with_n_concentration(&self, ppm: f64) -> Self {
        Self { n_concentration: ppm, ..self.clone() }
    }
}

fn ppm_to_count(ppm: f64, carbon_atoms: f64) -> usize {
    (ppm * 1e-6 * carbon_atoms).round() as usize
}

/// Number of NV centers and nitrogen atoms in the sphere.
pub fn defect_counts(spec: &LatticeSpec) -> (usize, usize) {
    let carbon = spec.carbon_atoms();
    (ppm_to_count(spec.nv_concentration, carbon), ppm_to_count(spec.n_concentration, carbon))
}

/// Sampled defect positions plus the NV → donor-N pairing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectConfiguration {
    pub nv_positions: Vec<Vec3<f64>>,
    pub n_positions: Vec<Vec3<f64>>,
    /// `pairing[i]` is the nearest N atom to NV `i`; `None` only when there is
    /// no nitrogen at all.
    pub pairing: Vec<Option<usize>>,
}

impl DefectConfiguration {
    /// Builds a configuration from explicit positions, pairing every NV with
    /// its nearest nitrogen (lowest index on ties).
    pub fn from_positions(nv_positions: Vec<Vec3<f64>>, n_positions: Vec<Vec3<f64>>) -> Self {
        let pairing = if n_positions.is_empty() {
            vec![None; nv_positions.len()]
        } else {
            let grid = CellGrid::covering(&n_positions);
            nv_positions.iter().map(|&p| Some(grid.nearest(p, &n_positions).0)).collect()
        };
        Self { nv_positions, n_positions, pairing }
    }

    /// Distance from each NV to its paired nitrogen.
    pub fn pair_distances(&self) -> Vec<f64> {
        self.nv_positions
            .iter()
            .zip(&self.pairing)
            .filter_map(|(p, j)| j.map(|j| (*p - self.n_positions[j]).norm()))
            .collect()
    }

    /// Nitrogen atoms that donated an electron (each counted once).
    pub fn donors(&self) -> Vec<usize> {
        let mut is_donor = vec![false; self.n_positions.len()];
        for j in self.pairing.iter().flatten() {
            is_donor[*j] = true;
        }
        (0..self.n_positions.len()).filter(|&j| is_donor[j]).collect()
    }

    /// Keeps only the first `count` NV centers (and their pairings).
    pub fn truncate_nv(&mut self, count: usize) {
        self.nv_positions.truncate(count);
        self.pairing.truncate(count);
    }

    /// Writes `kind,x_nm,y_nm,z_nm,pair_index`; N rows leave `pair_index` empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kind", "x_nm", "y_nm", "z_nm", "pair_index"])?;
        for (p, pair) in self.nv_positions.iter().zip(&self.pairing) {
            let pair = pair.map(|j| j.to_string()).unwrap_or_default();
            w.write_record(["NV", &p.x.to_string(), &p.y.to_string(), &p.z.to_string(), &pair])?;
        }
        for p in &self.n_positions {
            w.write_record(["N", &p.x.to_string(), &p.y.to_string(), &p.z.to_string(), ""])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Configuration for trial 0 of `spec.seed`.
pub fn sample_configuration(spec: &LatticeSpec) -> Result<DefectConfiguration> {
    sample_configuration_trial(spec, 0)
}

/// Configuration for an arbitrary trial index; trials are independent.
pub fn sample_configuration_trial(spec: &LatticeSpec, trial: u64) -> Result<DefectConfiguration> {
    spec.validate()?;
    let (nv_count, n_count) = defect_counts(spec);
    let mut rng = substream(spec.seed, Purpose::Placement, trial);
    let mut placer = Placer::new(spec, nv_count + n_count);
    let n_positions = placer.place(&mut rng, n_count)?;
    let nv_positions = placer.place(&mut rng, nv_count)?;
    Ok(DefectConfiguration::from_positions(nv_positions, n_positions))
}

/// Nearest-nitrogen distance for a probe NV fixed at the sphere center, one
/// value per trial. Nitrogen placement follows the same rules as
/// [`sample_configuration`], with the probe occupying the center.
pub fn pair_distance_samples(spec: &LatticeSpec, trials: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let (_, n_count) = defect_counts(spec);
    if n_count == 0 {
        return Err(Error::InvalidInput("no nitrogen atoms in the sphere".into()));
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(spec.seed, Purpose::Placement, trial);
            let mut placer = Placer::new(spec, n_count + 1);
            placer.insert(Vec3::zero());
            let n = placer.place(&mut rng, n_count)?;
            Ok(n.iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min))
        })
        .collect()
}

fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Vec3<f64> {
    loop {
        let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm_squared() < 1.0 {
            return p * radius;
        }
    }
}

/// Sequential rejection placement backed by a cell grid.
struct Placer {
    radius: f64,
    min_sep_sq: f64,
    total: usize,
    grid: CellGrid,
    points: Vec<Vec3<f64>>,
}

impl Placer {
    fn new(spec: &LatticeSpec, capacity: usize) -> Self {
        let radius = spec.radius();
        let typical = (spec.volume() / capacity.max(1) as f64).cbrt();
        let cell = spec.min_separation.max(typical).max(radius / 128.0);
        Self {
            radius,
            min_sep_sq: spec.min_separation * spec.min_separation,
            total: capacity,
            grid: CellGrid::new(Vec3::new(-radius, -radius, -radius), 2.0 * radius, cell, capacity),
            points: Vec::with_capacity(capacity),
        }
    }

    fn insert(&mut self, p: Vec3<f64>) {
        self.grid.insert(p, self.points.len());
        self.points.push(p);
    }

    fn place<R: Rng + ?Sized>(&mut self, rng: &mut R, count: usize) -> Result<Vec<Vec3<f64>>> {
        let mut placed = Vec::with_capacity(count);
        for _ in 0..count {
            let mut attempts = 0u64;
            let p = loop {
                let candidate = uniform_in_ball(rng, self.radius);
                if self.min_sep_sq == 0.0 || !self.grid.any_within(candidate, self.min_sep_sq, &self.points) {
                    break candidate;
                }
                attempts += 1;
                if attempts >= MAX_CONSECUTIVE_REJECTIONS {
                    return Err(Error::Packing { placed: self.points.len(), total: self.total, attempts });
                }
            };
            self.insert(p);
            placed.push(p);
        }
        Ok(placed)
    }
}

/// Uniform cell grid over a cube with per-cell linked lists of point indices.
struct CellGrid {
    origin: Vec3<f64>,
    cell: f64,
    dim: usize,
    head: Vec<u32>,
    next: Vec<u32>,
}

const EMPTY: u32 = u32::MAX;

impl CellGrid {
    fn new(origin: Vec3<f64>, extent: f64, cell: f64, capacity: usize) -> Self {
        let dim = ((extent / cell).ceil() as usize).clamp(1, 256);
        let cell = extent / dim as f64;
        Self { origin, cell, dim, head: vec![EMPTY; dim * dim * dim], next: Vec::with_capacity(capacity) }
    }

    fn covering(points: &[Vec3<f64>]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        let extent = (hi.x - lo.x).max(hi.y - lo.y).max(hi.z - lo.z).max(1e-9) * (1.0 + 1e-9);
        let cell = extent / (points.len() as f64).cbrt().ceil().max(1.0);
        let mut grid = Self::new(lo, extent, cell, points.len());
        for (i, p) in points.iter().enumerate() {
            grid.insert(*p, i);
        }
        grid
    }

    fn coord(&self, v: f64) -> isize {
        ((v / self.cell).floor() as isize).clamp(0, self.dim as isize - 1)
    }

    fn cell_of(&self, p: Vec3<f64>) -> [isize; 3] {
        let d = p - self.origin;
        [self.coord(d.x), self.coord(d.y), self.coord(d.z)]
    }

    fn index(&self, c: [isize; 3]) -> usize {
        (c[0] as usize * self.dim + c[1] as usize) * self.dim + c[2] as usize
    }

    fn insert(&mut self, p: Vec3<f64>, id: usize) {
        let k = self.index(self.cell_of(p));
        debug_assert_eq!(id, self.next.len());
        self.next.push(self.head[k]);
        self.head[k] = id as u32;
    }

    fn for_each_in_cell(&self, c: [isize; 3], mut f: impl FnMut(usize)) {
        let n = self.dim as isize;
        if c.iter().any(|&x| x < 0 || x >= n) {
            return;
        }
        let mut id = self.head[self.index(c)];
        while id != EMPTY {
            f(id as usize);
            id = self.next[id as usize];
        }
    }

    fn any_within(&self, p: Vec3<f64>, r_sq: f64, points: &[Vec3<f64>]) -> bool {
        let reach = (r_sq.sqrt() / self.cell).ceil() as isize;
        let c = self.cell_of(p);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    let mut hit = false;
                    self.for_each_in_cell([c[0] + dx, c[1] + dy, c[2] + dz], |id| {
                        hit |= (points[id] - p).norm_squared() < r_sq;
                    });
                    if hit {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Exact nearest point: scans Chebyshev shells of cells outward until the
    /// best distance cannot be beaten by any unvisited cell.
    fn nearest(&self, p: Vec3<f64>, points: &[Vec3<f64>]) -> (usize, f64) {
        let c = self.cell_of(p);
        let mut best = (usize::MAX, f64::INFINITY);
        // Distance from p to the boundary of its own cell bounds what shell k can offer.
        let d = p - self.origin;
        let local = |v: f64, ci: isize| {
            let lo = v - ci as f64 * self.cell;
            lo.min(self.cell - lo).max(0.0)
        };
        let margin = local(d.x, c[0]).min(local(d.y, c[1])).min(local(d.z, c[2]));
        for k in 0..=(self.dim as isize) {
            for dx in -k..=k {
                for dy in -k..=k {
                    for dz in -k..=k {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != k {
                            continue;
                        }
                        self.for_each_in_cell([c[0] + dx, c[1] + dy, c[2] + dz], |id| {
                            let d = (points[id] - p).norm_squared();
                            if d < best.1 || (d == best.1 && id < best.0) {
                                best = (id, d);
                            }
                        });
                    }
                }
            }
            // Every point outside shells 0..=k is at least this far away.
            let reach = k as f64 * self.cell + margin;
            if best.0 != usize::MAX && best.1 <= reach * reach {
                break;
            }
        }
        (best.0, best.1.sqrt())
    }
}
