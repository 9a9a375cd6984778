//! Grid approximations of the orbit-trapped set `S` and its filled hull `K̂`.
//!
//! Cells are indexed `(ix, iy)` over `[−r, r]²`, stored row-major by `iy`.
//! Membership is decided at one representative point per cell: the center,
//! except for the cell containing the origin, which is represented by 0.

use std::collections::VecDeque;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HolonomyError, Result};
use crate::germ::zero_tolerance;
use crate::map::{CompiledMap, MapExpr};
use crate::scalar::Field;

pub const DEFAULT_MAX_ITER: u64 = 10_000;
/// Relative slack on `|z| <= r` so that unit-modulus rotations do not drift out.
const ESCAPE_SLACK: f64 = 1e-9;
const ADMISSIBILITY_MESH: usize = 48;
const MAX_SEARCH_RING: usize = 64;
/// Samples on `|z| = cell_size` used to decide whether 0 is interior. Tangencies
/// at 0 (parabolic petals) open cusps far thinner than a cell.
const ZERO_RING_SAMPLES: usize = 4096;

/// A disk `|z| < r` on whose closure `f` and `f⁻¹` were checked to be evaluable
/// with nonvanishing derivative on a sample mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleDisk {
    radius: f64,
}

impl AdmissibleDisk {
    pub fn check(f: &CompiledMap<Complex64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(HolonomyError::Config(format!("radius must be positive, got {radius}")));
        }
        let reach = radius * 1.01;
        let inv = f.inverse();
        for (name, map) in [("f", f), ("f^-1", &inv)] {
            if let Some([_, _, c, d]) = map.as_mobius() {
                if c.norm() > 0.0 && (d / c).norm() <= reach {
                    return Err(HolonomyError::Inadmissible(format!(
                        "{name} has a pole at {} inside radius {radius}",
                        -d / c
                    )));
                }
            }
        }
        let m = ADMISSIBILITY_MESH;
        for iy in 0..=m {
            for ix in 0..=m {
                let z = Complex64::new(
                    -reach + 2.0 * reach * ix as f64 / m as f64,
                    -reach + 2.0 * reach * iy as f64 / m as f64,
                );
                if z.norm() > reach {
                    continue;
                }
                for (name, map) in [("f", f), ("f^-1", &inv)] {
                    match map.eval_with_derivative(&z) {
                        Some((_, d)) if d.norm() > 1e-12 => {}
                        _ => {
                            return Err(HolonomyError::Inadmissible(format!(
                                "{name} is not evaluable or not univalent near {z} (radius {radius})"
                            )))
                        }
                    }
                }
            }
        }
        Ok(AdmissibleDisk { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantSetGrid {
    radius: f64,
    resolution: usize,
    max_iter: u64,
    s: Vec<bool>,
    k: Vec<bool>,
    indeterminate: Vec<bool>,
    zero_ring_trapped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryContact {
    Contact,
    NoContact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPosition {
    Interior,
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nesting {
    SmallInLarge,
    LargeInSmall,
    Violation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestingReport {
    pub relation: Nesting,
    /// Max distance (in cells of the coarser grid) from small `K̂` to large `K̂`.
    pub small_in_large_offset: u64,
    pub large_in_small_offset: u64,
    pub tol_cells: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub checked: usize,
    pub max_offset_cells: u64,
    pub offending: usize,
    /// Images that could not be evaluated (poles, undefined inverse branch).
    pub unevaluable: usize,
    pub tol_cells: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub radius: f64,
    pub resolution: usize,
    pub max_iter: u64,
    pub map: String,
    pub checksum: String,
    pub cell_size: f64,
    pub s_cells: usize,
    pub k_cells: usize,
    pub indeterminate: usize,
}

#[derive(Clone, Copy)]
enum Fate {
    Trapped,
    Escaped,
    Indeterminate,
}

const LANES: usize = 8;

fn fate(z: Complex64, maps: &[&CompiledMap<Complex64>], bound2: f64, max_iter: u64) -> Fate {
    fates(&[z], maps, bound2, max_iter)[0]
}

/// Forward then backward orbits; the backward pass only runs on survivors.
fn fates(zs: &[Complex64], maps: &[&CompiledMap<Complex64>], bound2: f64, max_iter: u64) -> Vec<Fate> {
    let mut out = vec![Fate::Trapped; zs.len()];
    for map in maps {
        let live: Vec<usize> = (0..zs.len()).filter(|i| matches!(out[*i], Fate::Trapped)).collect();
        let pts: Vec<Complex64> = live.iter().map(|i| zs[*i]).collect();
        let res: Vec<Fate> = match map.as_mobius() {
            Some(m) => pts.chunks(LANES).flat_map(|c| mobius_orbits(c, &m, bound2, max_iter)).collect(),
            None => pts.iter().map(|z| general_orbit(*z, map, bound2, max_iter)).collect(),
        };
        for (i, f) in live.into_iter().zip(res) {
            out[i] = f;
        }
    }
    out
}

fn general_orbit(z: Complex64, map: &CompiledMap<Complex64>, bound2: f64, max_iter: u64) -> Fate {
    let mut w = z;
    for _ in 0..max_iter {
        match map.eval(&w) {
            Some(next) => w = next,
            None => return Fate::Indeterminate,
        }
        if w.norm_sqr() > bound2 {
            return Fate::Escaped;
        }
    }
    Fate::Trapped
}

/// Up to `LANES` interleaved orbits; independent lanes hide the division latency.
fn mobius_orbits(zs: &[Complex64], &[a, b, c, d]: &[Complex64; 4], bound2: f64, max_iter: u64) -> Vec<Fate> {
    let zero = Complex64::new(0.0, 0.0);
    let mut w = [zero; LANES];
    let mut live = [false; LANES];
    let mut out = [Fate::Trapped; LANES];
    w[..zs.len()].copy_from_slice(zs);
    live[..zs.len()].iter_mut().for_each(|l| *l = true);
    let mut remaining = zs.len();
    for _ in 0..max_iter {
        if remaining == 0 {
            break;
        }
        for j in 0..LANES {
            let den = c * w[j] + d;
            let n2 = den.norm_sqr();
            w[j] = (a * w[j] + b) * den.conj() / n2;
            let m2 = w[j].norm_sqr();
            if live[j] && !(m2 <= bound2) {
                live[j] = false;
                remaining -= 1;
                out[j] = if n2 == 0.0 || !m2.is_finite() {
                    Fate::Indeterminate
                } else {
                    Fate::Escaped
                };
            }
            if !live[j] {
                w[j] = zero;
            }
        }
    }
    out[..zs.len()].to_vec()
}

impl InvariantSetGrid {
    fn empty(radius: f64, resolution: usize, max_iter: u64) -> Self {
        let n = resolution * resolution;
        InvariantSetGrid {
            radius,
            resolution,
            max_iter,
            s: vec![false; n],
            k: vec![false; n],
            indeterminate: vec![false; n],
            zero_ring_trapped: true,
        }
    }

    fn zero_ring(&self) -> Vec<Complex64> {
        let h = self.cell_size();
        (0..ZERO_RING_SAMPLES)
            .map(|k| Complex64::from_polar(h, std::f64::consts::TAU * k as f64 / ZERO_RING_SAMPLES as f64))
            .collect()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn max_iter(&self) -> u64 {
        self.max_iter
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * self.radius / self.resolution as f64
    }

    pub fn occupancy_s(&self) -> &[bool] {
        &self.s
    }

    pub fn occupancy_k(&self) -> &[bool] {
        &self.k
    }

    pub fn indeterminate_count(&self) -> usize {
        self.indeterminate.iter().filter(|b| **b).count()
    }

    pub fn zero_cell(&self) -> (usize, usize) {
        (self.resolution / 2, self.resolution / 2)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.resolution + ix
    }

    pub fn center(&self, ix: usize, iy: usize) -> Complex64 {
        let h = self.cell_size();
        Complex64::new(-self.radius + (ix as f64 + 0.5) * h, -self.radius + (iy as f64 + 0.5) * h)
    }

    pub fn representative(&self, ix: usize, iy: usize) -> Complex64 {
        if (ix, iy) == self.zero_cell() {
            Complex64::new(0.0, 0.0)
        } else {
            self.center(ix, iy)
        }
    }

    pub fn in_disk(&self, ix: usize, iy: usize) -> bool {
        self.representative(ix, iy).norm() <= self.radius
    }

    /// Fractional cell coordinates of `z` (may lie outside the frame).
    fn coords(&self, z: Complex64) -> (f64, f64) {
        let h = self.cell_size();
        ((z.re + self.radius) / h, (z.im + self.radius) / h)
    }

    pub fn cell_of(&self, z: Complex64) -> Option<(usize, usize)> {
        let (x, y) = self.coords(z);
        let n = self.resolution as f64;
        (x >= 0.0 && y >= 0.0 && x < n && y < n).then_some((x as usize, y as usize))
    }

    pub fn in_s(&self, ix: usize, iy: usize) -> bool {
        self.s[self.index(ix, iy)]
    }

    pub fn in_k(&self, ix: usize, iy: usize) -> bool {
        self.k[self.index(ix, iy)]
    }

    /// Builds a grid from an externally computed `S` (e.g. an analytic oracle).
    pub fn from_membership(radius: f64, resolution: usize, max_iter: u64, member: impl Fn(Complex64) -> bool) -> Self {
        let mut g = Self::empty(radius, resolution, max_iter);
        for iy in 0..resolution {
            for ix in 0..resolution {
                let idx = g.index(ix, iy);
                g.s[idx] = g.in_disk(ix, iy) && member(g.representative(ix, iy));
            }
        }
        g.zero_ring_trapped = g.zero_ring().into_iter().all(&member);
        g.k = g.s.clone();
        g
    }

    /// `K̂` cells with an 8-neighbour outside `K̂` (the frame counts as outside).
    pub fn boundary_cells(&self) -> Vec<bool> {
        let n = self.resolution as i64;
        let mut out = vec![false; self.k.len()];
        for iy in 0..n {
            for ix in 0..n {
                let idx = (iy * n + ix) as usize;
                if !self.k[idx] {
                    continue;
                }
                out[idx] = (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        let (x, y) = (ix + dx, iy + dy);
                        x < 0 || y < 0 || x >= n || y >= n || !self.k[(y * n + x) as usize]
                    })
                });
            }
        }
        out
    }

    /// Flood fill from the frame through non-`S` cells (4-connected); every
    /// unreached cell joins `K̂`.
    pub fn fill_complement(&mut self) {
        let n = self.resolution;
        let mut reached = vec![false; n * n];
        let mut queue = VecDeque::new();
        for i in 0..n {
            for (ix, iy) in [(i, 0), (i, n - 1), (0, i), (n - 1, i)] {
                let idx = iy * n + ix;
                if !self.s[idx] && !reached[idx] {
                    reached[idx] = true;
                    queue.push_back((ix, iy));
                }
            }
        }
        while let Some((ix, iy)) = queue.pop_front() {
            let neighbours = [
                (ix.wrapping_sub(1), iy),
                (ix + 1, iy),
                (ix, iy.wrapping_sub(1)),
                (ix, iy + 1),
            ];
            for (x, y) in neighbours {
                if x >= n || y >= n {
                    continue;
                }
                let idx = y * n + x;
                if !self.s[idx] && !reached[idx] {
                    reached[idx] = true;
                    queue.push_back((x, y));
                }
            }
        }
        self.k = self.s.iter().zip(&reached).map(|(s, r)| *s || !r).collect();
    }

    /// Distance from `z` to the nearest `K̂` square, in cells (floored);
    /// `None` if no `K̂` cell lies within the search window.
    fn offset_to_k(&self, z: Complex64, unit: f64) -> Option<u64> {
        let h = self.cell_size();
        let n = self.resolution as i64;
        let (fx, fy) = self.coords(z);
        let (cx, cy) = (fx.floor() as i64, fy.floor() as i64);
        let mut best = f64::INFINITY;
        for ring in 0..=MAX_SEARCH_RING as i64 {
            if (ring as f64 - 1.0) * h > best {
                break;
            }
            for y in cy - ring..=cy + ring {
                for x in cx - ring..=cx + ring {
                    if (x - cx).abs() != ring && (y - cy).abs() != ring {
                        continue;
                    }
                    if x < 0 || y < 0 || x >= n || y >= n || !self.k[(y * n + x) as usize] {
                        continue;
                    }
                    let x0 = -self.radius + x as f64 * h;
                    let y0 = -self.radius + y as f64 * h;
                    let dx = (x0 - z.re).max(0.0).max(z.re - x0 - h);
                    let dy = (y0 - z.im).max(0.0).max(z.im - y0 - h);
                    best = best.min(dx.hypot(dy));
                }
            }
        }
        best.is_finite().then(|| (best / unit).floor() as u64)
    }

    pub fn boundary_contact(&self) -> BoundaryContact {
        let h = self.cell_size();
        let inner = self.radius - h;
        let n = self.resolution;
        for iy in 0..n {
            for ix in 0..n {
                if !self.in_k(ix, iy) {
                    continue;
                }
                let x0 = -self.radius + ix as f64 * h;
                let y0 = -self.radius + iy as f64 * h;
                let near_x = 0f64.clamp(x0, x0 + h);
                let near_y = 0f64.clamp(y0, y0 + h);
                let far_x = if x0.abs() > (x0 + h).abs() { x0 } else { x0 + h };
                let far_y = if y0.abs() > (y0 + h).abs() { y0 } else { y0 + h };
                if near_x.hypot(near_y) <= self.radius && far_x.hypot(far_y) >= inner {
                    return BoundaryContact::Contact;
                }
            }
        }
        BoundaryContact::NoContact
    }

    /// `Interior` needs the 8 neighbours of the 0-cell in `K̂` and every
    /// sample on the circle `|z| = cell_size` trapped.
    pub fn zero_boundary_position(&self) -> ZeroPosition {
        let (zx, zy) = self.zero_cell();
        let n = self.resolution as i64;
        let all = (-1i64..=1).all(|dy| {
            (-1i64..=1).all(|dx| {
                let (x, y) = (zx as i64 + dx, zy as i64 + dy);
                x >= 0 && y >= 0 && x < n && y < n && self.k[(y * n + x) as usize]
            })
        });
        if all && self.zero_ring_trapped {
            ZeroPosition::Interior
        } else {
            ZeroPosition::Boundary
        }
    }

    /// Largest distance (in units of `unit`) from a `K̂` representative of
    /// `self` to `K̂` of `other`.
    fn max_offset_into(&self, other: &InvariantSetGrid, unit: f64) -> u64 {
        let n = self.resolution;
        (0..n * n)
            .into_par_iter()
            .filter(|idx| self.k[*idx])
            .map(|idx| {
                let z = self.representative(idx % n, idx / n);
                other.offset_to_k(z, unit).unwrap_or(u64::MAX)
            })
            .max()
            .unwrap_or(0)
    }

    /// Hausdorff distance between the `K̂` sets of two grids on the same frame, in cells.
    pub fn hausdorff_cells(&self, other: &InvariantSetGrid) -> Result<f64> {
        if self.resolution != other.resolution || self.radius != other.radius {
            return Err(HolonomyError::Precondition("grids must share a frame".into()));
        }
        let n = self.resolution as i64;
        let one_way = |a: &[bool], b: &[bool]| -> f64 {
            (0..n * n)
                .into_par_iter()
                .filter(|i| a[*i as usize] && !b[*i as usize])
                .map(|i| {
                    let (cx, cy) = (i % n, i / n);
                    let mut best = f64::INFINITY;
                    for ring in 1..=MAX_SEARCH_RING as i64 {
                        if (ring as f64) > best {
                            break;
                        }
                        for y in cy - ring..=cy + ring {
                            for x in cx - ring..=cx + ring {
                                if ((x - cx).abs() == ring || (y - cy).abs() == ring)
                                    && x >= 0
                                    && y >= 0
                                    && x < n
                                    && y < n
                                    && b[(y * n + x) as usize]
                                {
                                    best = best.min(((x - cx) as f64).hypot((y - cy) as f64));
                                }
                            }
                        }
                    }
                    best
                })
                .reduce(|| 0.0, f64::max)
        };
        Ok(one_way(&self.k, &other.k).max(one_way(&other.k, &self.k)))
    }

    /// P5 image, top row = largest imaginary part: 0 outside, 128 `S`, 255 `K̂ \ S`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let n = self.resolution;
        let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
        for row in 0..n {
            let iy = n - 1 - row;
            for ix in 0..n {
                let idx = self.index(ix, iy);
                out.push(if self.s[idx] {
                    128
                } else if self.k[idx] {
                    255
                } else {
                    0
                });
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ix,iy,set\n");
        for iy in 0..self.resolution {
            for ix in 0..self.resolution {
                let idx = self.index(ix, iy);
                if self.s[idx] {
                    out.push_str(&format!("{ix},{iy},S\n"));
                } else if self.k[idx] {
                    out.push_str(&format!("{ix},{iy},K\n"));
                }
            }
        }
        out
    }

    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_pgm()))
    }

    pub fn metadata(&self, map: &str) -> GridMetadata {
        GridMetadata {
            radius: self.radius,
            resolution: self.resolution,
            max_iter: self.max_iter,
            map: map.to_string(),
            checksum: self.checksum(),
            cell_size: self.cell_size(),
            s_cells: self.s.iter().filter(|b| **b).count(),
            k_cells: self.k.iter().filter(|b| **b).count(),
            indeterminate: self.indeterminate_count(),
        }
    }
}

fn validate_grid(resolution: usize) -> Result<()> {
    if !(2..=1 << 14).contains(&resolution) {
        return Err(HolonomyError::Config(format!("grid resolution {resolution} outside 2..=16384")));
    }
    Ok(())
}

fn compute_s(
    disk: &AdmissibleDisk,
    resolution: usize,
    max_iter: u64,
    trapped: impl Fn(&[Complex64]) -> Vec<Fate> + Sync,
) -> Result<InvariantSetGrid> {
    validate_grid(resolution)?;
    let mut g = InvariantSetGrid::empty(disk.radius, resolution, max_iter);
    // Row blocks in parallel; each row is evaluated as one batch.
    let rows: Vec<Vec<(usize, Fate)>> = (0..resolution)
        .into_par_iter()
        .map(|iy| {
            let cells: Vec<usize> = (0..resolution).filter(|ix| g.in_disk(*ix, iy)).collect();
            let pts: Vec<Complex64> = cells.iter().map(|ix| g.representative(*ix, iy)).collect();
            cells.into_iter().map(|ix| g.index(ix, iy)).zip(trapped(&pts)).collect()
        })
        .collect();
    for (idx, f) in rows.into_iter().flatten() {
        match f {
            Fate::Trapped => g.s[idx] = true,
            Fate::Indeterminate => g.indeterminate[idx] = true,
            Fate::Escaped => {}
        }
    }
    g.zero_ring_trapped = g
        .zero_ring()
        .par_chunks(64)
        .all(|zs| trapped(zs).iter().all(|f| matches!(f, Fate::Trapped)));
    g.k = g.s.clone();
    Ok(g)
}

/// Cells whose representative stays in the closed disk for `|n| <= max_iter`.
pub fn trapped_set(
    f: &CompiledMap<Complex64>,
    disk: &AdmissibleDisk,
    resolution: usize,
    max_iter: u64,
) -> Result<InvariantSetGrid> {
    let inv = f.inverse();
    let bound2 = (disk.radius * (1.0 + ESCAPE_SLACK)).powi(2);
    compute_s(disk, resolution, max_iter, |zs| fates(zs, &[f, &inv], bound2, max_iter))
}

/// `trapped_set` followed by `fill_complement`.
pub fn hedgehog(f: &CompiledMap<Complex64>, disk: &AdmissibleDisk, resolution: usize, max_iter: u64) -> Result<InvariantSetGrid> {
    let mut g = trapped_set(f, disk, resolution, max_iter)?;
    g.fill_complement();
    Ok(g)
}

pub fn verify_complete_invariance(grid: &InvariantSetGrid, f: &CompiledMap<Complex64>, tol_cells: u64) -> InvarianceReport {
    let inv = f.inverse();
    let n = grid.resolution;
    let h = grid.cell_size();
    let per_cell: Vec<(u64, usize, usize)> = (0..n * n)
        .into_par_iter()
        .filter(|idx| grid.k[*idx])
        .map(|idx| {
            let z = grid.representative(idx % n, idx / n);
            let mut worst = 0;
            let mut bad = 0;
            let mut unevaluable = 0;
            for map in [f, &inv] {
                match map.eval(&z) {
                    Some(w) => {
                        let off = grid.offset_to_k(w, h).unwrap_or(MAX_SEARCH_RING as u64);
                        worst = worst.max(off);
                        if off > tol_cells {
                            bad += 1;
                        }
                    }
                    None => unevaluable += 1,
                }
            }
            (worst, bad, unevaluable)
        })
        .collect();
    InvarianceReport {
        checked: per_cell.len(),
        max_offset_cells: per_cell.iter().map(|c| c.0).max().unwrap_or(0),
        offending: per_cell.iter().map(|c| c.1).sum(),
        unevaluable: per_cell.iter().map(|c| c.2).sum(),
        tol_cells,
    }
}

/// Containment of filled sets up to `tol_cells`, measured in cells of the coarser grid.
pub fn nesting_check(small: &InvariantSetGrid, large: &InvariantSetGrid, tol_cells: u64) -> NestingReport {
    let unit = small.cell_size().max(large.cell_size());
    let a = small.max_offset_into(large, unit);
    let b = large.max_offset_into(small, unit);
    let relation = if a <= tol_cells {
        Nesting::SmallInLarge
    } else if b <= tol_cells {
        Nesting::LargeInSmall
    } else {
        Nesting::Violation
    };
    NestingReport {
        relation,
        small_in_large_offset: a,
        large_in_small_offset: b,
        tol_cells,
    }
}

/// Trapped set of the group generated by a commuting pair: every word
/// `f^a g^b` with `|a|, |b| <= max_iter` must stay in the closed disk. Filled.
pub fn common_invariant_set(
    f: &MapExpr,
    g: &MapExpr,
    disk: &AdmissibleDisk,
    resolution: usize,
    max_iter: u64,
) -> Result<InvariantSetGrid> {
    let field = Field::float(crate::scalar::DEFAULT_FLOAT_BITS)?;
    let (fg, gg) = (f.to_germ(24, field)?, g.to_germ(24, field)?);
    let defect = fg.commutator_defect(&gg)?;
    let tolerance = zero_tolerance(field);
    if defect > tolerance {
        return Err(HolonomyError::NonCommuting { defect, tolerance });
    }
    let fc: CompiledMap<Complex64> = f.compile(53)?;
    let gc: CompiledMap<Complex64> = g.compile(53)?;
    AdmissibleDisk::check(&gc, disk.radius)?;
    let (fi, gi) = (fc.inverse(), gc.inverse());
    let bound2 = (disk.radius * (1.0 + ESCAPE_SLACK)).powi(2);
    let word_fate = |z: Complex64| {
        let mut any_indeterminate = false;
        for gmap in [&gc, &gi] {
            let mut w = z;
            for step in 0..=max_iter {
                if step > 0 {
                    match gmap.eval(&w) {
                        Some(next) => w = next,
                        None => return Fate::Indeterminate,
                    }
                    if w.norm_sqr() > bound2 {
                        return Fate::Escaped;
                    }
                }
                match fate(w, &[&fc, &fi], bound2, max_iter) {
                    Fate::Escaped => return Fate::Escaped,
                    Fate::Indeterminate => any_indeterminate = true,
                    Fate::Trapped => {}
                }
            }
        }
        if any_indeterminate {
            Fate::Indeterminate
        } else {
            Fate::Trapped
        }
    };
    let mut grid = compute_s(disk, resolution, max_iter, |zs| zs.iter().map(|z| word_fate(*z)).collect())?;
    grid.fill_complement();
    Ok(grid)
}

/// Runs `op` on a pool with `workers` threads (`None`: all cores).
pub fn with_workers<R: Send>(workers: Option<usize>, op: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(op()),
        Some(0) => Err(HolonomyError::Config("--workers must be at least 1".into())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| HolonomyError::Config(e.to_string()))?;
            Ok(pool.install(op))
        }
    }
}
