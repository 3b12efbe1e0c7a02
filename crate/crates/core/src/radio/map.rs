use std::io::Write;

use rayon::prelude::*;

use super::pathloss::{received_power_unchecked, Environment};
use crate::base::{Aabb, Vec3};
use crate::error::{Error, Result};

pub type CellIndex = [usize; 3];

/// Regular voxel grid anchored at `origin`. The extent is padded on the max
/// side when the resolution does not divide the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin: Vec3,
    pub resolution: f64,
    pub dims: [usize; 3],
}

impl Grid {
    pub fn covering(bounds: &Aabb, resolution: f64) -> Self {
        let e = bounds.extent();
        let n = |len: f64| ((len / resolution - 1e-9).ceil() as usize).max(1);
        Self {
            origin: bounds.min,
            resolution,
            dims: [n(e.x), n(e.y), n(e.z)],
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index; iteration order equals lexicographic `(ix, iy, iz)`.
    pub fn linear(&self, c: CellIndex) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    pub fn unlinear(&self, i: usize) -> CellIndex {
        let iz = i % self.dims[2];
        let rest = i / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], iz]
    }

    pub fn center(&self, c: CellIndex) -> Vec3 {
        Vec3::new(
            self.origin.x + (c[0] as f64 + 0.5) * self.resolution,
            self.origin.y + (c[1] as f64 + 0.5) * self.resolution,
            self.origin.z + (c[2] as f64 + 0.5) * self.resolution,
        )
    }

    pub fn extent(&self) -> Aabb {
        let d = Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64);
        Aabb {
            min: self.origin,
            max: self.origin + d * self.resolution,
        }
    }

    /// World box spanned by the cells `lo..=hi`.
    pub fn cell_box(&self, lo: CellIndex, hi: CellIndex) -> Aabb {
        let r = self.resolution;
        Aabb {
            min: self.origin + Vec3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64) * r,
            max: self.origin
                + Vec3::new(hi[0] as f64 + 1.0, hi[1] as f64 + 1.0, hi[2] as f64 + 1.0) * r,
        }
    }

    /// Box spanned by the cell centers of `lo..=hi`.
    pub fn center_box(&self, lo: CellIndex, hi: CellIndex) -> Aabb {
        Aabb {
            min: self.center(lo),
            max: self.center(hi),
        }
    }

    /// Cell containing `p`; points on the max face map to the last cell.
    pub fn cell_of(&self, p: &Vec3) -> Option<CellIndex> {
        if !self.extent().contains(p) {
            return None;
        }
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.resolution).floor();
            c[a] = (f.max(0.0) as usize).min(self.dims[a] - 1);
        }
        Some(c)
    }
}

/// Per-cell SINR and serving station over the environment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    pub grid: Grid,
    /// `-inf` for cells whose center lies inside a building.
    pub sinr_db: Vec<f64>,
    pub serving_bs: Vec<u32>,
    pub in_building: Vec<bool>,
    pub gamma_th_db: f64,
}

fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Evaluates SINR at every cell center. Interference and noise are summed in
/// linear scale. The serving station is the argmax of received power, ties
/// going to the lowest id.
pub fn build_radio_map(env: &Environment, gamma_th_db: f64) -> RadioMap {
    let grid = Grid::covering(&env.bounds, env.grid_resolution);
    let mut stations = env.base_stations.clone();
    stations.sort_by_key(|b| b.id);
    let noise_mw = dbm_to_mw(env.noise_power_dbm);

    let cells: Vec<(f64, u32, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.center(grid.unlinear(i));
            let powers: Vec<f64> = stations
                .iter()
                .map(|bs| received_power_unchecked(bs, &p, env))
                .collect();
            let mut best = 0;
            for (k, &pw) in powers.iter().enumerate() {
                if pw > powers[best] {
                    best = k;
                }
            }
            let serving = stations[best].id;
            if env.in_building(&p) {
                return (f64::NEG_INFINITY, serving, true);
            }
            let signal = dbm_to_mw(powers[best]);
            let interference: f64 = powers
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != best)
                .map(|(_, &pw)| dbm_to_mw(pw))
                .sum();
            let sinr = 10.0 * (signal / (interference + noise_mw)).log10();
            (sinr, serving, false)
        })
        .collect();

    let mut sinr_db = Vec::with_capacity(cells.len());
    let mut serving_bs = Vec::with_capacity(cells.len());
    let mut in_building = Vec::with_capacity(cells.len());
    for (s, b, ib) in cells {
        sinr_db.push(s);
        serving_bs.push(b);
        in_building.push(ib);
    }
    RadioMap {
        grid,
        sinr_db,
        serving_bs,
        in_building,
        gamma_th_db,
    }
}

impl RadioMap {
    /// Free and at or above the SINR threshold.
    pub fn feasible(&self, i: usize) -> bool {
        !self.in_building[i] && self.sinr_db[i] >= self.gamma_th_db
    }

    pub fn feasible_cell(&self, c: CellIndex) -> bool {
        self.feasible(self.grid.linear(c))
    }

    pub fn feasible_count(&self) -> usize {
        (0..self.grid.len()).filter(|&i| self.feasible(i)).count()
    }

    pub fn bounds(&self) -> Aabb {
        self.grid.extent()
    }

    pub fn serving_at(&self, p: &Vec3) -> Result<u32> {
        let c = self.grid.cell_of(p).ok_or_else(|| out_of_bounds(p))?;
        Ok(self.serving_bs[self.grid.linear(c)])
    }

    /// Trilinear interpolation over the surrounding cell centers. If any
    /// corner carrying non-zero weight is a building cell, returns the value
    /// of the nearest free cell center instead.
    pub fn sinr_at(&self, p: &Vec3) -> Result<f64> {
        if !self.bounds().contains(p) {
            return Err(out_of_bounds(p));
        }
        let mut acc = 0.0;
        for (i, w) in self.stencil(p) {
            if self.in_building[i] {
                return Ok(self.nearest_free_value(p));
            }
            acc += w * self.sinr_db[i];
        }
        Ok(acc)
    }

    /// Cells carrying non-zero interpolation weight at `p`, with weights.
    fn stencil(&self, p: &Vec3) -> impl Iterator<Item = (usize, f64)> + '_ {
        let g = &self.grid;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut t = [0.0f64; 3];
        for a in 0..3 {
            let f = (p[a] - g.origin[a]) / g.resolution - 0.5;
            let i0 = (f.floor().max(0.0) as usize).min(g.dims[a] - 1);
            let mut frac = (f - i0 as f64).clamp(0.0, 1.0);
            if frac < 1e-12 {
                frac = 0.0;
            } else if frac > 1.0 - 1e-12 {
                frac = 1.0;
            }
            lo[a] = i0;
            hi[a] = (i0 + 1).min(g.dims[a] - 1);
            t[a] = frac;
        }
        (0..8).filter_map(move |corner| {
            let mut c = [0usize; 3];
            let mut w = 1.0;
            for a in 0..3 {
                if corner >> a & 1 == 1 {
                    c[a] = hi[a];
                    w *= t[a];
                } else {
                    c[a] = lo[a];
                    w *= 1.0 - t[a];
                }
            }
            (w != 0.0).then(|| (g.linear(c), w))
        })
    }

    /// Every cell interpolated at `p` is feasible, so `sinr_at(p) >= gamma_th_db`.
    pub fn clear_point(&self, p: &Vec3) -> bool {
        self.bounds().contains(p) && self.stencil(p).all(|(i, _)| self.feasible(i))
    }

    /// `clear_point` holds along the whole segment.
    ///
    /// The interpolation stencil only changes where the segment crosses a
    /// plane through cell centers, so one probe per piece between crossings
    /// is exact.
    pub fn clear_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        let g = &self.grid;
        let mut ts = vec![0.0, 1.0];
        for k in 0..3 {
            let d = b[k] - a[k];
            if d == 0.0 {
                continue;
            }
            let fa = (a[k] - g.origin[k]) / g.resolution - 0.5;
            let fb = (b[k] - g.origin[k]) / g.resolution - 0.5;
            let (lo, hi) = (fa.min(fb), fa.max(fb));
            let mut i = lo.ceil();
            while i <= hi {
                ts.push((i - fa) / (fb - fa));
                i += 1.0;
            }
        }
        ts.sort_by(f64::total_cmp);
        if !self.clear_point(a) || !self.clear_point(b) {
            return false;
        }
        ts.windows(2)
            .filter(|w| w[1] > w[0])
            .all(|w| self.clear_point(&(a + (b - a) * (0.5 * (w[0] + w[1])))))
    }

    fn nearest_free_value(&self, p: &Vec3) -> f64 {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.grid.len() {
            if self.in_building[i] {
                continue;
            }
            let d = (self.grid.center(self.grid.unlinear(i)) - p).norm_squared();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        best.map_or(f64::NEG_INFINITY, |(_, i)| self.sinr_db[i])
    }

    /// CSV with header `ix,iy,iz,x,y,z,sinr_db,serving_bs,in_building`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "ix,iy,iz,x,y,z,sinr_db,serving_bs,in_building")?;
        for i in 0..self.grid.len() {
            let c = self.grid.unlinear(i);
            let p = self.grid.center(c);
            writeln!(
                w,
                "{},{},{},{:.3},{:.3},{:.3},{:.6},{},{}",
                c[0],
                c[1],
                c[2],
                p.x,
                p.y,
                p.z,
                self.sinr_db[i],
                self.serving_bs[i],
                u8::from(self.in_building[i])
            )?;
        }
        Ok(())
    }
}

fn out_of_bounds(p: &Vec3) -> Error {
    Error::Domain(format!("point {:?} outside the radio map", p.as_slice()))
}

/// Serving-station changes along a polyline resampled at grid resolution.
pub fn handover_count(map: &RadioMap, path: &[Vec3]) -> Result<usize> {
    if path.is_empty() {
        return Ok(0);
    }
    let mut servers = vec![map.serving_at(&path[0])?];
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((b - a).norm() / map.grid.resolution).ceil().max(1.0) as usize;
        for k in 1..=n {
            let p = a + (b - a) * (k as f64 / n as f64);
            servers.push(map.serving_at(&p)?);
        }
    }
    Ok(servers.windows(2).filter(|w| w[0] != w[1]).count())
}
