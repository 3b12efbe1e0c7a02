use std::collections::{BTreeMap, BTreeSet};

use crate::base::{Aabb, Vec3};
use crate::radio::{CellIndex, Grid, RadioMap};

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    /// Inclusive cell-index range.
    pub lo: CellIndex,
    pub hi: CellIndex,
    /// World box covered by the cells.
    pub bounds: Aabb,
    pub min_sinr_db: f64,
    /// Most frequent serving station over the region's cells, ties to lowest id.
    pub modal_serving: u32,
}

impl Region {
    pub fn cell_count(&self) -> usize {
        (0..3).map(|a| self.hi[a] - self.lo[a] + 1).product()
    }

    pub fn contains_cell(&self, c: CellIndex) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] <= self.hi[a])
    }
}

/// Face adjacency between two regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Portal {
    /// Region below the shared face along `axis`.
    pub lower: usize,
    /// Region above the shared face along `axis`.
    pub upper: usize,
    pub axis: usize,
    /// Shared rectangle; degenerate along `axis`.
    pub face: Aabb,
    /// Transverse cell-index overlap (entries along `axis` are unused).
    pub overlap_lo: CellIndex,
    pub overlap_hi: CellIndex,
}

impl Portal {
    pub fn other(&self, r: usize) -> usize {
        if r == self.lower {
            self.upper
        } else {
            self.lower
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegionGraph {
    pub grid: Grid,
    pub regions: Vec<Region>,
    pub portals: Vec<Portal>,
    /// Portal indices touching each region, in ascending neighbor id.
    pub adjacency: Vec<Vec<usize>>,
    /// Region covering each cell, if any.
    pub owner: Vec<Option<usize>>,
}

impl RegionGraph {
    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.portals.iter().map(|p| (p.lower, p.upper))
    }

    /// Hull of the region's cell centers.
    pub fn center_box(&self, r: usize) -> Aabb {
        let reg = &self.regions[r];
        self.grid.center_box(reg.lo, reg.hi)
    }

    /// Regions whose cell box holds `p`, ascending by id.
    pub fn regions_containing(&self, p: &Vec3) -> Vec<usize> {
        self.regions
            .iter()
            .filter(|r| r.bounds.contains(p))
            .map(|r| r.id)
            .collect()
    }
}

/// Greedy box growing over feasible cells.
///
/// Seeds are taken in lexicographic `(ix, iy, iz)` order; each box grows by
/// one layer at a time in `+x, +y, +z` round-robin while the new layer is
/// entirely feasible and uncovered.
pub fn decompose_regions(map: &RadioMap) -> RegionGraph {
    let grid = map.grid;
    let n = grid.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut regions = Vec::new();

    let free = |c: CellIndex, owner: &[Option<usize>]| {
        let i = grid.linear(c);
        map.feasible(i) && owner[i].is_none()
    };

    for seed in 0..n {
        if !map.feasible(seed) || owner[seed].is_some() {
            continue;
        }
        let c = grid.unlinear(seed);
        let (lo, mut hi) = (c, c);
        let mut blocked = [false; 3];
        loop {
            let mut grew = false;
            for a in 0..3 {
                if blocked[a] {
                    continue;
                }
                if hi[a] + 1 >= grid.dims[a] || !layer_cells(lo, hi, a).all(|cell| free(cell, &owner)) {
                    blocked[a] = true;
                } else {
                    hi[a] += 1;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        let id = regions.len();
        let mut min_sinr = f64::INFINITY;
        let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
        for cell in box_cells(lo, hi) {
            let i = grid.linear(cell);
            owner[i] = Some(id);
            min_sinr = min_sinr.min(map.sinr_db[i]);
            *votes.entry(map.serving_bs[i]).or_default() += 1;
        }
        let mut modal = (0u32, 0usize);
        for (&bs, &count) in &votes {
            if count > modal.1 {
                modal = (bs, count);
            }
        }
        regions.push(Region {
            id,
            lo,
            hi,
            bounds: grid.cell_box(lo, hi),
            min_sinr_db: min_sinr,
            modal_serving: modal.0,
        });
    }

    let mut pairs: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    for i in 0..n {
        let Some(r) = owner[i] else { continue };
        let c = grid.unlinear(i);
        for a in 0..3 {
            if c[a] + 1 >= grid.dims[a] {
                continue;
            }
            let mut nb = c;
            nb[a] += 1;
            if let Some(s) = owner[grid.linear(nb)] {
                if s != r {
                    pairs.insert((r, s, a));
                }
            }
        }
    }

    let mut portals = Vec::with_capacity(pairs.len());
    for (lower, upper, axis) in pairs {
        let (l, u) = (&regions[lower], &regions[upper]);
        let mut olo = [0usize; 3];
        let mut ohi = [0usize; 3];
        for b in 0..3 {
            olo[b] = l.lo[b].max(u.lo[b]);
            ohi[b] = l.hi[b].min(u.hi[b]);
        }
        olo[axis] = l.hi[axis];
        ohi[axis] = l.hi[axis];
        let mut face = grid.cell_box(olo, ohi);
        face.min[axis] = face.max[axis];
        portals.push(Portal {
            lower,
            upper,
            axis,
            face,
            overlap_lo: olo,
            overlap_hi: ohi,
        });
    }

    let mut adjacency = vec![Vec::new(); regions.len()];
    for (k, p) in portals.iter().enumerate() {
        adjacency[p.lower].push(k);
        adjacency[p.upper].push(k);
    }
    for (r, list) in adjacency.iter_mut().enumerate() {
        list.sort_by_key(|&k| portals[k].other(r));
    }

    RegionGraph {
        grid,
        regions,
        portals,
        adjacency,
        owner,
    }
}

fn box_cells(lo: CellIndex, hi: CellIndex) -> impl Iterator<Item = CellIndex> {
    (lo[0]..=hi[0]).flat_map(move |x| {
        (lo[1]..=hi[1]).flat_map(move |y| (lo[2]..=hi[2]).map(move |z| [x, y, z]))
    })
}

/// Cells of the layer just beyond `hi` along `axis`.
fn layer_cells(lo: CellIndex, hi: CellIndex, axis: usize) -> impl Iterator<Item = CellIndex> {
    let mut l = lo;
    let mut h = hi;
    l[axis] = hi[axis] + 1;
    h[axis] = hi[axis] + 1;
    box_cells(l, h)
}
