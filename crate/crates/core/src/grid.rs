//! Finite regular lattices and piecewise-constant fields over them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Default upper bound on the number of lattice sites.
pub const DEFAULT_SITE_CAP: usize = 10_000_000;

/// A `b`-dimensional lattice with unit spacing. Coordinates are 1-based and
/// sites are enumerated row-major (the last axis varies fastest), so site 0
/// sits at `(1, 1, ..., 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialGrid {
    extents: Vec<usize>,
    strides: Vec<usize>,
    coords: Vec<u32>,
    len: usize,
}

pub fn build_grid(extents: &[usize]) -> Result<SpatialGrid> {
    SpatialGrid::with_cap(extents, DEFAULT_SITE_CAP)
}

impl SpatialGrid {
    pub fn new(extents: &[usize]) -> Result<Self> {
        Self::with_cap(extents, DEFAULT_SITE_CAP)
    }

    pub fn with_cap(extents: &[usize], cap: usize) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::EmptyExtents);
        }
        let mut len = 1usize;
        for (dim, &e) in extents.iter().enumerate() {
            if e == 0 {
                return Err(Error::ZeroExtent { dim });
            }
            len = len
                .checked_mul(e)
                .filter(|&n| n <= cap)
                .ok_or(Error::GridTooLarge { cap })?;
        }
        if extents.iter().any(|&e| e > u32::MAX as usize) {
            return Err(Error::GridTooLarge { cap });
        }
        let dim = extents.len();
        let mut strides = vec![1usize; dim];
        for k in (0..dim.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * extents[k + 1];
        }
        let mut coords = Vec::with_capacity(len * dim);
        let mut cur = vec![1u32; dim];
        for _ in 0..len {
            coords.extend_from_slice(&cur);
            for k in (0..dim).rev() {
                if (cur[k] as usize) < extents[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = 1;
            }
        }
        Ok(Self {
            extents: extents.to_vec(),
            strides,
            coords,
            len,
        })
    }

    pub fn dimension(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    /// Number of sites `m`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_extent(&self) -> usize {
        self.extents.iter().copied().max().unwrap_or(1)
    }

    /// 1-based coordinates of site `i`.
    pub fn coords(&self, i: usize) -> &[u32] {
        let b = self.dimension();
        &self.coords[i * b..(i + 1) * b]
    }

    /// Row-major index of a 1-based coordinate vector, if it lies on the grid.
    pub fn index_of(&self, coords: &[u32]) -> Option<usize> {
        if coords.len() != self.dimension() {
            return None;
        }
        let mut idx = 0;
        for ((&c, &e), &s) in coords.iter().zip(&self.extents).zip(&self.strides) {
            if c == 0 || c as usize > e {
                return None;
            }
            idx += (c as usize - 1) * s;
        }
        Some(idx)
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.len {
            Err(Error::SiteOutOfRange {
                index: i,
                sites: self.len,
            })
        } else {
            Ok(())
        }
    }

    /// Euclidean distance between sites `i` and `j`.
    pub fn spatial_distance(&self, i: usize, j: usize) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        Ok(math::sqrt(self.squared_distance(i, j)))
    }

    pub(crate) fn squared_distance(&self, i: usize, j: usize) -> f64 {
        self.coords(i)
            .iter()
            .zip(self.coords(j))
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum()
    }

    /// Calls `f(j, squared_distance)` for every site `j` within Euclidean
    /// distance `sqrt(radius_sq)` of site `i` (including `i` itself), in
    /// increasing index order.
    pub fn for_each_within<F: FnMut(usize, f64)>(&self, i: usize, radius_sq: f64, mut f: F) {
        let b = self.dimension();
        let center = self.coords(i);
        let r = if radius_sq.is_finite() {
            math::sqrt(radius_sq.max(0.0)) as usize
        } else {
            usize::MAX
        };
        // clipped box, 1-based inclusive
        let mut lo = [0usize; 8];
        let mut hi = [0usize; 8];
        if b > lo.len() {
            for j in 0..self.len {
                let d2 = self.squared_distance(i, j);
                if d2 <= radius_sq {
                    f(j, d2);
                }
            }
            return;
        }
        for k in 0..b {
            let c = center[k] as usize;
            lo[k] = c.saturating_sub(r).max(1);
            hi[k] = c.saturating_add(r).min(self.extents[k]);
        }
        if b == 1 {
            let c = center[0] as f64;
            for x in lo[0]..=hi[0] {
                let d = x as f64 - c;
                let d2 = d * d;
                if d2 <= radius_sq {
                    f(x - 1, d2);
                }
            }
            return;
        }
        // odometer over the clipped box, last axis fastest
        let mut cur = [0usize; 8];
        cur[..b].copy_from_slice(&lo[..b]);
        let last = b - 1;
        loop {
            let mut base_d2 = 0.0;
            let mut base_idx = 0;
            for k in 0..last {
                let d = cur[k] as f64 - center[k] as f64;
                base_d2 += d * d;
                base_idx += (cur[k] - 1) * self.strides[k];
            }
            if base_d2 <= radius_sq {
                let c = center[last] as f64;
                for x in lo[last]..=hi[last] {
                    let d = x as f64 - c;
                    let d2 = base_d2 + d * d;
                    if d2 <= radius_sq {
                        f(base_idx + x - 1, d2);
                    }
                }
            }
            let mut k = last;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
            }
        }
    }
}

/// An axis-aligned box of sites, closed integer interval per dimension,
/// carrying a value in (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBox {
    pub ranges: Vec<(usize, usize)>,
    pub value: f64,
}

impl RegionBox {
    pub fn new(ranges: Vec<(usize, usize)>, value: f64) -> Self {
        Self { ranges, value }
    }

    fn contains(&self, coords: &[u32]) -> bool {
        self.ranges
            .iter()
            .zip(coords)
            .all(|(&(lo, hi), &c)| lo <= c as usize && c as usize <= hi)
    }
}

/// Piecewise-constant field: boxes checked in declaration order, `baseline`
/// everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub boxes: Vec<RegionBox>,
    pub baseline: f64,
}

fn open_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

impl RegionSpec {
    pub fn new(boxes: Vec<RegionBox>, baseline: f64) -> Self {
        Self { boxes, baseline }
    }

    pub fn constant(baseline: f64) -> Self {
        Self::new(Vec::new(), baseline)
    }

    pub fn validate(&self, grid: &SpatialGrid) -> Result<()> {
        if !open_unit(self.baseline) {
            return Err(Error::InvalidRegion(format!("baseline {} not in (0,1)", self.baseline)));
        }
        for (n, b) in self.boxes.iter().enumerate() {
            if !open_unit(b.value) {
                return Err(Error::InvalidRegion(format!("box {n}: value {} not in (0,1)", b.value)));
            }
            if b.ranges.len() != grid.dimension() {
                return Err(Error::InvalidRegion(format!(
                    "box {n}: {} ranges for a {}-dimensional grid",
                    b.ranges.len(),
                    grid.dimension()
                )));
            }
            for (k, (&(lo, hi), &e)) in b.ranges.iter().zip(grid.extents()).enumerate() {
                if lo < 1 || lo > hi || hi > e {
                    return Err(Error::InvalidRegion(format!(
                        "box {n}: range {lo}..{hi} on axis {} outside 1..{e}",
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Materializes the field over every site of `grid`.
    pub fn evaluate(&self, grid: &SpatialGrid) -> Result<Vec<f64>> {
        self.validate(grid)?;
        Ok((0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                self.boxes
                    .iter()
                    .find(|b| b.contains(c))
                    .map_or(self.baseline, |b| b.value)
            })
            .collect())
    }
}

pub fn evaluate_region_field(grid: &SpatialGrid, spec: &RegionSpec) -> Result<Vec<f64>> {
    spec.evaluate(grid)
}
