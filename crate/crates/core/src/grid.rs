//! Uniform grid for fixed-radius neighbor queries.

use crate::geometry::Vec3;

/// Upper bound on the number of cells; larger grids get wider cells.
const MAX_CELLS: usize = 1 << 24;

/// Points bucketed into a dense grid over their bounding box (CSR layout).
#[derive(Debug, Clone)]
pub struct SpatialGrid<'a> {
    points: &'a [Vec3],
    cell_size: f64,
    origin: Vec3,
    dims: [usize; 3],
    starts: Vec<u32>,
    members: Vec<u32>,
}

impl<'a> SpatialGrid<'a> {
    /// Queries accept radii up to `cell_size`. Panics if it is not positive.
    pub fn new(points: &'a [Vec3], cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let (lo, hi) = points.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let (origin, extent) = if points.is_empty() {
            (Vec3::zeros(), Vec3::zeros())
        } else {
            (lo, hi - lo)
        };
        let mut size = cell_size;
        let dims = loop {
            let dims = [0, 1, 2].map(|k| (extent[k] / size).floor() as usize + 1);
            if dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .is_some_and(|c| c <= MAX_CELLS)
            {
                break dims;
            }
            size *= 2.0;
        };
        let mut grid = SpatialGrid {
            points,
            cell_size: size,
            origin,
            dims,
            starts: Vec::new(),
            members: Vec::new(),
        };
        let cell_count = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = points
            .iter()
            .map(|p| grid.linear(grid.cell_of(p)))
            .collect();
        let mut starts = vec![0u32; cell_count + 1];
        for &k in &keys {
            starts[k + 1] += 1;
        }
        for i in 0..cell_count {
            starts[i + 1] += starts[i];
        }
        let mut fill = starts.clone();
        let mut members = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            members[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid.starts = starts;
        grid.members = members;
        grid
    }

    /// Effective cell size, at least the requested one.
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            (((p[k] - self.origin[k]) / self.cell_size).floor().max(0.0) as usize)
                .min(self.dims[k] - 1)
        })
    }

    fn linear(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    /// Calls `f` on every candidate index in the cells the ball touches;
    /// stops early when `f` returns true.
    fn scan(&self, q: &Vec3, radius: f64, mut f: impl FnMut(usize) -> bool) -> bool {
        if self.points.is_empty() {
            return false;
        }
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for k in 0..3 {
            let a = (q[k] - radius - self.origin[k]) / self.cell_size;
            let b = (q[k] + radius - self.origin[k]) / self.cell_size;
            if !(b >= 0.0 && a < self.dims[k] as f64) {
                return false;
            }
            lo[k] = a.floor().max(0.0) as usize;
            hi[k] = (b.floor() as usize).min(self.dims[k] - 1);
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                let row = (x * self.dims[1] + y) * self.dims[2];
                let (s, e) = (
                    self.starts[row + lo[2]] as usize,
                    self.starts[row + hi[2] + 1] as usize,
                );
                if self.members[s..e].iter().any(|&i| f(i as usize)) {
                    return true;
                }
            }
        }
        false
    }

    /// Whether any point lies within `radius` (at most the cell size) of `q`.
    pub fn any_within(&self, q: &Vec3, radius: f64) -> bool {
        debug_assert!(radius <= self.cell_size);
        let r2 = radius * radius;
        self.scan(q, radius, |i| (self.points[i] - q).norm_squared() <= r2)
    }

    /// Indices within `radius` (at most the cell size) of `q`, ascending.
    pub fn within(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        debug_assert!(radius <= self.cell_size);
        let r2 = radius * radius;
        let mut out = Vec::new();
        self.scan(q, radius, |i| {
            if (self.points[i] - q).norm_squared() <= r2 {
                out.push(i);
            }
            false
        });
        out.sort_unstable();
        out
    }
}
