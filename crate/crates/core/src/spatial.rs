//! Exact nearest-neighbour queries over a static point cloud using a uniform
//! voxel grid.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;
#[allow(unused_imports)] // std, when linked, provides these as inherent methods
use num_traits::Float;

#[derive(Debug, Clone)]
pub struct NearestIndex {
    points: Vec<Vector3<f64>>,
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    // points sorted by cell; cell c owns order[start[c]..start[c + 1]]
    start: Vec<usize>,
    order: Vec<usize>,
}

impl NearestIndex {
    /// Builds the grid. Returns `None` for an empty cloud.
    pub fn new(points: &[Vector3<f64>]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        // about two points per occupied cell for surface-like clouds
        let span = extent.max().max(1e-9);
        let n = points.len() as f64;
        let cell = (span / n.sqrt() * 1.5).max(span / 256.0);
        let mut dims = [1usize; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            *d = ((extent[i] / cell).floor() as usize + 1).min(256);
        }
        let ncells = dims[0] * dims[1] * dims[2];
        let mut index = Self {
            points: points.to_vec(),
            origin: lo,
            cell,
            dims,
            start: vec![0; ncells + 1],
            order: vec![0; points.len()],
        };
        let cells: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = index.cell_of(p);
                index.flat(c)
            })
            .collect();
        for &c in &cells {
            index.start[c + 1] += 1;
        }
        for c in 0..ncells {
            index.start[c + 1] += index.start[c];
        }
        let mut fill = index.start.clone();
        for (i, &c) in cells.iter().enumerate() {
            index.order[fill[c]] = i;
            fill[c] += 1;
        }
        Some(index)
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [usize; 3] {
        let mut c = [0usize; 3];
        for i in 0..3 {
            let f = ((p[i] - self.origin[i]) / self.cell).floor();
            c[i] = if f <= 0.0 {
                0
            } else {
                (f as usize).min(self.dims[i] - 1)
            };
        }
        c
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Index of the nearest stored point and its squared distance. Ties keep
    /// the lowest index.
    pub fn nearest(&self, q: &Vector3<f64>) -> (usize, f64) {
        let center = self.cell_of(q);
        let mut best = (usize::MAX, f64::INFINITY);
        let max_r = *self.dims.iter().max().unwrap_or(&1);
        for r in 0..=max_r {
            // far from the cloud, shells cost more than a linear scan
            if (2 * r + 1).pow(3) > 2 * self.points.len() {
                return self.linear_scan(q);
            }
            self.scan_shell(center, r, q, &mut best);
            // lower bound on the squared distance to any cell outside the
            // searched box: each unsearched slab, clipped to the grid
            let grid_gap = |i: usize, lo: f64, hi: f64| {
                let d = (lo - q[i]).max(q[i] - hi).max(0.0);
                d * d
            };
            let full: [f64; 3] = core::array::from_fn(|i| {
                grid_gap(i, self.origin[i], self.origin[i] + self.dims[i] as f64 * self.cell)
            });
            let others = |i: usize| full.iter().sum::<f64>() - full[i];
            let mut bound = f64::INFINITY;
            for i in 0..3 {
                if center[i] + r + 1 < self.dims[i] {
                    let face = self.origin[i] + (center[i] + r + 1) as f64 * self.cell;
                    let top = self.origin[i] + self.dims[i] as f64 * self.cell;
                    bound = bound.min(grid_gap(i, face, top) + others(i));
                }
                if center[i] >= r + 1 {
                    let face = self.origin[i] + (center[i] - r) as f64 * self.cell;
                    bound = bound.min(grid_gap(i, self.origin[i], face) + others(i));
                }
            }
            if bound == f64::INFINITY || best.1 <= bound {
                break;
            }
        }
        best
    }

    fn linear_scan(&self, q: &Vector3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    fn scan_shell(&self, c: [usize; 3], r: usize, q: &Vector3<f64>, best: &mut (usize, f64)) {
        let range = |i: usize| {
            let lo = c[i].saturating_sub(r);
            let hi = (c[i] + r).min(self.dims[i] - 1);
            (lo, hi)
        };
        let (x0, x1) = range(0);
        let (y0, y1) = range(1);
        let (z0, z1) = range(2);
        let on_shell = |v: usize, ci: usize| v + r == ci || v == ci + r;
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if r > 0 && !(on_shell(x, c[0]) || on_shell(y, c[1]) || on_shell(z, c[2])) {
                        continue;
                    }
                    let cell = self.flat([x, y, z]);
                    for &i in &self.order[self.start[cell]..self.start[cell + 1]] {
                        let d = (self.points[i] - q).norm_squared();
                        if d < best.1 || (d == best.1 && i < best.0) {
                            *best = (i, d);
                        }
                    }
                }
            }
        }
    }
}
