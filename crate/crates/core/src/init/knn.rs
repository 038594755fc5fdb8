//! Mean distance to the k nearest neighbours over a uniform grid.

use crate::math::Vec3;
use crate::real::Real;

struct Grid {
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl Grid {
    fn build(points: &[[f64; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        let n = points.len() as f64;
        let mut cell = if extent > 0.0 { extent / n.cbrt().max(1.0) } else { 1.0 };
        // Keep the dense grid bounded for very elongated clouds.
        let dims_for = |cell: f64| (0..3).map(|a| ((hi[a] - lo[a]) / cell).floor() as usize + 1).collect::<Vec<_>>();
        while dims_for(cell).iter().product::<usize>() > 4 * points.len() + 64 {
            cell *= 1.5;
        }
        let d = dims_for(cell);
        let dims = [d[0], d[1], d[2]];
        let mut grid = Self { origin: lo, cell, dims, offsets: vec![0; dims[0] * dims[1] * dims[2] + 1], items: vec![] };
        let cells: Vec<usize> = points.iter().map(|p| grid.flat(grid.coord(p))).collect();
        for &c in &cells {
            grid.offsets[c + 1] += 1;
        }
        for i in 1..grid.offsets.len() {
            grid.offsets[i] += grid.offsets[i - 1];
        }
        let mut cursor = grid.offsets.clone();
        grid.items = vec![0; points.len()];
        for (i, &c) in cells.iter().enumerate() {
            grid.items[cursor[c]] = i as u32;
            cursor[c] += 1;
        }
        grid
    }

    fn coord(&self, p: &[f64; 3]) -> [usize; 3] {
        let mut c = [0; 3];
        for a in 0..3 {
            c[a] = (((p[a] - self.origin[a]) / self.cell).floor().max(0.0) as usize).min(self.dims[a] - 1);
        }
        c
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// For every point, the mean Euclidean distance to its `k` nearest other
/// points. Requires more than `k` points.
pub fn mean_knn_distance<F: Real>(points: &[Vec3<F>], k: usize) -> Vec<F> {
    assert!(points.len() > k, "need more than {k} points");
    let pts: Vec<[f64; 3]> = points.iter().map(|p| p.map(|v| v.as_f64())).collect();
    let grid = Grid::build(&pts);
    let max_ring = *grid.dims.iter().max().unwrap();
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            let c = grid.coord(p);
            // Sorted ascending, at most k entries.
            let mut best: Vec<f64> = Vec::with_capacity(k + 1);
            for ring in 0..=max_ring {
                let r = ring as isize;
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                                continue;
                            }
                            let q = [c[0] as isize + dx, c[1] as isize + dy, c[2] as isize + dz];
                            if (0..3).any(|a| q[a] < 0 || q[a] >= grid.dims[a] as isize) {
                                continue;
                            }
                            let cell = grid.flat([q[0] as usize, q[1] as usize, q[2] as usize]);
                            for &j in &grid.items[grid.offsets[cell]..grid.offsets[cell + 1]] {
                                if j as usize == i {
                                    continue;
                                }
                                let d = dist2(p, &pts[j as usize]);
                                if best.len() < k || d < best[k - 1] {
                                    let pos = best.partition_point(|&b| b <= d);
                                    best.insert(pos, d);
                                    best.truncate(k);
                                }
                            }
                        }
                    }
                }
                // Anything in ring + 1 or beyond is at least `ring · cell` away.
                let reach = ring as f64 * grid.cell;
                if best.len() == k && best[k - 1] <= reach * reach {
                    break;
                }
            }
            F::lit(best.iter().map(|d| d.sqrt()).sum::<f64>() / k as f64)
        })
        .collect()
}
