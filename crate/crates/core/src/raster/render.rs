use rayon::prelude::*;

use crate::image::Image;
use crate::model::Camera;
use crate::real::Real;

use super::{ProjectedGaussian, RasterConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput<F> {
    /// `H × W × 3` composited color.
    pub color: Image<F>,
    /// `H × W` depth blended with the color weights (not alpha-normalized).
    pub depth: Image<F>,
    /// `H × W` accumulated opacity `1 − T_final`.
    pub alpha: Image<F>,
    /// Number of splats blended at each pixel.
    pub contributors: Vec<u32>,
}

impl<F: Real> RenderOutput<F> {
    pub fn background(width: usize, height: usize, background: [F; 3]) -> Self {
        let mut color = Image::new(width, height, 3);
        for px in color.data.chunks_exact_mut(3) {
            px.copy_from_slice(&background);
        }
        Self {
            color,
            depth: Image::new(width, height, 1),
            alpha: Image::new(width, height, 1),
            contributors: vec![0; width * height],
        }
    }

    /// Depth divided by accumulated alpha; zero where nothing was blended.
    pub fn normalized_depth(&self) -> Image<F> {
        let mut out = self.depth.clone();
        for (d, a) in out.data.iter_mut().zip(&self.alpha.data) {
            *d = if *a > F::zero() { *d / *a } else { F::zero() };
        }
        out
    }
}

/// Everything the backward pass needs to re-walk the forward compositing.
#[derive(Debug, Clone)]
pub struct ForwardState<F> {
    /// Splats sorted front to back by `(depth, gaussian_id)`.
    pub projected: Vec<ProjectedGaussian<F>>,
    pub config: RasterConfig,
    pub width: usize,
    pub height: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// CSR offsets into `tile_entries`, one range per tile.
    pub tile_offsets: Vec<usize>,
    /// Indices into `projected`, front to back within each tile.
    pub tile_entries: Vec<u32>,
    pub final_transmittance: Vec<F>,
    /// Number of tile entries walked at each pixel before compositing stopped.
    pub last_entry: Vec<u32>,
}

impl<F> ForwardState<F> {
    pub fn tile_range(&self, tile: usize) -> std::ops::Range<usize> {
        self.tile_offsets[tile]..self.tile_offsets[tile + 1]
    }

    /// Pixel rectangle `[x0, x1) × [y0, y1)` of a tile.
    pub fn tile_rect(&self, tile: usize) -> (usize, usize, usize, usize) {
        let ts = self.config.tile_size;
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * ts;
        let y0 = ty * ts;
        (x0, y0, (x0 + ts).min(self.width), (y0 + ts).min(self.height))
    }
}

/// Sorts splats front to back; equal depths are ordered by Gaussian id.
pub(crate) fn sort_front_to_back<F: Real>(projected: &mut [ProjectedGaussian<F>]) {
    projected.sort_by(|a, b| {
        a.depth.partial_cmp(&b.depth).unwrap_or(std::cmp::Ordering::Equal).then(a.gaussian_id.cmp(&b.gaussian_id))
    });
}

fn bin_tiles<F: Real>(
    projected: &[ProjectedGaussian<F>],
    width: usize,
    height: usize,
    config: &RasterConfig,
) -> (usize, usize, Vec<usize>, Vec<u32>) {
    let ts = config.tile_size;
    let tiles_x = width.div_ceil(ts);
    let tiles_y = height.div_ceil(ts);
    let cutoff = F::lit(config.alpha_cutoff);
    let wmax = F::lit((width - 1) as f64);
    let hmax = F::lit((height - 1) as f64);

    // Tile rectangle touched by each splat, if any.
    let rects: Vec<Option<[usize; 4]>> = projected
        .iter()
        .map(|p| {
            let b = p.pixel_bounds(cutoff)?;
            let x0 = b[0].floor();
            let y0 = b[1].floor();
            let x1 = b[2].ceil();
            let y1 = b[3].ceil();
            if x1 < F::zero() || y1 < F::zero() || x0 > wmax || y0 > hmax || x0.is_nan() || y0.is_nan() {
                return None;
            }
            let cl = |v: F, hi: F| v.max(F::zero()).min(hi).as_f64() as usize;
            Some([cl(x0, wmax) / ts, cl(y0, hmax) / ts, cl(x1, wmax) / ts, cl(y1, hmax) / ts])
        })
        .collect();

    let mut counts = vec![0usize; tiles_x * tiles_y + 1];
    for r in rects.iter().flatten() {
        for ty in r[1]..=r[3] {
            for tx in r[0]..=r[2] {
                counts[ty * tiles_x + tx + 1] += 1;
            }
        }
    }
    for i in 1..counts.len() {
        counts[i] += counts[i - 1];
    }
    let offsets = counts;
    let mut cursor = offsets.clone();
    let mut entries = vec![0u32; *offsets.last().unwrap()];
    for (k, r) in rects.iter().enumerate() {
        if let Some(r) = r {
            for ty in r[1]..=r[3] {
                for tx in r[0]..=r[2] {
                    let t = ty * tiles_x + tx;
                    entries[cursor[t]] = k as u32;
                    cursor[t] += 1;
                }
            }
        }
    }
    (tiles_x, tiles_y, offsets, entries)
}

struct TileOut<F> {
    color: Vec<F>,
    depth: Vec<F>,
    transmittance: Vec<F>,
    last: Vec<u32>,
    count: Vec<u32>,
}

fn render_tile<F: Real>(state: &ForwardState<F>, tile: usize, background: &[F; 3]) -> TileOut<F> {
    let (x0, y0, x1, y1) = state.tile_rect(tile);
    let n = (x1 - x0) * (y1 - y0);
    let mut out = TileOut {
        color: Vec::with_capacity(n * 3),
        depth: Vec::with_capacity(n),
        transmittance: Vec::with_capacity(n),
        last: Vec::with_capacity(n),
        count: Vec::with_capacity(n),
    };
    let entries = &state.tile_entries[state.tile_range(tile)];
    let cutoff = F::lit(state.config.alpha_cutoff);
    let alpha_max = F::lit(state.config.alpha_max);
    let stop = F::lit(state.config.stop_threshold);
    let skip: Vec<F> = entries.iter().map(|&e| state.projected[e as usize].skip_below(cutoff)).collect();
    for y in y0..y1 {
        let py = F::lit(y as f64);
        for x in x0..x1 {
            let px = F::lit(x as f64);
            let mut t = F::one();
            let mut c = [F::zero(); 3];
            let mut d = F::zero();
            let mut last = 0u32;
            let mut count = 0u32;
            for (k, &e) in entries.iter().enumerate() {
                let g = &state.projected[e as usize];
                let power = g.power_at(px, py);
                if power < skip[k] {
                    continue;
                }
                let (alpha, _, _) = g.alpha_from_power(power, alpha_max);
                if alpha < cutoff {
                    continue;
                }
                let w = alpha * t;
                c[0] += g.color[0] * w;
                c[1] += g.color[1] * w;
                c[2] += g.color[2] * w;
                d += g.depth * w;
                t *= F::one() - alpha ;
                last = k as u32 + 1;
                count += 1;
                if t < stop {
                    break;
                }
            }
            out.color.extend_from_slice(&[c[0] + t * background[0], c[1] + t * background[1], c[2] + t * background[2]]);
            out.depth.push(d);
            out.transmittance.push(t);
            out.last.push(last);
            out.count.push(count);
        }
    }
    out
}

/// Tile-based forward pass. Returns the images together with the state the
/// backward pass consumes.
pub fn render_with_state<F: Real>(
    mut projected: Vec<ProjectedGaussian<F>>,
    camera: &Camera<F>,
    config: &RasterConfig,
) -> (RenderOutput<F>, ForwardState<F>) {
    let (width, height) = (camera.width, camera.height);
    sort_front_to_back(&mut projected);
    let (tiles_x, tiles_y, tile_offsets, tile_entries) = bin_tiles(&projected, width, height, config);
    let mut state = ForwardState {
        projected,
        config: config.clone(),
        width,
        height,
        tiles_x,
        tiles_y,
        tile_offsets,
        tile_entries,
        final_transmittance: vec![F::one(); width * height],
        last_entry: vec![0; width * height],
    };
    let background = config.background.map(F::lit);
    let mut output = RenderOutput::background(width, height, background);

    let tiles: Vec<TileOut<F>> =
        (0..tiles_x * tiles_y).into_par_iter().map(|t| render_tile(&state, t, &background)).collect();

    for (tile, out) in tiles.into_iter().enumerate() {
        let (x0, y0, x1, y1) = state.tile_rect(tile);
        let tw = x1 - x0;
        for y in y0..y1 {
            for x in x0..x1 {
                let local = (y - y0) * tw + (x - x0);
                let pix = y * width + x;
                output.color.data[pix * 3..pix * 3 + 3].copy_from_slice(&out.color[local * 3..local * 3 + 3]);
                output.depth.data[pix] = out.depth[local];
                output.alpha.data[pix] = F::one() - out.transmittance[local];
                output.contributors[pix] = out.count[local];
                state.final_transmittance[pix] = out.transmittance[local];
                state.last_entry[pix] = out.last[local];
            }
        }
    }
    (output, state)
}

/// Tile-based forward pass of already-projected splats.
pub fn render<F: Real>(projected: Vec<ProjectedGaussian<F>>, camera: &Camera<F>, config: &RasterConfig) -> RenderOutput<F> {
    render_with_state(projected, camera, config).0
}
