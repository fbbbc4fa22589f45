//! SLIC superpixels and the masked variant that seeds and clusters only inside
//! a region of interest.
//!
//! Both share the same k-means core: each center searches a `2S x 2S` window,
//! pixels keep the center with the smallest
//! `D = sqrt(d_lab^2 + (d_xy / S)^2 * m^2)` (lowest center id on exact ties),
//! and centers move to the mean of their members. A fixed number of iterations
//! is followed by connectivity enforcement.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::grid::Grid;
use crate::png_io;
use crate::raster::{GroundTruthMask, LabImage};

/// Label of pixels outside the region of interest.
pub const OUTSIDE: u32 = u32::MAX;

pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    /// Requested number of superpixels.
    pub k: usize,
    /// Compactness weight `m`.
    pub compactness: f64,
    pub iterations: usize,
    /// Whether seeding and clustering were restricted to a mask.
    pub masked: bool,
}

impl SlicParams {
    pub fn new(k: usize, compactness: f64, iterations: usize) -> Self {
        Self {
            k,
            compactness,
            iterations,
            masked: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        if !(self.compactness.is_finite() && self.compactness >= 0.0) {
            return Err(Error::param(
                "compactness",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCenter {
    pub lab: [f64; 3],
    pub x: f64,
    pub y: f64,
}

/// Per-pixel segment ids; [`OUTSIDE`] marks pixels off the region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMap {
    labels: Grid<u32>,
    segment_count: usize,
    params: SlicParams,
}

impl SegmentMap {
    /// Builds a map from raw labels, compacting ids to `0..n` in scan order.
    pub fn from_labels(labels: Grid<u32>, params: SlicParams) -> Self {
        let mut remap = std::collections::HashMap::new();
        let compact = labels.map(|&l| {
            if l == OUTSIDE {
                OUTSIDE
            } else {
                let next = remap.len() as u32;
                *remap.entry(l).or_insert(next)
            }
        });
        Self {
            labels: compact,
            segment_count: remap.len(),
            params,
        }
    }

    pub fn labels(&self) -> &Grid<u32> {
        &self.labels
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn params(&self) -> &SlicParams {
        &self.params
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn roi_pixel_count(&self) -> usize {
        self.labels
            .as_slice()
            .iter()
            .filter(|&&l| l != OUTSIDE)
            .count()
    }

    /// Pixel indices of every segment, in scan order.
    pub fn segment_pixels(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.segment_count];
        for (i, &l) in self.labels.as_slice().iter().enumerate() {
            if l != OUTSIDE {
                out[l as usize].push(i);
            }
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.segment_count];
        for &l in self.labels.as_slice() {
            if l != OUTSIDE {
                out[l as usize] += 1;
            }
        }
        out
    }

    /// Grid interval `S = sqrt(N / k)` with `N` the number of labelled pixels.
    pub fn grid_interval(&self) -> f64 {
        grid_interval(self.roi_pixel_count(), self.params.k)
    }
}

fn grid_interval(pixels: usize, k: usize) -> f64 {
    (pixels as f64 / k.max(1) as f64).sqrt()
}

/// Plain SLIC over the whole image.
pub fn slic(lab: &LabImage, k: usize, compactness: f64, iterations: usize) -> Result<SegmentMap> {
    let params = SlicParams::new(k, compactness, iterations);
    params.validate()?;
    let (w, h) = (lab.width(), lab.height());
    let n = w * h;
    if n == 0 {
        return Err(Error::EmptyImage);
    }
    if k > n {
        return Err(Error::TooManySegments { k, pixels: n });
    }
    let s = grid_interval(n, k);
    let centers = grid_seeds(lab, k);
    let labels = cluster(lab, None, centers, s, compactness, iterations);
    let map = SegmentMap::from_labels(labels, params);
    Ok(enforce_connectivity_with(&map, min_segment_size(s)))
}

/// SLIC restricted to the non-ignored pixels of `mask`, seeded by farthest-point
/// placement on the region's Euclidean distance transform.
pub fn mask_slic(
    lab: &LabImage,
    mask: &GroundTruthMask,
    k: usize,
    compactness: f64,
    iterations: usize,
) -> Result<SegmentMap> {
    let mut params = SlicParams::new(k, compactness, iterations);
    params.masked = true;
    params.validate()?;
    if (mask.width(), mask.height()) != (lab.width(), lab.height()) {
        return Err(Error::DimensionMismatch {
            expected: (lab.width(), lab.height()),
            found: (mask.width(), mask.height()),
            context: "mask vs image".into(),
        });
    }
    let roi = mask.roi();
    let roi_pixels = roi.as_slice().iter().filter(|&&r| r).count();
    if roi_pixels == 0 {
        return Err(Error::EmptyRoi);
    }
    if k > roi_pixels {
        return Err(Error::TooManySegments {
            k,
            pixels: roi_pixels,
        });
    }
    let s = grid_interval(roi_pixels, k);
    let seeds = farthest_point_seeds(&roi, k);
    let w = lab.width();
    let centers = seeds
        .iter()
        .map(|&i| ClusterCenter {
            lab: lab.pixels().as_slice()[i],
            x: (i % w) as f64,
            y: (i / w) as f64,
        })
        .collect();
    let labels = cluster(lab, Some(&roi), centers, s, compactness, iterations);
    let map = SegmentMap::from_labels(labels, params);
    Ok(enforce_connectivity_with(&map, min_segment_size(s)))
}

fn min_segment_size(s: f64) -> usize {
    (s * s / 4.0).floor() as usize
}

/// Seed grid: `nx` columns by `ny` rows with `nx * ny` close to `k`, each seed
/// at its cell center and then moved to the lowest-gradient pixel of its 3x3
/// neighbourhood.
pub fn grid_seeds(lab: &LabImage, k: usize) -> Vec<ClusterCenter> {
    let (w, h) = (lab.width(), lab.height());
    let (nx, ny) = grid_shape(w, h, k);
    let step_x = w as f64 / nx as f64;
    let step_y = h as f64 / ny as f64;
    let grad = gradient(lab);
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (((i as f64 + 0.5) * step_x) as usize).min(w - 1);
            let cy = (((j as f64 + 0.5) * step_y) as usize).min(h - 1);
            let (mut bx, mut by) = (cx, cy);
            let mut best = *grad.get(cx, cy);
            for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = *grad.get(x, y);
                    if g < best {
                        best = g;
                        bx = x;
                        by = y;
                    }
                }
            }
            centers.push(ClusterCenter {
                lab: *lab.pixels().get(bx, by),
                x: bx as f64,
                y: by as f64,
            });
        }
    }
    centers
}

/// Columns and rows of the seed grid: the product closest to `k`, then the
/// cell shape closest to square, then more columns.
fn grid_shape(w: usize, h: usize, k: usize) -> (usize, usize) {
    let mut best = (1, 1);
    let mut best_score = (usize::MAX, f64::INFINITY);
    for nx in 1..=k.min(w) {
        let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, h);
        let aspect = ((w as f64 / nx as f64) / (h as f64 / ny as f64)).ln().abs();
        let score = ((nx * ny).abs_diff(k), aspect);
        if score.0 < best_score.0 || (score.0 == best_score.0 && score.1 <= best_score.1 + 1e-12) {
            best = (nx, ny);
            best_score = score;
        }
    }
    best
}

fn gradient(lab: &LabImage) -> Grid<f64> {
    let px = lab.pixels();
    let (w, h) = px.dims();
    let sq = |a: &[f64; 3], b: &[f64; 3]| {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    };
    Grid::from_fn(w, h, |x, y| {
        let xl = x.saturating_sub(1);
        let xr = (x + 1).min(w - 1);
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        sq(px.get(xr, y), px.get(xl, y)) + sq(px.get(x, yd), px.get(x, yu))
    })
}

/// Squared Euclidean distance from every pixel to the nearest pixel that is
/// not in the region; pixels beyond the image border count as outside.
pub fn squared_distance_transform(roi: &Grid<bool>) -> Grid<f64> {
    let (w, h) = roi.dims();
    let (pw, ph) = (w + 2, h + 2);
    let inf = ((pw * pw + ph * ph) as f64) * 4.0;
    let mut f = vec![0.0; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if *roi.get(x, y) {
                f[(y + 1) * pw + x + 1] = inf;
            }
        }
    }
    let mut line = vec![0.0; pw.max(ph)];
    let mut out = vec![0.0; pw.max(ph)];
    for x in 0..pw {
        for y in 0..ph {
            line[y] = f[y * pw + x];
        }
        edt_1d(&line[..ph], &mut out[..ph]);
        for y in 0..ph {
            f[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        line[..pw].copy_from_slice(&f[y * pw..(y + 1) * pw]);
        edt_1d(&line[..pw], &mut out[..pw]);
        f[y * pw..(y + 1) * pw].copy_from_slice(&out[..pw]);
    }
    Grid::from_fn(w, h, |x, y| f[(y + 1) * pw + x + 1])
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *out = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// Places `k` seeds inside the region: the first at the distance-transform
/// maximum, each following one at the region pixel farthest from both the
/// region boundary and every seed placed so far. Lowest pixel index wins ties.
pub fn farthest_point_seeds(roi: &Grid<bool>, k: usize) -> Vec<usize> {
    let w = roi.width();
    let mut reach = squared_distance_transform(roi).into_vec();
    let inside = roi.as_slice();
    let mut seeds = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (i, &d) in reach.iter().enumerate() {
            if inside[i] && best.is_none_or(|(_, b)| d > b) {
                best = Some((i, d));
            }
        }
        let Some((seed, farthest)) = best else { break };
        seeds.push(seed);
        // No reach value exceeds `farthest`, so pixels beyond that radius keep theirs.
        let (sx, sy) = (seed % w, seed / w);
        let radius = farthest.sqrt().ceil() as usize;
        for y in sy.saturating_sub(radius)..(sy + radius + 1).min(roi.height()) {
            for x in sx.saturating_sub(radius)..(sx + radius + 1).min(w) {
                let (dx, dy) = (x as f64 - sx as f64, y as f64 - sy as f64);
                let d = dx * dx + dy * dy;
                let r = &mut reach[y * w + x];
                if d < *r {
                    *r = d;
                }
            }
        }
    }
    seeds
}

fn cluster(
    lab: &LabImage,
    roi: Option<&Grid<bool>>,
    mut centers: Vec<ClusterCenter>,
    s: f64,
    m: f64,
    iterations: usize,
) -> Grid<u32> {
    let px = lab.pixels();
    let (w, h) = px.dims();
    let in_roi = |i: usize| roi.is_none_or(|r| r.as_slice()[i]);
    let spatial = (m / s).powi(2);
    let distance = |c: &ClusterCenter, i: usize| {
        let p = &px.as_slice()[i];
        let dl = (p[0] - c.lab[0]).powi(2) + (p[1] - c.lab[1]).powi(2) + (p[2] - c.lab[2]).powi(2);
        let dx = (i % w) as f64 - c.x;
        let dy = (i / w) as f64 - c.y;
        dl + (dx * dx + dy * dy) * spatial
    };

    let mut labels = vec![OUTSIDE; w * h];
    let mut best = vec![f64::INFINITY; w * h];
    for _ in 0..iterations {
        labels.fill(OUTSIDE);
        best.fill(f64::INFINITY);
        for (id, c) in centers.iter().enumerate() {
            let x0 = (c.x - s).floor().max(0.0) as usize;
            let x1 = ((c.x + s).ceil() as usize).min(w - 1);
            let y0 = (c.y - s).floor().max(0.0) as usize;
            let y1 = ((c.y + s).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    if !in_roi(i) {
                        continue;
                    }
                    let d = distance(c, i);
                    if d < best[i] {
                        best[i] = d;
                        labels[i] = id as u32;
                    }
                }
            }
        }
        // Pixels no window reached fall back to an exhaustive search.
        for i in 0..w * h {
            if labels[i] == OUTSIDE && in_roi(i) {
                for (id, c) in centers.iter().enumerate() {
                    let d = distance(c, i);
                    if d < best[i] {
                        best[i] = d;
                        labels[i] = id as u32;
                    }
                }
            }
        }

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l == OUTSIDE {
                continue;
            }
            let p = &px.as_slice()[i];
            let acc = &mut sums[l as usize];
            acc[0] += p[0];
            acc[1] += p[1];
            acc[2] += p[2];
            acc[3] += (i % w) as f64;
            acc[4] += (i / w) as f64;
            acc[5] += 1.0;
        }
        for (c, acc) in centers.iter_mut().zip(&sums) {
            if acc[5] > 0.0 {
                let n = acc[5];
                c.lab = [acc[0] / n, acc[1] / n, acc[2] / n];
                c.x = acc[3] / n;
                c.y = acc[4] / n;
            }
        }
    }
    Grid::from_vec(w, h, labels).expect("dimensions preserved")
}

/// Connectivity enforcement with the orphan threshold `S^2 / 4` derived from
/// the map's own parameters.
pub fn enforce_connectivity(map: &SegmentMap) -> SegmentMap {
    enforce_connectivity_with(map, min_segment_size(map.grid_interval()))
}

/// Splits every segment into its 4-connected components, merges components
/// smaller than `min_size` into their largest adjacent neighbour (smallest
/// first), and renumbers the result in scan order.
pub fn enforce_connectivity_with(map: &SegmentMap, min_size: usize) -> SegmentMap {
    let labels = map.labels();
    let (comp, sizes) = connected_components(labels);
    let ncomp = sizes.len();

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for (i, &c) in comp.iter().enumerate() {
        if c == usize::MAX {
            continue;
        }
        for j in labels.neighbours4(i) {
            let d = comp[j];
            if d != usize::MAX && d != c {
                adjacency[c].push(d);
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }

    let mut parent: Vec<usize> = (0..ncomp).collect();
    let mut group_size = sizes.clone();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let mut small: Vec<usize> = (0..ncomp).filter(|&c| sizes[c] < min_size).collect();
    small.sort_by_key(|&c| (sizes[c], c));
    for c in small {
        let root = find(&mut parent, c);
        if group_size[root] >= min_size {
            continue;
        }
        let mut target: Option<(usize, usize)> = None;
        for &n in &adjacency[c] {
            let r = find(&mut parent, n);
            if r == root {
                continue;
            }
            let better = match target {
                None => true,
                Some((tr, ts)) => group_size[r] > ts || (group_size[r] == ts && r < tr),
            };
            if better {
                target = Some((r, group_size[r]));
            }
        }
        if let Some((r, _)) = target {
            let (keep, drop) = if r < root { (r, root) } else { (root, r) };
            parent[drop] = keep;
            group_size[keep] += group_size[drop];
        }
    }

    let merged: Vec<u32> = comp
        .iter()
        .map(|&c| {
            if c == usize::MAX {
                OUTSIDE
            } else {
                find(&mut parent, c) as u32
            }
        })
        .collect();
    let grid =
        Grid::from_vec(labels.width(), labels.height(), merged).expect("dimensions preserved");
    SegmentMap::from_labels(grid, map.params)
}

/// 4-connected components of equal labels; `usize::MAX` for [`OUTSIDE`].
fn connected_components(labels: &Grid<u32>) -> (Vec<usize>, Vec<usize>) {
    let data = labels.as_slice();
    let mut comp = vec![usize::MAX; data.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..data.len() {
        if data[start] == OUTSIDE || comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let label = data[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in labels.neighbours4(i) {
                if comp[j] == usize::MAX && data[j] == label {
                    comp[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    width: usize,
    height: usize,
    segment_count: usize,
    params: SlicParams,
}

/// Writes the labels as an RGBA8 PNG holding each 32-bit id big-endian
/// (OUTSIDE = `0xFFFFFFFF`) and the parameters as a TOML sidecar.
pub fn write_segment_map(
    map: &SegmentMap,
    png_path: &Path,
    sidecar_path: &Path,
    comment: Option<&str>,
) -> Result<()> {
    let rgba = map.labels.map(|l| l.to_be_bytes());
    write_atomic(png_path, |w| png_io::encode_rgba8(w, &rgba, comment))?;
    let sidecar = Sidecar {
        width: map.width(),
        height: map.height(),
        segment_count: map.segment_count,
        params: map.params,
    };
    let body = toml::to_string(&sidecar).map_err(|e| Error::Manifest(e.to_string()))?;
    write_atomic(sidecar_path, |w| {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        w.write_all(body.as_bytes())?;
        Ok(())
    })
}

pub fn read_segment_map(png_path: &Path, sidecar_path: &Path) -> Result<SegmentMap> {
    let text = std::fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let sidecar: Sidecar = toml::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", sidecar_path.display())))?;
    let rgba = png_io::read_rgba8(png_path)?;
    if rgba.dims() != (sidecar.width, sidecar.height) {
        return Err(Error::DimensionMismatch {
            expected: (sidecar.width, sidecar.height),
            found: rgba.dims(),
            context: "segment map vs sidecar".into(),
        });
    }
    let labels = rgba.map(|b| u32::from_be_bytes(*b));
    let bad = labels
        .as_slice()
        .iter()
        .any(|&l| l != OUTSIDE && l as usize >= sidecar.segment_count);
    if bad {
        return Err(Error::Manifest(format!(
            "{}: label outside [0, {})",
            png_path.display(),
            sidecar.segment_count
        )));
    }
    Ok(SegmentMap {
        labels,
        segment_count: sidecar.segment_count,
        params: sidecar.params,
    })
}
