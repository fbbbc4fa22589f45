//! Straightforward reference implementations used to cross-check the
//! optimized code. Each one trades speed for directness.

#![allow(dead_code)]

/// Symmetric co-occurrence counts by enumerating every ordered pair of
/// labelled cells and keeping those separated by exactly `(dx, dy)`.
pub fn glcm_counts(levels: &[Vec<Option<usize>>], g: usize, dx: isize, dy: isize) -> Vec<u64> {
    let cells: Vec<(isize, isize, usize)> = levels
        .iter()
        .enumerate()
        .flat_map(|(y, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(x, l)| l.map(|l| (x as isize, y as isize, l)))
        })
        .collect();
    let mut counts = vec![0u64; g * g];
    for &(x1, y1, a) in &cells {
        for &(x2, y2, b) in &cells {
            if x2 - x1 == dx && y2 - y1 == dy {
                counts[a * g + b] += 1;
                counts[b * g + a] += 1;
            }
        }
    }
    counts
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln() / std::f64::consts::LN_2
    } else {
        0.0
    }
}

/// The 13 Haralick descriptors of a normalized `g × g` matrix, written
/// straight from their textbook definitions with 0-based levels and bits.
pub fn haralick(p: &[f64], g: usize) -> [f64; 13] {
    let at = |i: usize, j: usize| p[i * g + j];
    let idx = || (0..g).flat_map(move |i| (0..g).map(move |j| (i, j)));

    let px: Vec<f64> = (0..g).map(|i| (0..g).map(|j| at(i, j)).sum()).collect();
    let py: Vec<f64> = (0..g).map(|j| (0..g).map(|i| at(i, j)).sum()).collect();
    let ux: f64 = (0..g).map(|i| i as f64 * px[i]).sum();
    let uy: f64 = (0..g).map(|j| j as f64 * py[j]).sum();
    let sx = (0..g)
        .map(|i| (i as f64 - ux).powi(2) * px[i])
        .sum::<f64>()
        .sqrt();
    let sy = (0..g)
        .map(|j| (j as f64 - uy).powi(2) * py[j])
        .sum::<f64>()
        .sqrt();

    let f1: f64 = idx().map(|(i, j)| at(i, j).powi(2)).sum();
    let f2: f64 = (0..g)
        .map(|n| {
            let mass: f64 = idx()
                .filter(|&(i, j)| i.abs_diff(j) == n)
                .map(|(i, j)| at(i, j))
                .sum();
            (n * n) as f64 * mass
        })
        .sum();
    let f3 = if sx * sy > 0.0 {
        idx()
            .map(|(i, j)| (i as f64 - ux) * (j as f64 - uy) * at(i, j))
            .sum::<f64>()
            / (sx * sy)
    } else {
        0.0
    };
    let f4: f64 = idx().map(|(i, j)| (i as f64 - ux).powi(2) * at(i, j)).sum();
    let f5: f64 = idx()
        .map(|(i, j)| at(i, j) / (1.0 + (i as f64 - j as f64).powi(2)))
        .sum();

    let psum: Vec<f64> = (0..2 * g - 1)
        .map(|k| {
            idx()
                .filter(|&(i, j)| i + j == k)
                .map(|(i, j)| at(i, j))
                .sum()
        })
        .collect();
    let pdiff: Vec<f64> = (0..g)
        .map(|k| {
            idx()
                .filter(|&(i, j)| i.abs_diff(j) == k)
                .map(|(i, j)| at(i, j))
                .sum()
        })
        .collect();
    let f6: f64 = psum.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let f8: f64 = psum.iter().map(|&v| h(v)).sum();
    let f7: f64 = psum
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64 - f6).powi(2) * v)
        .sum();
    let f9: f64 = idx().map(|(i, j)| h(at(i, j))).sum();
    let dmean: f64 = pdiff.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let f10: f64 = pdiff
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64 - dmean).powi(2) * v)
        .sum();
    let f11: f64 = pdiff.iter().map(|&v| h(v)).sum();

    let hx: f64 = px.iter().map(|&v| h(v)).sum();
    let hy: f64 = py.iter().map(|&v| h(v)).sum();
    let log2 = |v: f64| v.ln() / std::f64::consts::LN_2;
    let hxy1: f64 = idx()
        .filter(|&(i, j)| px[i] * py[j] > 0.0)
        .map(|(i, j)| -at(i, j) * log2(px[i] * py[j]))
        .sum();
    let hxy2: f64 = idx()
        .filter(|&(i, j)| px[i] * py[j] > 0.0)
        .map(|(i, j)| -px[i] * py[j] * log2(px[i] * py[j]))
        .sum();
    let hmax = hx.max(hy);
    let f12 = if hmax > 0.0 { (f9 - hxy1) / hmax } else { 0.0 };
    let f13 = (1.0 - (-2.0 * (hxy2 - f9) * std::f64::consts::LN_2).exp())
        .max(0.0)
        .sqrt();
    [f1, f2, f3, f4, f5, f6, f7, f8, f9, f10, f11, f12, f13]
}

/// Primal objective ½(‖w‖² + (b/B)²) + C Σ max(0, 1 − yᵢ(w·xᵢ + b)).
pub fn svm_primal(w: &[f64], b: f64, bias_scale: f64, x: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + (b / bias_scale).powi(2));
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            (1.0 - yi * (xi.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b)).max(0.0)
        })
        .sum();
    reg + c * loss
}

/// Full-batch subgradient descent on [`svm_primal`] with a bias feature of
/// value `bias_scale`. Constant-step phases, each with half the step of the
/// last, restart from the best iterate seen so far; the best point wins.
pub fn svm_subgradient(x: &[Vec<f64>], y: &[f64], c: f64, bias_scale: f64) -> (Vec<f64>, f64, f64) {
    let d = x[0].len();
    let mut v = vec![0.0; d + 1]; // weights then bias coefficient
    let value = |v: &[f64]| svm_primal(&v[..d], v[d] * bias_scale, bias_scale, x, y, c);
    let mut best = v.clone();
    let mut best_value = value(&v);
    let mut step = 1e-2;
    while step > 1e-9 {
        v.clone_from(&best);
        for _ in 0..4000 {
            let mut grad = v.clone();
            for (xi, &yi) in x.iter().zip(y) {
                let margin =
                    yi * (xi.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d] * bias_scale);
                if margin < 1.0 {
                    for k in 0..d {
                        grad[k] -= c * yi * xi[k];
                    }
                    grad[d] -= c * yi * bias_scale;
                }
            }
            for k in 0..=d {
                v[k] -= step * grad[k];
            }
            let f = value(&v);
            if f < best_value {
                best_value = f;
                best.clone_from(&v);
            }
        }
        step *= 0.5;
    }
    let b = best[d] * bias_scale;
    best.truncate(d);
    (best, b, best_value)
}

/// Deterministic stream of standard normal draws (Box-Muller on a
/// xorshift generator) so test data does not depend on the crate's RNGs.
pub struct Gauss(u64);

impl Gauss {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn uniform(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        ((self.0 >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let (u, v) = (self.uniform(), self.uniform());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

/// `n` points from two unit-variance 2-D Gaussians at (±1, ±1), labels ±1.
pub fn gaussian_blobs(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut g = Gauss::new(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        x.push(vec![label + g.normal(), label + g.normal()]);
        y.push(label);
    }
    (x, y)
}
