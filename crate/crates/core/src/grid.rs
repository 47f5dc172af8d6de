//! Periodic grids, multi-index helpers and FFT plumbing.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Periodic grid with `m` points of spacing `delta` on each of `d` axes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub d: usize,
    pub m: usize,
    pub delta: f64,
}

impl GridSpec {
    pub fn new(d: usize, m: usize, delta: f64) -> Result<Self> {
        if d == 0 || d > 3 {
            return Err(Error::Config(format!("grid.d must be 1, 2 or 3, got {d}")));
        }
        if m < 4 || !m.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid.m must be a power of two >= 4, got {m}"
            )));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Config(format!("grid.delta must be positive, got {delta}")));
        }
        Ok(Self { d, m, delta })
    }

    /// Period L = M·delta.
    pub fn length(&self) -> f64 {
        self.m as f64 * self.delta
    }

    /// Number of points M^d.
    pub fn points(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    /// Cell volume delta^d.
    pub fn cell(&self) -> f64 {
        self.delta.powi(self.d as i32)
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.m; self.d]
    }

    /// Integer mode index of FFT bin `j`, in {−M/2..M/2−1}.
    pub fn mode(&self, j: usize) -> i64 {
        let m = self.m as i64;
        let j = j as i64;
        if j < m / 2 {
            j
        } else {
            j - m
        }
    }

    /// Angular wavenumber of FFT bin `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        2.0 * PI / self.length() * self.mode(j) as f64
    }

    /// Largest |k| on the grid (the Nyquist wavenumber).
    pub fn k_max(&self) -> f64 {
        PI / self.delta
    }

    /// Multi-index of flat index `idx` (row-major, last axis fastest).
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.d];
        for a in (0..self.d).rev() {
            out[a] = idx % self.m;
            idx /= self.m;
        }
        out
    }

    pub fn ravel(&self, ix: &[usize]) -> usize {
        ix.iter().fold(0, |acc, &i| acc * self.m + i)
    }

    /// Grid point coordinates x = i·delta.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.unravel(idx)
            .into_iter()
            .map(|i| i as f64 * self.delta)
            .collect()
    }

    /// Minimal-image displacement of `x` on the torus, in [−L/2, L/2).
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length();
        x - l * ((x + 0.5 * l) / l).floor()
    }

    /// |k|² per flat frequency index, with an offset ξ: |ξ − k|².
    pub fn shifted_k2(&self, xi: &[f64]) -> Vec<f64> {
        (0..self.points())
            .map(|idx| {
                self.unravel(idx)
                    .iter()
                    .enumerate()
                    .map(|(a, &j)| {
                        let x = xi.get(a).copied().unwrap_or(0.0) - self.wavenumber(j);
                        x * x
                    })
                    .sum()
            })
            .collect()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place FFT of a row-major array of the given shape along `axes`.
/// The inverse transform is normalized by the product of transformed lengths.
pub fn fft_axes(data: &mut [C64], shape: &[usize], axes: &[usize], inverse: bool) {
    debug_assert_eq!(data.len(), shape.iter().product::<usize>());
    let mut norm = 1.0;
    for &a in axes {
        let n = shape[a];
        if n == 1 {
            continue;
        }
        norm *= n as f64;
        let stride: usize = shape[a + 1..].iter().product();
        let outer: usize = shape[..a].iter().product();
        let fft = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            if inverse {
                p.plan_fft_inverse(n)
            } else {
                p.plan_fft_forward(n)
            }
        });
        let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            continue;
        }
        // TILE adjacent lines per gather
        const TILE: usize = 16;
        let mut buf = vec![ZERO; TILE * n];
        for o in 0..outer {
            let base = o * n * stride;
            for s0 in (0..stride).step_by(TILE) {
                let w = TILE.min(stride - s0);
                for k in 0..n {
                    let row = &data[base + k * stride + s0..base + k * stride + s0 + w];
                    for (j, v) in row.iter().enumerate() {
                        buf[j * n + k] = *v;
                    }
                }
                fft.process_with_scratch(&mut buf[..w * n], &mut scratch);
                for k in 0..n {
                    let row = &mut data[base + k * stride + s0..base + k * stride + s0 + w];
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = buf[j * n + k];
                    }
                }
            }
        }
    }
    if inverse && norm != 1.0 {
        let s = 1.0 / norm;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// d-dimensional FFT of one grid function.
pub fn fft_grid(grid: &GridSpec, data: &mut [C64], inverse: bool) {
    let axes: Vec<usize> = (0..grid.d).collect();
    fft_axes(data, &grid.shape(), &axes, inverse);
}

/// Signed mode index for an FFT of length `n`.
pub fn signed_mode(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Zero every Fourier mode with |mode| > `band` on some axis.
pub fn project_band(grid: &GridSpec, f: &[C64], band: usize) -> Vec<C64> {
    let mut g = f.to_vec();
    fft_grid(grid, &mut g, false);
    for (idx, v) in g.iter_mut().enumerate() {
        if grid
            .unravel(idx)
            .iter()
            .any(|&j| grid.mode(j).unsigned_abs() as usize > band)
        {
            *v = ZERO;
        }
    }
    fft_grid(grid, &mut g, true);
    g
}

/// Translate a grid function by a real displacement `s` (per axis) using
/// trigonometric interpolation: returns x ↦ f(x + s).
pub fn shift_grid(grid: &GridSpec, f: &[C64], s: &[f64]) -> Vec<C64> {
    let mut g = f.to_vec();
    fft_grid(grid, &mut g, false);
    for (idx, v) in g.iter_mut().enumerate() {
        let phase: f64 = grid
            .unravel(idx)
            .iter()
            .enumerate()
            .map(|(a, &j)| grid.wavenumber(j) * s[a])
            .sum();
        *v *= C64::from_polar(1.0, phase);
    }
    fft_grid(grid, &mut g, true);
    g
}

/// Riemann-sum L^p norm with cell weight `w` (p = ∞ gives the max).
pub fn lp_norm(values: &[C64], w: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    }
    let s: f64 = values.iter().map(|v| v.norm().powf(p)).sum();
    (s * w).powf(1.0 / p)
}

/// Σ conj(a)·b·w.
pub fn inner(a: &[C64], b: &[C64], w: f64) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * w
}

/// Periodized Gaussian exp(−|x−c|²/(2σ²)) with wavevector `k0`, sampled on the grid.
pub fn gaussian(grid: &GridSpec, center: &[f64], sigma: f64, k0: &[f64]) -> Vec<C64> {
    (0..grid.points())
        .map(|idx| {
            let x = grid.coords(idx);
            let mut amp = 1.0;
            for a in 0..grid.d {
                let mut s = 0.0;
                for w in -3i32..=3 {
                    let dx = x[a] - center[a] + w as f64 * grid.length();
                    s += (-dx * dx / (2.0 * sigma * sigma)).exp();
                }
                amp *= s;
            }
            let ph: f64 = (0..grid.d).map(|a| k0[a] * x[a]).sum();
            C64::from_polar(amp, ph)
        })
        .collect()
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(1, 6, 0.1).is_err());
        assert!(GridSpec::new(1, 2, 0.1).is_err());
        assert!(GridSpec::new(1, 8, 0.0).is_err());
        assert!(GridSpec::new(1, 8, 0.5).is_ok());
    }

    #[test]
    fn fft_round_trip_multi_axis() {
        let shape = [4, 8, 2];
        let mut x: Vec<C64> = (0..64).map(|i| C64::new(i as f64, (i * i) as f64 * 0.1)).collect();
        let orig = x.clone();
        fft_axes(&mut x, &shape, &[0, 1, 2], false);
        fft_axes(&mut x, &shape, &[0, 1, 2], true);
        for (a, b) in x.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn fft_single_axis_matches_dft() {
        let shape = [3, 8];
        let x: Vec<C64> = (0..24).map(|i| C64::new((i as f64).sin(), (i as f64).cos())).collect();
        let mut y = x.clone();
        fft_axes(&mut y, &shape, &[1], false);
        for r in 0..3 {
            for k in 0..8 {
                let mut s = ZERO;
                for j in 0..8 {
                    s += x[r * 8 + j] * C64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / 8.0);
                }
                assert!((s - y[r * 8 + k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn shift_of_band_limited_is_exact() {
        let g = GridSpec::new(1, 32, 0.25).unwrap();
        let f: Vec<C64> = (0..32)
            .map(|i| {
                let x = i as f64 * 0.25;
                let k = 2.0 * PI / g.length();
                C64::new((3.0 * k * x).cos(), (2.0 * k * x).sin())
            })
            .collect();
        let s = 0.137;
        let h = shift_grid(&g, &f, &[s]);
        let k = 2.0 * PI / g.length();
        for (i, v) in h.iter().enumerate() {
            let x = i as f64 * 0.25 + s;
            let e = C64::new((3.0 * k * x).cos(), (2.0 * k * x).sin());
            assert!((v - e).norm() < 1e-12);
        }
    }

    #[test]
    fn wavenumbers_are_nyquist_ordered() {
        let g = GridSpec::new(1, 8, 1.0).unwrap();
        let modes: Vec<i64> = (0..8).map(|j| g.mode(j)).collect();
        assert_eq!(modes, vec![0, 1, 2, 3, -4, -3, -2, -1]);
    }
}
