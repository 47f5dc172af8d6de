//! Discrete Gaussian white noise, the random potential, and low-order chaos.
//!
//! White noise has variance 1/δ^d per cell so that δ^d Σ_y reproduces
//! E(X_y X_y') = δ(y − y') in the continuum limit.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fock::{factorial, FockVector};
use crate::grid::{fft_grid, GridSpec, C64, ZERO};
use crate::rng;

#[derive(Clone, Debug)]
pub struct WhiteNoiseSample {
    pub values: Vec<f64>,
    pub seed: u64,
    pub index: u64,
}

/// Sample `index` of the noise family keyed by `seed` (stream rule v1).
pub fn sample_white_noise(grid: &GridSpec, seed: u64, index: u64) -> WhiteNoiseSample {
    let mut r = rng::stream(seed, index);
    WhiteNoiseSample {
        values: draw_noise(grid, &mut r),
        seed,
        index,
    }
}

pub fn draw_noise(grid: &GridSpec, r: &mut ChaCha8Rng) -> Vec<f64> {
    let s = 1.0 / grid.cell().sqrt();
    (0..grid.points()).map(|_| rng::normal(r) * s).collect()
}

/// 𝒱(x) = Σ_y V(y − x) X_y δ^d, computed as a circular correlation via FFT.
pub fn potential_field(grid: &GridSpec, v: &[C64], noise: &[f64]) -> Vec<C64> {
    let mut vh = v.to_vec();
    fft_grid(grid, &mut vh, false);
    let mut xh: Vec<C64> = noise.iter().map(|&x| C64::new(x, 0.0)).collect();
    fft_grid(grid, &mut xh, false);
    // Σ_z V(z) e^{ikz} = V̂(−k)
    let neg = |idx: usize| {
        let ix = grid.unravel(idx);
        let nx: Vec<usize> = ix.iter().map(|&i| (grid.m - i) % grid.m).collect();
        grid.ravel(&nx)
    };
    let mut out: Vec<C64> = (0..grid.points())
        .map(|idx| xh[idx] * vh[neg(idx)] * grid.cell())
        .collect();
    fft_grid(grid, &mut out, true);
    out
}

/// Offset index of y − x on the torus.
fn offset(grid: &GridSpec, y: usize, x: usize) -> usize {
    let yi = grid.unravel(y);
    let xi = grid.unravel(x);
    let o: Vec<usize> = yi
        .iter()
        .zip(&xi)
        .map(|(&a, &b)| (a + grid.m - b) % grid.m)
        .collect();
    grid.ravel(&o)
}

/// F(x, ω) = Σ_n ∫ F_n(y_1 − x, …, y_n − x) :X_{y_1}⋯X_{y_n}: dy with F_n = f_n/√(n!).
pub fn chaos_eval(u: &FockVector, noise: &[f64], x: usize) -> Result<C64> {
    let grid = &u.grid;
    let top = (0..=u.n_max)
        .rev()
        .find(|&n| u.sectors[n].iter().any(|z| *z != ZERO))
        .unwrap_or(0);
    if top > 2 {
        return Err(Error::ChaosOrder(top));
    }
    let b = grid.points();
    let cell = grid.cell();
    let mut val = u.sectors[0][0];
    if u.n_max >= 1 {
        let s: C64 = (0..b)
            .map(|y| u.sectors[1][offset(grid, y, x)] * noise[y])
            .sum();
        val += s * cell;
    }
    if u.n_max >= 2 {
        let offs: Vec<usize> = (0..b).map(|y| offset(grid, y, x)).collect();
        let mut s = ZERO;
        for ya in 0..b {
            let row = &u.sectors[2][offs[ya] * b..(offs[ya] + 1) * b];
            let mut t = ZERO;
            for yb in 0..b {
                let wick = if ya == yb {
                    noise[ya] * noise[yb] - 1.0 / cell
                } else {
                    noise[ya] * noise[yb]
                };
                t += row[offs[yb]] * wick;
            }
            s += t;
        }
        val += s * (cell * cell / factorial(2).sqrt());
    }
    Ok(val)
}

/// Sample mean and standard error of a real estimator; sample `i` draws from stream(seed, i).
pub fn mc_expect<F: FnMut(&mut ChaCha8Rng) -> f64>(mut est: F, n_samples: usize, seed: u64) -> (f64, f64) {
    assert!(n_samples >= 2, "need at least two samples");
    let mut xs = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let mut r = rng::stream(seed, i as u64);
        xs.push(est(&mut r));
    }
    mean_stderr(&xs)
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One row of a Monte Carlo cross-check.
#[derive(Clone, Debug)]
pub struct McRow {
    pub experiment_id: String,
    pub x_index: usize,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub analytic_value: f64,
}

impl McRow {
    pub fn z_score(&self) -> f64 {
        if self.mc_stderr == 0.0 {
            if (self.mc_mean - self.analytic_value).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mc_mean - self.analytic_value) / self.mc_stderr
        }
    }
}

/// Σ_y V(y − x) V(y − x') δ^d.
pub fn covariance_analytic(grid: &GridSpec, v: &[C64], x: usize, xp: usize) -> f64 {
    (0..grid.points())
        .map(|y| (v[offset(grid, y, x)] * v[offset(grid, y, xp)]).re)
        .sum::<f64>()
        * grid.cell()
}

/// Inputs of the cross-check suite: a real potential profile, a chaos state `f`
/// with sectors ≤ 1 and a test state `g` with sectors ≤ 2.
pub struct CrossCheck<'a> {
    pub grid: &'a GridSpec,
    pub v: &'a [C64],
    pub f: &'a FockVector,
    pub g: &'a FockVector,
    pub xs: &'a [usize],
    pub n_samples: usize,
    pub seed: u64,
}

/// Covariance, mean, isometry, pairing and pathwise Wick checks.
pub fn crosscheck_suite(c: &CrossCheck) -> Result<Vec<McRow>> {
    let grid = c.grid;
    let n = c.n_samples;
    let mut rows = Vec::new();
    let mut samples: Vec<(Vec<f64>, Vec<C64>)> = Vec::with_capacity(n);
    for i in 0..n {
        let x = sample_white_noise(grid, c.seed, i as u64).values;
        let pot = potential_field(grid, c.v, &x);
        samples.push((x, pot));
    }
    let vf = crate::fock::field_op(c.v, c.f, false)?.scale(C64::new(2f64.sqrt(), 0.0));
    let pair = c.g.inner(&vf);
    for &x in c.xs {
        let x2 = (x + 1) % grid.points();
        let mut mean_v = Vec::with_capacity(n);
        let mut cov = Vec::with_capacity(n);
        let mut iso = Vec::with_capacity(n);
        let mut pr_re = Vec::with_capacity(n);
        let mut pr_im = Vec::with_capacity(n);
        let mut wick_gap: f64 = 0.0;
        for (noise, pot) in &samples {
            let fx = chaos_eval(c.f, noise, x)?;
            let gx = chaos_eval(c.g, noise, x)?;
            mean_v.push(pot[x].re);
            cov.push(pot[x].re * pot[x2].re);
            iso.push(fx.norm_sqr());
            let p = pot[x] * fx * gx.conj();
            pr_re.push(p.re);
            pr_im.push(p.im);
            let lhs = pot[x] * fx;
            let rhs = chaos_eval(&vf, noise, x)?;
            wick_gap = wick_gap.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
        }
        let push = |rows: &mut Vec<McRow>, id: &str, xs: &[f64], a: f64| {
            let (m, s) = mean_stderr(xs);
            rows.push(McRow {
                experiment_id: id.into(),
                x_index: x,
                mc_mean: m,
                mc_stderr: s,
                analytic_value: a,
            });
        };
        push(&mut rows, "potential_mean", &mean_v, 0.0);
        push(&mut rows, "covariance", &cov, covariance_analytic(grid, c.v, x, x2));
        push(&mut rows, "isometry", &iso, c.f.norm().powi(2));
        push(&mut rows, "prodfock_re", &pr_re, pair.re);
        push(&mut rows, "prodfock_im", &pr_im, pair.im);
        rows.push(McRow {
            experiment_id: "wick_pathwise".into(),
            x_index: x,
            mc_mean: wick_gap,
            mc_stderr: 0.0,
            analytic_value: 0.0,
        });
    }
    Ok(rows)
}
