//! Free dynamics e^{−it(ξ−D)²} on the grid and in the CM frame, dispersive
//! decay checks and Strichartz exponent arithmetic.

use std::f64::consts::PI;

use crate::cm::CMFockVector;
use crate::error::{Error, Result};
use crate::grid::{fft_axes, fft_grid, gaussian, lp_norm, GridSpec, C64};
use crate::rng;

/// Wavenumbers 2π/L·mode per axis, in FFT order.
#[derive(Clone, Debug)]
pub struct FrequencyGrid {
    pub k: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(grid: &GridSpec) -> Self {
        Self {
            k: (0..grid.m).map(|j| grid.wavenumber(j)).collect(),
        }
    }
}

fn multiplier(grid: &GridSpec, t: f64, xi: &[f64]) -> Vec<C64> {
    grid.shifted_k2(xi)
        .into_iter()
        .map(|k2| C64::from_polar(1.0, -t * k2))
        .collect()
}

/// e^{−it(ξ−D)²}ψ.
pub fn evolve_free(grid: &GridSpec, psi: &[C64], t: f64, xi: &[f64]) -> Vec<C64> {
    let mut f = psi.to_vec();
    fft_grid(grid, &mut f, false);
    for (v, m) in f.iter_mut().zip(multiplier(grid, t, xi)) {
        *v *= m;
    }
    fft_grid(grid, &mut f, true);
    f
}

/// Precomputed free flow over a fixed time step for every slot of a CM vector.
#[derive(Clone, Debug)]
pub struct FreeFlow {
    pub t: f64,
    vacuum: Vec<C64>,
    multipliers: Vec<Vec<C64>>,
}

impl FreeFlow {
    pub fn new(v: &CMFockVector, t: f64) -> Self {
        let vacuum = v
            .slots
            .iter()
            .map(|s| {
                let k2: f64 = s.xi.iter().map(|x| x * x).sum();
                C64::from_polar(1.0, -t * k2)
            })
            .collect();
        let multipliers = v.slots.iter().map(|s| multiplier(&v.grid, t, &s.xi)).collect();
        Self { t, vacuum, multipliers }
    }

    /// Vacuum times e^{−it|ξ|²}; sectors evolved in y_G only.
    pub fn apply(&self, v: &CMFockVector) -> CMFockVector {
        let mut out = v.clone();
        let b = v.grid.points();
        let axes: Vec<usize> = (1..=v.grid.d).collect();
        for (si, slot) in out.slots.iter_mut().enumerate() {
            slot.sectors[0][0] *= self.vacuum[si];
            let mult = &self.multipliers[si];
            for sec in slot.sectors.iter_mut().skip(1) {
                let rows = sec.len() / b;
                let mut shape = vec![rows];
                shape.extend(v.grid.shape());
                fft_axes(sec, &shape, &axes, false);
                for row in sec.chunks_mut(b) {
                    for (x, m) in row.iter_mut().zip(mult) {
                        *x *= m;
                    }
                }
                fft_axes(sec, &shape, &axes, true);
            }
        }
        out
    }
}

pub fn evolve_free_fock(v: &CMFockVector, t: f64) -> CMFockVector {
    FreeFlow::new(v, t).apply(v)
}

/// T_wrap = L/(4 v_max) with v_max = 2 k_max.
pub fn wrap_time(grid: &GridSpec) -> f64 {
    grid.length() / (8.0 * grid.k_max())
}

/// ‖U(t)g‖_∞ (4π|t|)^{d/2} / ‖g‖_1.
pub fn dispersive_ratio(grid: &GridSpec, g: &[C64], t: f64) -> Result<f64> {
    let tw = wrap_time(grid);
    if t == 0.0 {
        return Err(Error::Config("dispersive_ratio needs t != 0".into()));
    }
    if t.abs() > tw {
        return Err(Error::WrapWindow { t, t_wrap: tw });
    }
    let u = evolve_free(grid, g, t, &vec![0.0; grid.d]);
    let sup = lp_norm(&u, 1.0, f64::INFINITY);
    let l1 = lp_norm(g, grid.cell(), 1.0);
    Ok(sup * (4.0 * PI * t.abs()).powf(grid.d as f64 / 2.0) / l1)
}

/// Exact e^{itΔ} of exp(−|x−c|²/(2σ²)), periodized over ±3 images.
pub fn gaussian_free_exact(grid: &GridSpec, center: &[f64], sigma: f64, t: f64) -> Vec<C64> {
    let s2 = C64::new(sigma * sigma, 2.0 * t);
    let pref = (C64::new(sigma * sigma, 0.0) / s2).sqrt();
    (0..grid.points())
        .map(|idx| {
            let x = grid.coords(idx);
            let mut amp = C64::new(1.0, 0.0);
            for a in 0..grid.d {
                let mut s = C64::new(0.0, 0.0);
                for w in -3i32..=3 {
                    let dx = x[a] - center[a] + w as f64 * grid.length();
                    s += (-(dx * dx) / (s2 * 2.0)).exp();
                }
                amp *= s * pref;
            }
            amp
        })
        .collect()
}

/// Reduced fraction num/den with den > 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

impl Ratio {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0);
        fn gcd(a: i64, b: i64) -> i64 {
            if b == 0 {
                a.abs()
            } else {
                gcd(b, a % b)
            }
        }
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Self {
            num: s * num / g,
            den: s * den / g,
        }
    }
    pub fn int(n: i64) -> Self {
        Self::new(n, 1)
    }
    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
    pub fn recip(self) -> Self {
        Self::new(self.den, self.num)
    }
    pub fn add(self, o: Self) -> Self {
        Self::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }
    pub fn mul(self, o: Self) -> Self {
        Self::new(self.num * o.num, self.den * o.den)
    }
}

/// An exponent that may be infinite; stored through its reciprocal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Exponent {
    pub recip: Ratio,
}

impl Exponent {
    pub fn finite(r: Ratio) -> Self {
        Self { recip: r.recip() }
    }
    pub fn infinity() -> Self {
        Self { recip: Ratio::int(0) }
    }
    pub fn value(self) -> f64 {
        if self.recip.num == 0 {
            f64::INFINITY
        } else {
            self.recip.recip().value()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrichartzExponents {
    pub sigma: Ratio,
    pub r_sigma: Ratio,
    pub r_sigma_prime: Ratio,
    pub q: Exponent,
    pub q_tilde: Exponent,
}

/// σ = d/2, r_σ = 2σ/(σ−1), r′_σ = 2σ/(σ+1); q = q̃ = 2 (endpoint).
pub fn strichartz_exponents(d: usize) -> Result<StrichartzExponents> {
    if d <= 2 {
        return Err(Error::EndpointUnavailable(d));
    }
    let sigma = Ratio::new(d as i64, 2);
    let two_sigma = Ratio::int(d as i64);
    let r_sigma = two_sigma.mul(sigma.add(Ratio::int(-1)).recip());
    let r_sigma_prime = two_sigma.mul(sigma.add(Ratio::int(1)).recip());
    Ok(StrichartzExponents {
        sigma,
        r_sigma,
        r_sigma_prime,
        q: Exponent::finite(Ratio::int(2)),
        q_tilde: Exponent::finite(Ratio::int(2)),
    })
}

/// 1/q + σ/r = σ/2, evaluated exactly.
pub fn admissible_check(q: Exponent, r: Exponent, sigma: Ratio) -> bool {
    let lhs = q.recip.add(sigma.mul(r.recip));
    lhs == sigma.mul(Ratio::new(1, 2))
}

/// (∫_0^{t_end} ‖U(t)g‖_{L^r}² dt)^{1/2} / ‖g‖_{L²} by composite trapezoid on `n_t` steps.
pub fn strichartz_quotient(grid: &GridSpec, g: &[C64], r: f64, t_end: f64, n_t: usize) -> f64 {
    let dt = t_end / n_t as f64;
    let zero = vec![0.0; grid.d];
    let flow = multiplier(grid, dt, &zero);
    let mut f = g.to_vec();
    fft_grid(grid, &mut f, false);
    let mut acc = 0.0;
    for j in 0..=n_t {
        let mut x = f.clone();
        fft_grid(grid, &mut x, true);
        let v = lp_norm(&x, grid.cell(), r).powi(2);
        acc += if j == 0 || j == n_t { 0.5 * v } else { v };
        for (a, m) in f.iter_mut().zip(&flow) {
            *a *= m;
        }
    }
    (acc * dt).sqrt() / lp_norm(g, grid.cell(), 2.0)
}

/// Random localized datum: three Gaussians with widths in [w_lo, w_hi] and
/// centers within L/8 of the middle. Depends on (seed, trial) only, not on the grid.
pub fn random_localized(grid: &GridSpec, seed: u64, trial: u64, w_lo: f64, w_hi: f64) -> Vec<C64> {
    let mut r = rng::stream(seed, trial);
    use rand::Rng;
    let l = grid.length();
    let mut out = vec![C64::new(0.0, 0.0); grid.points()];
    for _ in 0..3 {
        let c: Vec<f64> = (0..grid.d).map(|_| l / 2.0 + r.gen_range(-l / 8.0..l / 8.0)).collect();
        let w = r.gen_range(w_lo..w_hi);
        let amp = rng::complex_normal(&mut r);
        let g = gaussian(grid, &c, w, &vec![0.0; grid.d]);
        for (o, x) in out.iter_mut().zip(g) {
            *o += amp * x;
        }
    }
    out
}

/// Sup of the Strichartz quotient over `trials` random localized data.
pub fn strichartz_sup(grid: &GridSpec, trials: usize, seed: u64, t_end: f64, n_t: usize, w: (f64, f64)) -> Result<f64> {
    let ex = strichartz_exponents(grid.d)?;
    let r = ex.r_sigma.value();
    Ok((0..trials)
        .map(|k| {
            let g = random_localized(grid, seed, k as u64, w.0, w.1);
            strichartz_quotient(grid, &g, r, t_end, n_t)
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cm::{default_refine, to_cm};
    use crate::fock::FockVector;

    #[test]
    fn identity_at_zero_and_unitary() {
        let g = GridSpec::new(2, 16, 0.3).unwrap();
        let mut r = rng::stream(1, 0);
        let psi = rng::complex_vec(&mut r, g.points());
        let u0 = evolve_free(&g, &psi, 0.0, &[0.4, -1.0]);
        for (a, b) in u0.iter().zip(&psi) {
            assert!((a - b).norm() < 1e-13);
        }
        let u = evolve_free(&g, &psi, 0.71, &[0.4, -1.0]);
        let n0 = lp_norm(&psi, 1.0, 2.0);
        assert!((lp_norm(&u, 1.0, 2.0) - n0).abs() < 1e-12 * n0);
    }

    #[test]
    fn group_law() {
        let g = GridSpec::new(1, 64, 0.2).unwrap();
        let mut r = rng::stream(2, 0);
        let psi = rng::complex_vec(&mut r, g.points());
        let xi = [0.7];
        let a = evolve_free(&g, &evolve_free(&g, &psi, 0.3, &xi), 0.45, &xi);
        let b = evolve_free(&g, &psi, 0.75, &xi);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_matches_closed_form() {
        let g = GridSpec::new(1, 128, 0.25).unwrap();
        let sigma = 2.0 * g.delta;
        let c = [g.length() / 2.0];
        let g0 = gaussian(&g, &c, sigma, &[0.0]);
        let t = 0.5 * wrap_time(&g);
        let u = evolve_free(&g, &g0, t, &[0.0]);
        let e = gaussian_free_exact(&g, &c, sigma, t);
        for (a, b) in u.iter().zip(&e) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn gaussian_matches_closed_form_2d() {
        let g = GridSpec::new(2, 32, 0.25).unwrap();
        let sigma = 2.0 * g.delta;
        let c = [4.0, 4.0];
        let g0 = gaussian(&g, &c, sigma, &[0.0, 0.0]);
        let t = 0.5 * wrap_time(&g);
        let u = evolve_free(&g, &g0, t, &[0.0, 0.0]);
        let e = gaussian_free_exact(&g, &c, sigma, t);
        for (a, b) in u.iter().zip(&e) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn fock_flow_is_sectorwise() {
        let g = GridSpec::new(1, 8, 0.5).unwrap();
        let mut r = rng::stream(3, 0);
        let u = FockVector::random(&g, 2, 2, Some(2), &mut r);
        let mut v = to_cm(&u, default_refine(2)).unwrap();
        v.slots[0].xi = vec![2.0];
        let t = 0.37;
        let w = evolve_free_fock(&v, t);
        assert!((w.number_expectation() - v.number_expectation()).abs() < 1e-12);
        let ph = w.slots[0].sectors[0][0] / v.slots[0].sectors[0][0];
        assert!((ph - C64::from_polar(1.0, -4.0 * t)).norm() < 1e-12);
        let b = g.points();
        for n in 1..=2 {
            for (rw, rv) in w.slots[0].sectors[n].chunks(b).zip(v.slots[0].sectors[n].chunks(b)) {
                let e = evolve_free(&g, rv, t, &[2.0]);
                for (a, c) in rw.iter().zip(&e) {
                    assert!((a - c).norm() < 1e-12);
                }
            }
        }
        let wa = v.number_weight(0.3).unwrap();
        let x = evolve_free_fock(&wa, t);
        let y = evolve_free_fock(&v, t).number_weight(0.3).unwrap();
        assert!(x.sub(&y).norm() < 1e-12);
    }

    #[test]
    fn dispersive_window_and_homogeneity() {
        let g = GridSpec::new(1, 256, 0.1).unwrap();
        let g0 = gaussian(&g, &[12.8], 1.5 * g.delta, &[0.0]);
        let tw = wrap_time(&g);
        assert!(dispersive_ratio(&g, &g0, 2.0 * tw).is_err());
        assert!(dispersive_ratio(&g, &g0, 0.0).is_err());
        let a = dispersive_ratio(&g, &g0, 0.5 * tw).unwrap();
        assert!(a <= 1.0 + 1e-3);
        let g2: Vec<C64> = g0.iter().map(|z| z * 2.0).collect();
        let b = dispersive_ratio(&g, &g2, 0.5 * tw).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn exponent_arithmetic() {
        let e = strichartz_exponents(3).unwrap();
        assert_eq!(e.sigma, Ratio::new(3, 2));
        assert_eq!(e.r_sigma, Ratio::int(6));
        assert_eq!(e.r_sigma_prime, Ratio::new(6, 5));
        let e4 = strichartz_exponents(4).unwrap();
        assert_eq!(e4.sigma, Ratio::int(2));
        assert_eq!(e4.r_sigma, Ratio::int(4));
        assert_eq!(e4.r_sigma_prime, Ratio::new(4, 3));
        assert!(matches!(strichartz_exponents(2), Err(Error::EndpointUnavailable(2))));
        for d in 3..8 {
            let e = strichartz_exponents(d).unwrap();
            assert_eq!(e.r_sigma.recip().add(e.r_sigma_prime.recip()), Ratio::int(1));
            assert!(admissible_check(e.q, Exponent::finite(e.r_sigma), e.sigma));
            assert!(admissible_check(Exponent::infinity(), Exponent::finite(Ratio::int(2)), e.sigma));
        }
        assert!(!admissible_check(Exponent::finite(Ratio::int(3)), Exponent::finite(Ratio::int(6)), Ratio::new(3, 2)));
    }
}
