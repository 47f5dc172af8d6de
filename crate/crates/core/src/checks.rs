//! Seeded property batches for operators, the CM frame, the L^p bounds and the
//! norm equivalences. Each row carries a residual and the tolerance it is held to.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cm::{ag_apply, ag_star_apply, d_yg, from_cm, lp_bound_report, to_cm, total_momentum_lab, young_check, Exponents};
use crate::error::Result;
use crate::fock::{annihilate, create, field_op, symmetrize, FockVector};
use crate::grid::{inner, lp_norm, project_band, GridSpec, C64, ZERO};
use crate::norms::{kappa_band, n_norm};
use crate::rng;

#[derive(Clone, Debug)]
pub struct CheckRow {
    pub suite: &'static str,
    pub id: String,
    pub trial: u64,
    pub value: f64,
    pub tol: f64,
}

impl CheckRow {
    pub fn pass(&self) -> bool {
        self.value <= self.tol
    }
}

/// Real potential with Fourier modes |mode| ≤ band.
pub fn band_potential(grid: &GridSpec, r: &mut ChaCha8Rng, band: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..grid.points()).map(|_| C64::new(rng::normal(r), 0.0)).collect();
    project_band(grid, &v, band).iter().map(|z| C64::new(z.re, 0.0)).collect()
}

pub fn band_function(grid: &GridSpec, r: &mut ChaCha8Rng, band: usize) -> Vec<C64> {
    project_band(grid, &rng::complex_vec(r, grid.points()), band)
}

/// Random band-limited Fock vector carrying only sectors `lo..=hi`.
pub fn sector_state(grid: &GridSpec, n_max: usize, lo: usize, hi: usize, band: usize, r: &mut ChaCha8Rng) -> FockVector {
    let mut u = FockVector::random(grid, n_max, hi, Some(band), r);
    for n in 0..lo {
        u.sectors[n].iter_mut().for_each(|z| *z = ZERO);
    }
    u
}

fn l2(grid: &GridSpec, f: &[C64]) -> f64 {
    lp_norm(f, grid.cell(), 2.0)
}

fn rel(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// CCR, a/a* and φ(V) adjointness, symmetrization projection and a_G/a_G*
/// adjointness. Trial t checks the a_G pair between sectors n−1 and n with
/// n = 1 + t mod n_max.
pub fn ops_suite(grid: &GridSpec, n_max: usize, band: usize, trials: u64, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let b = grid.points();
    let refine = crate::cm::default_refine(n_max);
    for t in 0..trials {
        let mut r = rng::stream(seed, t);
        let f = band_function(grid, &mut r, band);
        let g = band_function(grid, &mut r, band);
        let vp = band_potential(grid, &mut r, band);
        let u = sector_state(grid, n_max, 0, n_max - 1, band, &mut r);
        let w = sector_state(grid, n_max, 0, n_max - 1, band, &mut r);
        let mut push = |id: &str, value: f64, tol: f64| {
            rows.push(CheckRow {
                suite: "ops",
                id: id.into(),
                trial: t,
                value,
                tol,
            })
        };

        let fg = inner(&f, &g, grid.cell());
        let comm = annihilate(&f, &create(&g, &u))
            .sub(&create(&g, &annihilate(&f, &u)))
            .sub(&u.scale(fg));
        push("ccr", rel(comm.norm(), l2(grid, &f) * l2(grid, &g) * u.norm()), 1e-10);

        let lhs = w.inner(&annihilate(&f, &u));
        let rhs = create(&f, &w).inner(&u);
        push("a_adjoint", rel((lhs - rhs).norm(), l2(grid, &f) * u.norm() * w.norm()), 1e-10);

        let lhs = w.inner(&field_op(&vp, &u, false)?);
        let rhs = field_op(&vp, &w, false)?.inner(&u);
        push("phi_symmetric", rel((lhs - rhs).norm(), l2(grid, &vp) * u.norm() * w.norm()), 1e-10);

        let nt = n_max.min(3);
        let x = rng::complex_vec(&mut r, b.pow(nt as u32));
        let y = rng::complex_vec(&mut r, b.pow(nt as u32));
        let sx = symmetrize(&x, nt, b);
        let ssx = symmetrize(&sx, nt, b);
        let sy = symmetrize(&y, nt, b);
        let nx = l2_flat(&x);
        let idem = sx.iter().zip(&ssx).map(|(a, c)| (a - c).norm_sqr()).sum::<f64>().sqrt();
        push("symmetrize_idempotent", rel(idem, nx), 1e-10);
        let lhs: C64 = y.iter().zip(&sx).map(|(a, c)| a.conj() * c).sum();
        let rhs: C64 = sy.iter().zip(&x).map(|(a, c)| a.conj() * c).sum();
        push("symmetrize_self_adjoint", rel((lhs - rhs).norm(), nx * l2_flat(&y)), 1e-10);

        // truncating at n keeps the same lattice (refine is fixed by n_max)
        let n = 1 + (t as usize) % n_max;
        let us = sector_state(grid, n, n, n, band, &mut r);
        let ws = sector_state(grid, n, n - 1, n - 1, band, &mut r);
        let uc = to_cm(&us, refine)?;
        let wc = to_cm(&ws, refine)?;
        let down = ag_apply(&vp, &uc);
        let up = ag_star_apply(&vp, &wc);
        let lhs = wc.inner(&down);
        let rhs = up.inner(&uc);
        let scale = (wc.norm() * down.norm()).max(up.norm() * uc.norm());
        push(&format!("ag_adjoint_n{n}"), rel((lhs - rhs).norm(), scale), 1e-7);
    }
    Ok(rows)
}

fn l2_flat(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// U_G norm preservation, round trip, intertwining with a and a*, and
/// dΓ(D_y) ↦ D_{y_G}, on band-limited states.
pub fn frame_suite(grid: &GridSpec, n_max: usize, band: usize, trials: u64, seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let refine = crate::cm::default_refine(n_max);
    for t in 0..trials {
        let mut r = rng::stream(seed, 1000 + t);
        let u = sector_state(grid, n_max, 0, n_max, band, &mut r);
        let vp = band_potential(grid, &mut r, band);
        let mut push = |id: &str, value: f64, tol: f64| {
            rows.push(CheckRow {
                suite: "frame",
                id: id.into(),
                trial: t,
                value,
                tol,
            })
        };
        let uc = to_cm(&u, refine)?;
        push("unitary", rel((uc.norm() - u.norm()).abs(), u.norm()), 1e-7);
        push("round_trip", rel(from_cm(&uc).sub(&u).norm(), u.norm()), 1e-7);

        let lab = to_cm(&annihilate(&vp, &u), refine)?;
        let cm = ag_apply(&vp, &uc);
        push("intertwine_a", rel(lab.sub(&cm).norm(), lab.norm()), 1e-7);

        let lab = to_cm(&create(&vp, &u), refine)?;
        let cm = ag_star_apply(&vp, &uc);
        push("intertwine_a_star", rel(lab.sub(&cm).norm(), lab.norm()), 1e-7);
        push(
            "intertwine_dropped_mass",
            rel((lab.dropped_mass - cm.dropped_mass).abs(), lab.dropped_mass),
            1e-7,
        );

        for axis in 0..grid.d {
            let lab = to_cm(&total_momentum_lab(&u, axis), refine)?;
            let cm = d_yg(&uc, axis);
            push(&format!("momentum_axis{axis}"), rel(lab.sub(&cm).norm(), lab.norm()), 1e-9);
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct IneqRow {
    pub id: String,
    pub exponents: String,
    pub trial_seed: u64,
    pub lhs: f64,
    pub rhs: f64,
}

impl IneqRow {
    pub fn ratio(&self) -> f64 {
        if self.rhs == 0.0 {
            if self.lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.lhs / self.rhs
        }
    }
}

/// Exponent tuples (q', p') used by default.
pub const DEFAULT_TUPLES: [(f64, f64); 5] = [(1.0, 1.0), (1.0, 2.0), (1.2, 2.0), (1.25, 1.5), (2.0, 2.0)];

/// lp_bound_report and the Young bound on random states and potentials.
pub fn inequality_suite(
    grid: &GridSpec,
    n_max: usize,
    band: usize,
    tuples: &[(f64, f64)],
    trials: u64,
    seed: u64,
    alphas: (f64, f64),
) -> Result<Vec<IneqRow>> {
    let mut rows = Vec::new();
    let refine = crate::cm::default_refine(n_max);
    for t in 0..trials {
        let mut r = rng::stream(seed, 2000 + t);
        let u = sector_state(grid, n_max, 0, n_max, band, &mut r);
        let uc = to_cm(&u, refine)?;
        let vp = band_potential(grid, &mut r, band);
        let phi = band_function(grid, &mut r, band);
        for &(qp, pp) in tuples {
            let ex = Exponents::new(qp, pp)?;
            for row in lp_bound_report(&vp, &uc, &ex, Some(alphas)) {
                rows.push(IneqRow {
                    id: row.id,
                    exponents: ex.label(),
                    trial_seed: t,
                    lhs: row.lhs,
                    rhs: row.rhs,
                });
            }
            let (lhs, rhs) = young_check(grid, &vp, &phi, &ex);
            rows.push(IneqRow {
                id: "young".into(),
                exponents: ex.label(),
                trial_seed: t,
                lhs,
                rhs,
            });
        }
    }
    Ok(rows)
}

/// Non-negative profile on `cells` cells: a random mix of dyadic-interval
/// bumps, a smooth bump and a ramp.
pub fn random_profile(r: &mut ChaCha8Rng, cells: usize) -> Vec<f64> {
    let mut out = vec![0.0; cells];
    let kind = r.gen_range(0..3);
    if kind != 1 {
        // bumps on J^n = [(1−2^{−n}), (1−2^{−n−1})) in units of the window
        for _ in 0..r.gen_range(1..4) {
            let n: i32 = r.gen_range(0..5);
            let a = ((1.0 - 2f64.powi(-n)) * cells as f64).floor() as usize;
            let b = (((1.0 - 2f64.powi(-n - 1)) * cells as f64).ceil() as usize).min(cells).max(a + 1);
            let amp = r.gen_range(0.1..2.0);
            for v in &mut out[a..b] {
                *v += amp;
            }
        }
    }
    if kind != 0 {
        let c = r.gen_range(0.0..1.0);
        let w = r.gen_range(0.02..0.4);
        let amp = r.gen_range(0.1..2.0);
        let slope = r.gen_range(-1.0..1.0);
        for (j, v) in out.iter_mut().enumerate() {
            let s = (j as f64 + 0.5) / cells as f64;
            *v += amp * (-(s - c).powi(2) / (2.0 * w * w)).exp() + (0.5 + slope * (s - 0.5)).max(0.0) * 0.3;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct NormRow {
    pub trial: u64,
    pub p: u8,
    pub i: u8,
    pub ratio: f64,
    pub lo: f64,
    pub hi: f64,
    /// |N_{p,i,T,h}(φ) − T h^{−1/p} N_{p,i,1,1}(φ(T·/h))| relative to the left side.
    pub homogeneity: f64,
}

impl NormRow {
    pub fn in_band(&self) -> bool {
        self.ratio >= self.lo && self.ratio <= self.hi
    }
}

pub fn norm_suite(trials: u64, cells: usize, seed: u64, t_window: f64, h: f64) -> Vec<NormRow> {
    let mut rows = Vec::new();
    for t in 0..trials {
        let mut r = rng::stream(seed, 3000 + t);
        let prof = random_profile(&mut r, cells);
        for p in [1u8, 2] {
            let base = n_norm(&prof, p, 1, t_window, h);
            for i in 1u8..=4 {
                let v = n_norm(&prof, p, i, t_window, h);
                let unit = n_norm(&prof, p, i, 1.0, 1.0);
                let scaled = t_window / h.powf(1.0 / p as f64) * unit;
                let (lo, hi) = kappa_band(p, i);
                rows.push(NormRow {
                    trial: t,
                    p,
                    i,
                    ratio: v / base,
                    lo,
                    hi,
                    homogeneity: rel((v - scaled).abs(), v),
                });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ops_suite_small_grid() {
        let g = GridSpec::new(1, 16, 0.5).unwrap();
        let rows = ops_suite(&g, 3, 2, 6, 1).unwrap();
        assert!(rows.iter().all(|r| r.pass()), "{:?}", rows.iter().filter(|r| !r.pass()).collect::<Vec<_>>());
    }

    #[test]
    fn frame_suite_small_grid() {
        let g = GridSpec::new(1, 16, 0.5).unwrap();
        let rows = frame_suite(&g, 3, 2, 2, 1).unwrap();
        assert!(rows.iter().all(|r| r.pass()), "{:?}", rows.iter().filter(|r| !r.pass()).collect::<Vec<_>>());
    }

    #[test]
    fn vacuum_creation_bound_is_tight() {
        let g = GridSpec::new(1, 8, 0.5).unwrap();
        let mut r = rng::stream(5, 0);
        let vp = band_potential(&g, &mut r, 2);
        let u = FockVector::vacuum(&g, 2, C64::new(1.0, 0.0));
        let uc = to_cm(&u, 2).unwrap();
        let ex = Exponents::new(1.25, 1.5).unwrap();
        let rows = lp_bound_report(&vp, &uc, &ex, None);
        let row = rows.iter().find(|r| r.id == "a_star_vacuum").unwrap();
        assert!((row.ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inequality_ratios_bounded() {
        let g = GridSpec::new(1, 8, 0.5).unwrap();
        let rows = inequality_suite(&g, 3, 2, &DEFAULT_TUPLES, 3, 2, (0.0, 1.0)).unwrap();
        for r in &rows {
            assert!(r.ratio() <= 1.0 + 1e-6, "{} {} {}", r.id, r.exponents, r.ratio());
        }
    }

    #[test]
    fn norm_suite_bands_and_homogeneity() {
        for r in norm_suite(10, 32, 3, 0.7, 0.2) {
            assert!(r.in_band(), "{r:?}");
            assert!(r.homogeneity < 1e-10, "{r:?}");
        }
    }
}
