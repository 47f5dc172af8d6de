//! Coherent states, Husimi densities, discrete Wigner/Weyl pairs at scale h,
//! and energy-band masses.
//!
//! Phase-space points are X = (x, ξ) with x macroscopic (x = h·y for a grid
//! point y) and ξ an FFT wavenumber of the state grid.
//!
//! The Wigner transform uses W[v,u](x,ξ) = Σ_s e^{−iξ·s} u(x+s/2) conj v(x−s/2),
//! which pairs with the Weyl kernel e^{i(x−y)·ξ} a((x+y)/2, ξ). Offsets s run
//! over δ·{−M/2..M/2}^d with half weight on the two end points of each axis;
//! half-cell values come from trigonometric interpolation.

use std::f64::consts::PI;

use crate::cm::CMFockVector;
use crate::error::{Error, Result};
use crate::grid::{fft_axes, fft_grid, inner, shift_grid, GridSpec, C64, ZERO};
use crate::solver::{reference_integrate, Potentials, SolverConfig};

#[derive(Clone, Debug)]
pub struct CoherentState {
    pub h: f64,
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub values: Vec<C64>,
    /// |‖φ‖ − 1| before renormalization.
    pub norm_defect: f64,
}

/// Spatial width 1/√h of a coherent state, checked against [2δ, L/8].
pub fn packet_width(grid: &GridSpec, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("h must be > 0, got {h}")));
    }
    let sigma = 1.0 / h.sqrt();
    let (lo, hi) = (2.0 * grid.delta, grid.length() / 8.0);
    if sigma < lo || sigma > hi {
        return Err(Error::Width { sigma, lo, hi });
    }
    Ok(sigma)
}

/// Periodized Gaussian e^{−h|y−c|²/2} centred at the grid position `c`.
fn envelope(grid: &GridSpec, h: f64, c: &[f64]) -> Vec<f64> {
    let l = grid.length();
    let axis: Vec<Vec<f64>> = (0..grid.d)
        .map(|a| {
            (0..grid.m)
                .map(|i| {
                    let y = i as f64 * grid.delta;
                    (-4i32..=4)
                        .map(|w| {
                            let dy = y - c[a] + w as f64 * l;
                            (-0.5 * h * dy * dy).exp()
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    (0..grid.points())
        .map(|idx| {
            grid.unravel(idx)
                .iter()
                .enumerate()
                .map(|(a, &i)| axis[a][i])
                .product()
        })
        .collect()
}

/// φ^h_{X0}(y) = (h/π)^{d/4} e^{iξ0·(y − x0/(2h))} e^{−h|y − x0/h|²/2}, summed over
/// periodic images and renormalized on the grid.
pub fn coherent_state(grid: &GridSpec, h: f64, x0: &[f64], xi0: &[f64]) -> Result<CoherentState> {
    packet_width(grid, h)?;
    if x0.len() != grid.d || xi0.len() != grid.d {
        return Err(Error::Config("coherent state centre has the wrong dimension".into()));
    }
    let l = grid.length();
    let pref = (h / PI).powf(grid.d as f64 / 4.0);
    let c: Vec<f64> = x0.iter().map(|x| x / h).collect();
    let mut values: Vec<C64> = (0..grid.points())
        .map(|idx| {
            let y = grid.coords(idx);
            let mut v = C64::new(pref, 0.0);
            for a in 0..grid.d {
                let mut s = ZERO;
                for w in -4i32..=4 {
                    let ya = y[a] + w as f64 * l;
                    let dy = ya - c[a];
                    s += C64::from_polar((-0.5 * h * dy * dy).exp(), xi0[a] * (ya - 0.5 * c[a]));
                }
                v *= s;
            }
            v
        })
        .collect();
    let n = inner(&values, &values, grid.cell()).re.sqrt();
    values.iter_mut().for_each(|v| *v /= n);
    Ok(CoherentState {
        h,
        x0: x0.to_vec(),
        xi0: xi0.to_vec(),
        values,
        norm_defect: (n - 1.0).abs(),
    })
}

/// |⟨φ^h_X, φ^h_Y⟩|² = exp(−(|x_X − x_Y|² + |ξ_X − ξ_Y|²)/(2h)) on R^d.
pub fn coherent_overlap_exact(h: f64, x: (&[f64], &[f64]), y: (&[f64], &[f64])) -> f64 {
    let dx: f64 = x.0.iter().zip(y.0).map(|(a, b)| (a - b).powi(2)).sum();
    let dk: f64 = x.1.iter().zip(y.1).map(|(a, b)| (a - b).powi(2)).sum();
    (-(dx + dk) / (2.0 * h)).exp()
}

/// Anti-Wick density on x nodes every `stride` grid points × all FFT wavenumbers.
/// `values` has layout `[x node][ξ bin]`.
#[derive(Clone, Debug)]
pub struct HusimiField {
    pub grid: GridSpec,
    pub h: f64,
    pub stride: usize,
    pub values: Vec<f64>,
}

impl HusimiField {
    pub fn nodes_per_axis(&self) -> usize {
        self.grid.m / self.stride
    }

    pub fn x_nodes(&self) -> usize {
        self.nodes_per_axis().pow(self.grid.d as u32)
    }

    /// Macroscopic position of x node `i`.
    pub fn x_of(&self, i: usize) -> Vec<f64> {
        let n = self.nodes_per_axis();
        let mut out = vec![0.0; self.grid.d];
        let mut r = i;
        for a in (0..self.grid.d).rev() {
            out[a] = self.h * (r % n * self.stride) as f64 * self.grid.delta;
            r /= n;
        }
        out
    }

    pub fn xi_of(&self, k: usize) -> Vec<f64> {
        self.grid.unravel(k).iter().map(|&j| self.grid.wavenumber(j)).collect()
    }

    /// Cell volume of the phase grid divided by (2πh)^d.
    pub fn cell_measure(&self) -> f64 {
        let dx = self.h * self.stride as f64 * self.grid.delta;
        let dk = 2.0 * PI / self.grid.length();
        (dx * dk / (2.0 * PI * self.h)).powi(self.grid.d as i32)
    }

    /// ∫ σ dX/(2πh)^d by the phase-grid Riemann sum.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_measure()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Weighted sum of fields on the same phase grid (partial trace over slots).
    pub fn weighted_sum(fields: &[(f64, &HusimiField)]) -> Result<HusimiField> {
        let first = fields.first().ok_or_else(|| Error::Config("no Husimi fields to sum".into()))?.1;
        let mut out = first.clone();
        out.values.iter_mut().for_each(|v| *v = 0.0);
        for (w, f) in fields {
            if f.grid != first.grid || f.stride != first.stride || f.h != first.h {
                return Err(Error::Config("Husimi fields live on different phase grids".into()));
            }
            for (o, v) in out.values.iter_mut().zip(&f.values) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// Phase-space mean (x, ξ). Positions use the minimal image around `x_ref`.
    pub fn centre(&self, x_ref: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.grid.d;
        let period = self.h * self.grid.length();
        let nk = self.grid.points();
        let (mut sx, mut sk, mut tot) = (vec![0.0; d], vec![0.0; d], 0.0);
        for i in 0..self.x_nodes() {
            let x = self.x_of(i);
            for k in 0..nk {
                let w = self.values[i * nk + k];
                if w == 0.0 {
                    continue;
                }
                let xi = self.xi_of(k);
                for a in 0..d {
                    let dx = x[a] - x_ref[a];
                    let dx = dx - period * (dx / period + 0.5).floor();
                    sx[a] += w * (x_ref[a] + dx);
                    sk[a] += w * xi[a];
                }
                tot += w;
            }
        }
        (sx.iter().map(|s| s / tot).collect(), sk.iter().map(|s| s / tot).collect())
    }
}

/// σ(X) = Σ_i w_i |⟨φ^h_X, ψ_i⟩|² for the ensemble ρ = Σ_i w_i |ψ_i⟩⟨ψ_i|.
pub fn husimi(grid: &GridSpec, h: f64, ensemble: &[(f64, &[C64])], stride: usize) -> Result<HusimiField> {
    packet_width(grid, h)?;
    if stride == 0 || grid.m % stride != 0 {
        return Err(Error::Config(format!("Husimi stride {stride} must divide M = {}", grid.m)));
    }
    let mut field = HusimiField {
        grid: grid.clone(),
        h,
        stride,
        values: vec![],
    };
    let nk = grid.points();
    let nx = field.x_nodes();
    field.values = vec![0.0; nx * nk];
    let dv = grid.cell();
    let mut buf = vec![ZERO; nk];
    for i in 0..nx {
        let c: Vec<f64> = field.x_of(i).iter().map(|x| x / h).collect();
        let env = envelope(grid, h, &c);
        let n2: f64 = env.iter().map(|e| e * e).sum::<f64>() * dv;
        let scale = dv / n2.sqrt();
        let row = &mut field.values[i * nk..(i + 1) * nk];
        for (w, psi) in ensemble {
            for ((b, e), p) in buf.iter_mut().zip(&env).zip(psi.iter()) {
                *b = p * *e;
            }
            fft_grid(grid, &mut buf, false);
            for (r, b) in row.iter_mut().zip(&buf) {
                *r += w * (b * scale).norm_sqr();
            }
        }
    }
    Ok(field)
}

/// Rows "x_1..x_d, ξ_1..ξ_d, value" for every phase-grid point.
pub fn husimi_rows(field: &HusimiField) -> Vec<Vec<f64>> {
    let nk = field.grid.points();
    let mut rows = Vec::with_capacity(field.values.len());
    for i in 0..field.x_nodes() {
        let x = field.x_of(i);
        for k in 0..nk {
            let mut r = x.clone();
            r.extend(field.xi_of(k));
            r.push(field.values[i * nk + k]);
            rows.push(r);
        }
    }
    rows
}

/// Offsets j ∈ {−M/2..M/2}^d with their end-point weights, as flat lists.
fn offsets(grid: &GridSpec) -> Vec<(Vec<i64>, f64)> {
    let half = (grid.m / 2) as i64;
    let per_axis: Vec<(i64, f64)> = (-half..=half)
        .map(|j| (j, if j.abs() == half { 0.5 } else { 1.0 }))
        .collect();
    let mut out = vec![(vec![], 1.0)];
    for _ in 0..grid.d {
        out = out
            .into_iter()
            .flat_map(|(j, w)| {
                per_axis.iter().map(move |&(ja, wa)| {
                    let mut jj = j.clone();
                    jj.push(ja);
                    (jj, w * wa)
                })
            })
            .collect();
    }
    out
}

/// Copies f(· + cδ/2) for every parity vector c ∈ {0,1}^d, indexed by the bits of c.
fn half_shifts(grid: &GridSpec, f: &[C64], sign: f64) -> Vec<Vec<C64>> {
    (0..1usize << grid.d)
        .map(|bits| {
            let s: Vec<f64> = (0..grid.d)
                .map(|a| if bits >> a & 1 == 1 { sign * 0.5 * grid.delta } else { 0.0 })
                .collect();
            if bits == 0 {
                f.to_vec()
            } else {
                shift_grid(grid, f, &s)
            }
        })
        .collect()
}

fn index_mod(grid: &GridSpec, base: &[usize], off: &[i64]) -> usize {
    let m = grid.m as i64;
    base.iter()
        .zip(off)
        .fold(0, |acc, (&b, &o)| acc * grid.m + (b as i64 + o).rem_euclid(m) as usize)
}

/// Split j = 2q + c with c ∈ {0,1} per axis; returns (q, bits of c).
fn split(j: &[i64]) -> (Vec<i64>, usize) {
    let mut bits = 0;
    let q = j
        .iter()
        .enumerate()
        .map(|(a, &ja)| {
            let c = ja.rem_euclid(2);
            bits |= (c as usize) << a;
            (ja - c) / 2
        })
        .collect();
    (q, bits)
}

/// Discrete W[v,u](x, ξ) on grid x × FFT wavenumbers ξ, layout `[x][ξ bin]`.
pub fn wigner_pair(grid: &GridSpec, v: &[C64], u: &[C64]) -> Vec<C64> {
    let np = grid.points();
    let us = half_shifts(grid, u, 1.0);
    let vs = half_shifts(grid, v, 1.0);
    let offs = offsets(grid);
    let zero_off = vec![0usize; grid.d];
    let mut out = vec![ZERO; np * np];
    let mut acc = vec![ZERO; np];
    for m in 0..np {
        let mi = grid.unravel(m);
        acc.iter_mut().for_each(|a| *a = ZERO);
        for (j, w) in &offs {
            let (q, bits) = split(j);
            let c: Vec<i64> = (0..grid.d).map(|a| (bits >> a & 1) as i64).collect();
            let up: Vec<i64> = q.clone();
            let dn: Vec<i64> = q.iter().zip(&c).map(|(qa, ca)| -qa - ca).collect();
            let val = us[bits][index_mod(grid, &mi, &up)] * vs[bits][index_mod(grid, &mi, &dn)].conj();
            acc[index_mod(grid, &zero_off, j)] += val * *w;
        }
        fft_grid(grid, &mut acc, false);
        for (o, a) in out[m * np..(m + 1) * np].iter_mut().zip(&acc) {
            *o = a * grid.cell();
        }
    }
    out
}

/// Symbol values a(h·x, ξ) on grid x × FFT wavenumbers, layout `[x][ξ bin]`.
pub fn sample_symbol<F: Fn(&[f64], &[f64]) -> C64>(grid: &GridSpec, h: f64, a: F) -> Vec<C64> {
    let np = grid.points();
    let mut out = Vec::with_capacity(np * np);
    for m in 0..np {
        let x: Vec<f64> = grid.coords(m).iter().map(|y| h * y).collect();
        for k in 0..np {
            let xi: Vec<f64> = grid.unravel(k).iter().map(|&j| grid.wavenumber(j)).collect();
            out.push(a(&x, &xi));
        }
    }
    out
}

/// Σ_{x,ξ} a W[v,u] δ^d / L^d, the discrete ∫ a W dx dξ/(2π)^d.
pub fn weyl_pairing(grid: &GridSpec, symbol: &[C64], w: &[C64]) -> C64 {
    symbol.iter().zip(w).map(|(a, b)| a * b).sum::<C64>() * grid.cell() / grid.length().powi(grid.d as i32)
}

/// a^W ψ for a symbol sampled by [`sample_symbol`], defined so that
/// ⟨v, a^W u⟩ = weyl_pairing(a, W[v,u]) holds exactly on the grid.
pub fn weyl_apply(grid: &GridSpec, symbol: &[C64], psi: &[C64]) -> Vec<C64> {
    let np = grid.points();
    let dv = grid.cell();
    let ld = grid.length().powi(grid.d as i32);
    // â(m, j) = Σ_k a(m, k) e^{−iξ_k·jδ} / L^d
    let mut ahat = symbol.to_vec();
    let mut shape = vec![np];
    shape.extend(grid.shape());
    let axes: Vec<usize> = (1..=grid.d).collect();
    fft_axes(&mut ahat, &shape, &axes, false);
    ahat.iter_mut().for_each(|a| *a /= ld);
    let us = half_shifts(grid, psi, 1.0);
    let offs = offsets(grid);
    let zero_off = vec![0usize; grid.d];
    let mut parts = vec![vec![ZERO; np]; 1 << grid.d];
    for p in 0..np {
        let pi = grid.unravel(p);
        for (j, w) in &offs {
            let (q, bits) = split(j);
            let mo: Vec<i64> = (0..grid.d).map(|a| q[a] + (bits >> a & 1) as i64).collect();
            let m = index_mod(grid, &pi, &mo);
            let jb = index_mod(grid, &zero_off, j);
            parts[bits][p] += ahat[m * np + jb] * us[bits][index_mod(grid, &pi, j)] * (*w * dv);
        }
    }
    let mut out = vec![ZERO; np];
    for (bits, part) in parts.iter().enumerate() {
        let back = if bits == 0 {
            part.clone()
        } else {
            let s: Vec<f64> = (0..grid.d)
                .map(|a| if bits >> a & 1 == 1 { -0.5 * grid.delta } else { 0.0 })
                .collect();
            shift_grid(grid, part, &s)
        };
        for (o, b) in out.iter_mut().zip(back) {
            *o += b;
        }
    }
    out
}

/// τ^h_P u(y) = e^{ih p_ξ·(y − p_x/2)} u(y − p_x), the Weyl operator of
/// e^{i(p_ξ·x − p_x·ξ)} at scale h, for grid displacements p_x.
pub fn phase_translation(grid: &GridSpec, h: f64, p_x: &[f64], p_xi: &[f64], u: &[C64]) -> Vec<C64> {
    let neg: Vec<f64> = p_x.iter().map(|p| -p).collect();
    let shifted = shift_grid(grid, u, &neg);
    (0..grid.points())
        .map(|idx| {
            let y = grid.coords(idx);
            let ph: f64 = (0..grid.d).map(|a| h * p_xi[a] * (y[a] - 0.5 * p_x[a])).sum();
            shifted[idx] * C64::from_polar(1.0, ph)
        })
        .collect()
}

/// Finite union of energy intervals with a smooth cut-off of transition width `width`.
#[derive(Clone, Debug)]
pub struct EnergyBand {
    pub intervals: Vec<(f64, f64)>,
    pub width: f64,
}

impl EnergyBand {
    pub fn new(intervals: Vec<(f64, f64)>, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Config("band width must be > 0".into()));
        }
        if intervals.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::Config("band intervals need lo < hi".into()));
        }
        Ok(Self { intervals, width })
    }

    pub fn whole() -> Self {
        Self {
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)],
            width: 1.0,
        }
    }

    /// χ_F(E) ∈ [0, 1].
    pub fn chi(&self, e: f64) -> f64 {
        let s: f64 = self
            .intervals
            .iter()
            .map(|&(lo, hi)| 0.5 * (((e - lo) / self.width).tanh() - ((e - hi) / self.width).tanh()))
            .sum();
        s.min(1.0)
    }
}

/// (inside, outside) mass of ψ under χ_F(|ξ − k|²).
pub fn energy_band_mass(grid: &GridSpec, psi: &[C64], xi: &[f64], band: &EnergyBand) -> (f64, f64) {
    let mut f = psi.to_vec();
    fft_grid(grid, &mut f, false);
    let w = grid.cell() / grid.points() as f64;
    let (mut inside, mut outside) = (0.0, 0.0);
    for (v, e) in f.iter().zip(grid.shifted_k2(xi)) {
        let c = band.chi(e);
        inside += c * v.norm_sqr() * w;
        outside += (1.0 - c) * v.norm_sqr() * w;
    }
    (inside, outside)
}

/// (inside, outside) mass of a CM state: vacuum at energy |ξ|², sector values at |ξ − k|²
/// with k dual to y_G.
pub fn energy_band_mass_cm(v: &CMFockVector, band: &EnergyBand) -> (f64, f64) {
    let g = &v.grid;
    let b = g.points();
    let axes: Vec<usize> = (1..=g.d).collect();
    let (mut inside, mut outside) = (0.0, 0.0);
    for slot in &v.slots {
        let e0: f64 = slot.xi.iter().map(|x| x * x).sum();
        let c0 = band.chi(e0);
        let m0 = slot.weight * slot.sectors[0][0].norm_sqr();
        inside += c0 * m0;
        outside += (1.0 - c0) * m0;
        let chis: Vec<f64> = g.shifted_k2(&slot.xi).into_iter().map(|e| band.chi(e)).collect();
        for n in 1..=v.n_max {
            let mut sec = slot.sectors[n].clone();
            let rows = sec.len() / b;
            let mut shape = vec![rows];
            shape.extend(g.shape());
            fft_axes(&mut sec, &shape, &axes, false);
            let w = slot.weight * v.value_weight(n) / b as f64;
            for row in sec.chunks(b) {
                for (x, c) in row.iter().zip(&chis) {
                    inside += c * x.norm_sqr() * w;
                    outside += (1.0 - c) * x.norm_sqr() * w;
                }
            }
        }
    }
    (inside, outside)
}

/// max_t √|outside(t) − outside(0)| along the split-step run of `cfg`.
pub fn band_leak_amplitude(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig, band: &EnergyBand) -> Result<f64> {
    let run = reference_integrate(u0, pot, cfg)?;
    let out0 = energy_band_mass_cm(u0, band).1;
    Ok(run
        .states
        .iter()
        .map(|s| (energy_band_mass_cm(s, band).1 - out0).abs().sqrt())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian, project_band};
    use crate::propagator::evolve_free;
    use crate::rng;

    fn grid() -> GridSpec {
        GridSpec::new(1, 128, 0.5).unwrap()
    }

    #[test]
    fn coherent_state_normalized_and_width_checked() {
        let g = grid();
        let c = coherent_state(&g, 0.1, &[3.2], &[1.0]).unwrap();
        assert!((inner(&c.values, &c.values, g.cell()).re - 1.0).abs() < 1e-10);
        assert!(c.norm_defect < 1e-8);
        assert!(matches!(coherent_state(&g, 10.0, &[0.0], &[0.0]), Err(Error::Width { .. })));
        assert!(matches!(coherent_state(&g, 1e-3, &[0.0], &[0.0]), Err(Error::Width { .. })));
    }

    #[test]
    fn coherent_overlap_matches_closed_form() {
        let g = grid();
        let h = 0.1;
        let a = coherent_state(&g, h, &[3.2], &[1.0]).unwrap();
        for (x, k) in [(3.2, 1.0), (3.5, 1.0), (3.2, 1.4), (3.0, 0.7), (3.6, 1.3)] {
            let b = coherent_state(&g, h, &[x], &[k]).unwrap();
            let got = inner(&a.values, &b.values, g.cell()).norm_sqr();
            let want = coherent_overlap_exact(h, (&[3.2], &[1.0]), (&[x], &[k]));
            assert!((got - want).abs() < 1e-8, "{x} {k}: {got} vs {want}");
        }
    }

    #[test]
    fn husimi_of_coherent_state_peaks_at_one() {
        let g = grid();
        let h = 0.1;
        let k0 = g.wavenumber(5);
        let c = coherent_state(&g, h, &[3.2], &[k0]).unwrap();
        let f = husimi(&g, h, &[(1.0, &c.values)], 2).unwrap();
        assert!(f.min() >= 0.0);
        let peak = f.values.iter().copied().fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-8, "{peak}");
        assert!((f.mass() - 1.0).abs() < 1e-2, "{}", f.mass());
        let (x, k) = f.centre(&[3.2]);
        assert!((x[0] - 3.2).abs() < 1e-6 && (k[0] - k0).abs() < 1e-6);
    }

    #[test]
    fn husimi_mixture_mass() {
        let g = grid();
        let h = 0.1;
        let a = coherent_state(&g, h, &[2.0], &[1.0]).unwrap();
        let b = coherent_state(&g, h, &[4.4], &[-1.5]).unwrap();
        let f = husimi(&g, h, &[(0.3, &a.values), (0.7, &b.values)], 4).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-2);
        let fa = husimi(&g, h, &[(1.0, &a.values)], 4).unwrap();
        let fb = husimi(&g, h, &[(1.0, &b.values)], 4).unwrap();
        let s = HusimiField::weighted_sum(&[(0.3, &fa), (0.7, &fb)]).unwrap();
        let gap = s.values.iter().zip(&f.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-12);
    }

    #[test]
    fn gaussian_wigner_closed_form() {
        let g = GridSpec::new(1, 64, 0.5).unwrap();
        let (c, s) = (16.0, 1.5);
        let k0 = g.wavenumber(3);
        let u = gaussian(&g, &[c], s, &[k0]);
        let w = wigner_pair(&g, &u, &u);
        let np = g.points();
        let mut err: f64 = 0.0;
        for m in 0..np {
            let x = g.coords(m)[0];
            for k in 0..np {
                let xi = g.wavenumber(k);
                let want = 2.0 * s * PI.sqrt() * (-(x - c).powi(2) / (s * s)).exp() * (-(s * s) * (xi - k0).powi(2)).exp();
                err = err.max((w[m * np + k] - want).norm());
            }
        }
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn wigner_real_with_exact_marginal() {
        let g = GridSpec::new(1, 32, 0.5).unwrap();
        let mut r = rng::stream(3, 0);
        let u = project_band(&g, &rng::complex_vec(&mut r, g.points()), 6);
        let w = wigner_pair(&g, &u, &u);
        let np = g.points();
        let imag = w.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(imag < 1e-12, "{imag}");
        for m in 0..np {
            let marg: f64 = w[m * np..(m + 1) * np].iter().map(|z| z.re).sum::<f64>() / g.length();
            assert!((marg - u[m].norm_sqr()).abs() < 1e-10);
        }
    }

    #[test]
    fn weyl_identity_and_duality() {
        let g = GridSpec::new(1, 32, 0.5).unwrap();
        let h = 0.2;
        let mut r = rng::stream(4, 0);
        let u = project_band(&g, &rng::complex_vec(&mut r, g.points()), 6);
        let v = project_band(&g, &rng::complex_vec(&mut r, g.points()), 6);
        let one = sample_symbol(&g, h, |_, _| C64::new(1.0, 0.0));
        let id = weyl_apply(&g, &one, &u);
        assert!(id.iter().zip(&u).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) < 1e-10);
        let a = sample_symbol(&g, h, |x, k| C64::new((x[0]).cos() + 0.3 * k[0] * k[0], 0.2 * (x[0] * k[0]).sin()));
        let lhs = inner(&v, &weyl_apply(&g, &a, &u), g.cell());
        let rhs = weyl_pairing(&g, &a, &wigner_pair(&g, &v, &u));
        assert!((lhs - rhs).norm() < 1e-8 * (1.0 + lhs.norm()));
    }

    #[test]
    fn weyl_of_plane_wave_symbol_is_phase_translation() {
        let g = GridSpec::new(1, 64, 0.5).unwrap();
        let h = 0.5;
        let u = gaussian(&g, &[14.0], 1.5, &[g.wavenumber(2)]);
        for (px, pxi) in [(1.5, g.wavenumber(4) / h), (2.0, -g.wavenumber(3) / h), (-0.5, 0.0)] {
            let a = sample_symbol(&g, h, |x, k| C64::from_polar(1.0, pxi * x[0] - px * k[0]));
            let got = weyl_apply(&g, &a, &u);
            let want = phase_translation(&g, h, &[px], &[pxi], &u);
            let err = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{px} {pxi}: {err}");
        }
    }

    #[test]
    fn free_transport_recentres_husimi() {
        let g = GridSpec::new(1, 256, 0.25).unwrap();
        let h = 0.1;
        let k0 = g.wavenumber(4);
        let x0 = 1.2;
        let c = coherent_state(&g, h, &[x0], &[k0]).unwrap();
        let f0 = husimi(&g, h, &[(1.0, &c.values)], 2).unwrap();
        let dx = h * 2.0 * g.delta;
        for t_macro in [0.5, 1.0, 2.0] {
            let psi = evolve_free(&g, &c.values, t_macro / h, &[0.0]);
            let f = husimi(&g, h, &[(1.0, &psi)], 2).unwrap();
            let want = x0 + 2.0 * k0 * t_macro;
            let (x, k) = f.centre(&[want]);
            assert!((x[0] - want).abs() < dx, "{t_macro}: {} vs {want}", x[0]);
            assert!((k[0] - k0).abs() < 2.0 * PI / g.length());
            assert!((f.mass() - f0.mass()).abs() < 1e-6);
        }
    }

    #[test]
    fn band_mass_free_and_whole() {
        let g = grid();
        let c = coherent_state(&g, 0.1, &[3.2], &[1.0]).unwrap();
        let band = EnergyBand::new(vec![(0.5, 1.5)], 0.05).unwrap();
        let (_, o0) = energy_band_mass(&g, &c.values, &[0.0], &band);
        for t in [1.0, 5.0, 20.0] {
            let psi = evolve_free(&g, &c.values, t, &[0.0]);
            let (_, o) = energy_band_mass(&g, &psi, &[0.0], &band);
            assert!((o - o0).abs() < 1e-12);
        }
        let (i, o) = energy_band_mass(&g, &c.values, &[0.0], &EnergyBand::whole());
        assert_eq!(o, 0.0);
        assert!((i - 1.0).abs() < 1e-10);
    }
}
