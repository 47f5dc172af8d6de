//! Truncated bosonic Fock space over a periodic grid.
//!
//! Sector `n` is a dense row-major tensor with `n` blocks of `d` grid indices,
//! block `j` holding particle `j`. The quadrature weight of sector `n` is
//! `delta^{d n}`. Sector 0 is the vacuum scalar.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{fft_axes, inner, signed_mode, GridSpec, C64, ZERO};
use crate::rng;

#[derive(Clone, Debug)]
pub struct FockVector {
    pub grid: GridSpec,
    pub n_max: usize,
    /// `sectors[n]` has `M^{d n}` entries; `sectors[0]` is the vacuum.
    pub sectors: Vec<Vec<C64>>,
    /// Squared norm pushed past `n_max` by creation operators.
    pub dropped_mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChaosDirection {
    /// f_n = √(n!) F_n
    Pack,
    /// F_n = f_n / √(n!)
    Unpack,
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All permutations of 0..n in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn digits(mut idx: usize, base: usize, n: usize, out: &mut [usize]) {
    for j in (0..n).rev() {
        out[j] = idx % base;
        idx /= base;
    }
}

fn undigits(ds: impl Iterator<Item = usize>, base: usize) -> usize {
    ds.fold(0, |acc, x| acc * base + x)
}

/// Average of a sector tensor over all permutations of its `n` blocks.
/// `block` is the size of one particle block (M^d).
pub fn symmetrize(t: &[C64], n: usize, block: usize) -> Vec<C64> {
    if n <= 1 {
        return t.to_vec();
    }
    let perms = permutations(n);
    let w = 1.0 / perms.len() as f64;
    let mut ds = vec![0; n];
    let mut out = vec![ZERO; t.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        digits(idx, block, n, &mut ds);
        let mut s = ZERO;
        for p in &perms {
            s += t[undigits(p.iter().map(|&j| ds[j]), block)];
        }
        *o = s * w;
    }
    out
}

impl FockVector {
    pub fn zeros(grid: &GridSpec, n_max: usize) -> Self {
        let b = grid.points();
        let sectors = (0..=n_max).map(|n| vec![ZERO; b.pow(n as u32)]).collect();
        Self {
            grid: grid.clone(),
            n_max,
            sectors,
            dropped_mass: 0.0,
        }
    }

    pub fn vacuum(grid: &GridSpec, n_max: usize, c: C64) -> Self {
        let mut u = Self::zeros(grid, n_max);
        u.sectors[0][0] = c;
        u
    }

    /// φ^{⊗n} in sector `n`.
    pub fn product(grid: &GridSpec, n_max: usize, phi: &[C64], n: usize) -> Self {
        let mut u = Self::zeros(grid, n_max);
        let b = grid.points();
        let mut ds = vec![0; n];
        for (idx, v) in u.sectors[n].iter_mut().enumerate() {
            digits(idx, b, n, &mut ds);
            *v = ds.iter().map(|&i| phi[i]).product();
        }
        u
    }

    /// Random symmetric vector whose slots carry Fourier modes |mode| ≤ `band`
    /// on every axis (`None` for no band limit). Sectors above `top` are zero.
    pub fn random(
        grid: &GridSpec,
        n_max: usize,
        top: usize,
        band: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut u = Self::zeros(grid, n_max);
        u.sectors[0][0] = rng::complex_normal(rng);
        let b = grid.points();
        for n in 1..=top.min(n_max) {
            let mut t = rng::complex_vec(rng, b.pow(n as u32));
            if let Some(k) = band {
                band_limit_tensor(grid, &mut t, n, k);
            }
            let mut s = symmetrize(&t, n, b);
            let scale = 1.0 / grid.cell().powf(0.5 * n as f64) / (b.pow(n as u32) as f64).sqrt();
            s.iter_mut().for_each(|v| *v *= scale);
            u.sectors[n] = s;
        }
        u
    }

    pub fn sector_weight(&self, n: usize) -> f64 {
        self.grid.cell().powi(n as i32)
    }

    pub fn sector_norm_sq(&self, n: usize) -> f64 {
        self.sectors[n].iter().map(|v| v.norm_sqr()).sum::<f64>() * self.sector_weight(n)
    }

    pub fn norm(&self) -> f64 {
        (0..=self.n_max)
            .map(|n| self.sector_norm_sq(n))
            .sum::<f64>()
            .sqrt()
    }

    /// ⟨self, other⟩, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> C64 {
        (0..=self.n_max)
            .map(|n| inner(&self.sectors[n], &other.sectors[n], self.sector_weight(n)))
            .sum()
    }

    pub fn number_expectation(&self) -> f64 {
        (0..=self.n_max)
            .map(|n| n as f64 * self.sector_norm_sq(n))
            .sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.sectors
            .iter_mut()
            .flatten()
            .for_each(|v| *v *= c);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// self + c·other
    pub fn axpy(&self, c: C64, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.sectors.iter_mut().zip(&other.sectors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
        out.dropped_mass = self.dropped_mass + c.norm_sqr() * other.dropped_mass;
        out
    }

    /// Largest deviation of any sector from its symmetrization, relative to the sector size.
    pub fn symmetry_defect(&self) -> f64 {
        let b = self.grid.points();
        let mut worst: f64 = 0.0;
        for n in 2..=self.n_max {
            let s = symmetrize(&self.sectors[n], n, b);
            let scale = self.sectors[n].iter().map(|v| v.norm()).fold(0.0, f64::max);
            if scale > 0.0 {
                let d = s
                    .iter()
                    .zip(&self.sectors[n])
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                worst = worst.max(d / scale);
            }
        }
        worst
    }
}

/// Zero the Fourier modes of each particle slot outside |mode| ≤ band.
pub fn band_limit_tensor(grid: &GridSpec, t: &mut [C64], n: usize, band: usize) {
    let m = grid.m;
    let shape = vec![m; grid.d * n];
    let axes: Vec<usize> = (0..shape.len()).collect();
    fft_axes(t, &shape, &axes, false);
    let mut ds = vec![0; shape.len()];
    for (idx, v) in t.iter_mut().enumerate() {
        digits(idx, m, shape.len(), &mut ds);
        if ds.iter().any(|&j| signed_mode(j, m).unsigned_abs() as usize > band) {
            *v = ZERO;
        }
    }
    fft_axes(t, &shape, &axes, true);
}

/// a*(f): sector n+1 receives √(n+1)·S_{n+1}(f ⊗ u_n). Sector `n_max`
/// flows out of the truncation; its squared norm is added to `dropped_mass`.
pub fn create(f: &[C64], u: &FockVector) -> FockVector {
    let b = u.grid.points();
    let mut out = FockVector::zeros(&u.grid, u.n_max);
    for n in 0..u.n_max {
        let src = &u.sectors[n];
        let dst = &mut out.sectors[n + 1];
        let c = 1.0 / ((n + 1) as f64).sqrt();
        let mut ds = vec![0; n + 1];
        for (idx, o) in dst.iter_mut().enumerate() {
            digits(idx, b, n + 1, &mut ds);
            let mut s = ZERO;
            for j in 0..=n {
                let rest = undigits(
                    ds.iter()
                        .enumerate()
                        .filter(|&(k, _)| k != j)
                        .map(|(_, &x)| x),
                    b,
                );
                s += f[ds[j]] * src[rest];
            }
            *o = s * c;
        }
    }
    // ‖a*(f)u_N‖² = ‖f‖²‖u_N‖² + ‖a(f)u_N‖² for symmetric u_N.
    let top = u.n_max;
    let fnorm2: f64 = f.iter().map(|v| v.norm_sqr()).sum::<f64>() * u.grid.cell();
    let lowered = contract_last(f, &u.sectors[top], top, &u.grid);
    let lowered2: f64 = if top == 0 {
        0.0
    } else {
        lowered.iter().map(|v| v.norm_sqr()).sum::<f64>() * u.sector_weight(top - 1)
    };
    out.dropped_mass = u.dropped_mass + fnorm2 * u.sector_norm_sq(top) + lowered2;
    out
}

/// √n Σ_y conj(g(y)) t(…, y) δ^d for a sector-`n` tensor.
fn contract_last(g: &[C64], t: &[C64], n: usize, grid: &GridSpec) -> Vec<C64> {
    if n == 0 {
        return Vec::new();
    }
    let b = grid.points();
    let c = (n as f64).sqrt() * grid.cell();
    t.chunks(b)
        .map(|row| row.iter().zip(g).map(|(x, y)| y.conj() * x).sum::<C64>() * c)
        .collect()
}

/// a(g): sector n−1 receives √n times the contraction of u_n with conj(g) on the last slot.
pub fn annihilate(g: &[C64], u: &FockVector) -> FockVector {
    let mut out = FockVector::zeros(&u.grid, u.n_max);
    for n in 1..=u.n_max {
        out.sectors[n - 1] = contract_last(g, &u.sectors[n], n, &u.grid);
    }
    out.dropped_mass = u.dropped_mass;
    out
}

/// Largest |Im V| relative to max |V|.
pub fn imaginary_fraction(v: &[C64]) -> f64 {
    let m = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    v.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / m
}

/// φ(V) = (a(V̄) + a*(V))/√2. For real V this is (a(V)+a*(V))/√2; complex V
/// must be enabled explicitly and then gives a non-symmetric operator linear in V.
pub fn field_op(v: &[C64], u: &FockVector, allow_complex: bool) -> Result<FockVector> {
    if !allow_complex && imaginary_fraction(v) > 1e-14 {
        return Err(Error::ComplexPotential);
    }
    let vbar: Vec<C64> = v.iter().map(|z| z.conj()).collect();
    let a = annihilate(&vbar, u);
    let c = create(v, u);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = a.add(&c).scale(C64::new(s, 0.0));
    out.dropped_mass = u.dropped_mass + 0.5 * (c.dropped_mass - u.dropped_mass);
    Ok(out)
}

/// e^{αN}: sector n multiplied by e^{αn}.
pub fn number_weight(alpha: f64, u: &FockVector) -> Result<FockVector> {
    let x = alpha.abs() * u.n_max as f64;
    if x > 700.0 {
        return Err(Error::WeightOverflow(x));
    }
    let mut out = u.clone();
    for (n, s) in out.sectors.iter_mut().enumerate() {
        let w = (alpha * n as f64).exp();
        s.iter_mut().for_each(|v| *v *= w);
    }
    Ok(out)
}

pub fn chaos_scale(u: &FockVector, dir: ChaosDirection) -> FockVector {
    let mut out = u.clone();
    for (n, s) in out.sectors.iter_mut().enumerate() {
        let f = factorial(n).sqrt();
        let w = match dir {
            ChaosDirection::Pack => f,
            ChaosDirection::Unpack => 1.0 / f,
        };
        s.iter_mut().for_each(|v| *v *= w);
    }
    out
}

pub const DUMP_MAGIC: &[u8; 4] = b"FOCK";
pub const DUMP_VERSION: u32 = 1;

/// Little-endian dump: magic, version, d, M, delta, N_max, then sectors 0..=N_max
/// as (f32 re, f32 im) pairs in row-major order.
pub fn write_dump<W: Write>(u: &FockVector, w: &mut W) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&(u.grid.d as u32).to_le_bytes())?;
    w.write_all(&(u.grid.m as u32).to_le_bytes())?;
    w.write_all(&u.grid.delta.to_le_bytes())?;
    w.write_all(&(u.n_max as u32).to_le_bytes())?;
    for s in &u.sectors {
        for v in s {
            w.write_all(&(v.re as f32).to_le_bytes())?;
            w.write_all(&(v.im as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_dump<R: Read>(r: &mut R) -> Result<FockVector> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Config("bad dump magic".into()));
    }
    let version = read_u32(r)?;
    if version != DUMP_VERSION {
        return Err(Error::Config(format!("unsupported dump version {version}")));
    }
    let d = read_u32(r)? as usize;
    let m = read_u32(r)? as usize;
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let delta = f64::from_le_bytes(b);
    let n_max = read_u32(r)? as usize;
    let grid = GridSpec::new(d, m, delta)?;
    let mut u = FockVector::zeros(&grid, n_max);
    for s in u.sectors.iter_mut() {
        for v in s.iter_mut() {
            let mut c = [0u8; 4];
            r.read_exact(&mut c)?;
            let re = f32::from_le_bytes(c);
            r.read_exact(&mut c)?;
            let im = f32::from_le_bytes(c);
            *v = C64::new(re as f64, im as f64);
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian, ONE};

    fn grid() -> GridSpec {
        GridSpec::new(1, 8, 0.5).unwrap()
    }

    #[test]
    fn permutations_of_three() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
    }

    #[test]
    fn symmetrize_two_term_average() {
        let g = grid();
        let mut r = rng::stream(1, 0);
        let f = rng::complex_vec(&mut r, 8);
        let h = rng::complex_vec(&mut r, 8);
        let mut t = vec![ZERO; 64];
        for i in 0..8 {
            for j in 0..8 {
                t[i * 8 + j] = f[i] * h[j];
            }
        }
        let s = symmetrize(&t, 2, g.points());
        for i in 0..8 {
            for j in 0..8 {
                let e = (f[i] * h[j] + h[i] * f[j]) * 0.5;
                assert!((s[i * 8 + j] - e).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn symmetrize_three_by_explicit_loops() {
        let b = 5;
        let mut r = rng::stream(2, 0);
        let t = rng::complex_vec(&mut r, b * b * b);
        let s = symmetrize(&t, 3, b);
        let at = |i: usize, j: usize, k: usize| t[(i * b + j) * b + k];
        for i in 0..b {
            for j in 0..b {
                for k in 0..b {
                    let e = (at(i, j, k) + at(i, k, j) + at(j, i, k) + at(j, k, i) + at(k, i, j)
                        + at(k, j, i))
                        / 6.0;
                    assert!((s[(i * b + j) * b + k] - e).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn norm_of_product_state() {
        let g = grid();
        let phi = gaussian(&g, &[2.0], 0.6, &[0.0]);
        let n1 = phi.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.cell();
        let scale = 2.0 / n1.sqrt();
        let phi: Vec<C64> = phi.iter().map(|v| v * scale).collect();
        let u = FockVector::product(&g, 3, &phi, 2);
        assert!((u.norm() - 4.0).abs() < 1e-12);
        let v = FockVector::vacuum(&g, 2, C64::new(3.0, -4.0));
        assert!((v.norm() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn create_on_vacuum_and_sector_one() {
        let g = grid();
        let mut r = rng::stream(3, 0);
        let f = rng::complex_vec(&mut r, 8);
        let h = rng::complex_vec(&mut r, 8);
        let u = create(&f, &FockVector::vacuum(&g, 2, ONE));
        for i in 0..8 {
            assert!((u.sectors[1][i] - f[i]).norm() < 1e-15);
        }
        let mut w = FockVector::zeros(&g, 2);
        w.sectors[1] = h.clone();
        let c = create(&f, &w);
        for i in 0..8 {
            for j in 0..8 {
                let e = (f[i] * h[j] + f[j] * h[i]) * (0.5 * 2f64.sqrt());
                assert!((c.sectors[2][i * 8 + j] - e).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn dropped_mass_matches_explicit_overflow() {
        let g = grid();
        let mut r = rng::stream(4, 0);
        let f = rng::complex_vec(&mut r, 8);
        let u = FockVector::random(&g, 2, 2, None, &mut r);
        let big = {
            let mut b = FockVector::zeros(&g, 3);
            for n in 0..=2 {
                b.sectors[n] = u.sectors[n].clone();
            }
            create(&f, &b)
        };
        let small = create(&f, &u);
        assert!((small.dropped_mass - big.sector_norm_sq(3)).abs() < 1e-10 * big.sector_norm_sq(3));
    }

    #[test]
    fn product_state_annihilation() {
        let g = grid();
        let mut r = rng::stream(5, 0);
        let phi = rng::complex_vec(&mut r, 8);
        let v = rng::complex_vec(&mut r, 8);
        let u = FockVector::product(&g, 3, &phi, 3);
        let a = annihilate(&v, &u);
        let c = inner(&v, &phi, g.cell()) * 3f64.sqrt();
        let e = FockVector::product(&g, 3, &phi, 2).scale(c);
        assert!(a.sub(&e).norm() < 1e-12 * e.norm());
    }

    #[test]
    fn field_op_rejects_complex_without_flag() {
        let g = grid();
        let v = vec![C64::new(0.0, 1.0); 8];
        let u = FockVector::vacuum(&g, 2, ONE);
        assert!(field_op(&v, &u, false).is_err());
        assert!(field_op(&v, &u, true).is_ok());
    }

    #[test]
    fn field_op_twice_vacuum_component() {
        let g = grid();
        let mut r = rng::stream(6, 0);
        let v: Vec<C64> = (0..8).map(|_| C64::new(rng::normal(&mut r), 0.0)).collect();
        let vac = FockVector::vacuum(&g, 2, ONE);
        let once = field_op(&v, &vac, false).unwrap();
        for i in 0..8 {
            assert!((once.sectors[1][i] - v[i] * std::f64::consts::FRAC_1_SQRT_2).norm() < 1e-15);
        }
        let twice = field_op(&v, &once, false).unwrap();
        let vn2 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.cell();
        assert!((twice.sectors[0][0].re - vn2 / 2.0).abs() < 1e-13);
    }

    #[test]
    fn number_weight_guard_and_scaling() {
        let g = grid();
        let mut r = rng::stream(7, 0);
        let u = FockVector::random(&g, 2, 2, None, &mut r);
        assert!(number_weight(400.0, &u).is_err());
        let w = number_weight(0.3, &u).unwrap();
        assert_eq!(w.sectors[0], u.sectors[0]);
        let e = (0.6f64).exp();
        for (a, b) in w.sectors[2].iter().zip(&u.sectors[2]) {
            assert!((a - b * e).norm() < 1e-14);
        }
    }

    #[test]
    fn chaos_pack_scales_by_root_factorial() {
        let g = grid();
        let mut r = rng::stream(8, 0);
        let u = FockVector::random(&g, 3, 3, None, &mut r);
        let p = chaos_scale(&u, ChaosDirection::Pack);
        for (a, b) in p.sectors[2].iter().zip(&u.sectors[2]) {
            assert!((a - b * 2f64.sqrt()).norm() < 1e-14);
        }
        let back = chaos_scale(&p, ChaosDirection::Unpack);
        assert!(back.sub(&u).norm() < 1e-14);
        // Σ n! ‖F_n‖² of the unpacked coefficients equals the Fock norm of the packed vector
        let chaos: f64 = (0..=3)
            .map(|n| factorial(n) * u.sector_norm_sq(n))
            .sum();
        assert!((chaos - p.norm().powi(2)).abs() < 1e-12 * chaos);
    }

    #[test]
    fn dump_round_trip() {
        let g = grid();
        let mut r = rng::stream(9, 0);
        let u = FockVector::random(&g, 2, 2, None, &mut r);
        let mut buf = Vec::new();
        write_dump(&u, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FOCK");
        assert_eq!(buf.len(), 4 + 4 + 4 + 4 + 8 + 4 + 8 * (1 + 8 + 64));
        let v = read_dump(&mut buf.as_slice()).unwrap();
        assert!(v.sub(&u).norm() < 1e-6 * u.norm());
    }
}
