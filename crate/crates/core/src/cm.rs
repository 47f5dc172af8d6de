//! Center-of-mass frame.
//!
//! Sector `n` is stored as a function of the center of mass `y_G` (on the
//! δ-grid) and of relative coordinates `y'_1..y'_n` with `Σ y'_j = 0`. The
//! relative coordinates live on a lattice of spacing δ/R, where the common
//! refinement `R` must be divisible by every sector number, so that the
//! offsets `y_n/n` produced by the creation/annihilation formulas land back
//! on the lattice.
//!
//! On the torus the pair `(y_G, Y')` and `(y_G + L/n, Y' − L/n)` describe the
//! same configuration, so only a fundamental domain is stored:
//! `y'_1 ∈ [−L/2n, L/2n)^d`, `y'_j ∈ [−L/2, L/2)^d` for `2 ≤ j < n`, and `y'_n`
//! derived. With this domain the weight `n^d (δ/R)^{d(n−1)}` reproduces the
//! lab-frame norm exactly.
//!
//! Off-grid values are obtained by trigonometric interpolation, exact for
//! band-limited data.

use crate::error::{Error, Result};
use crate::fock::FockVector;
use crate::grid::{fft_axes, lp_norm, signed_mode, GridSpec, C64, ZERO};

/// Relative-coordinate lattice of sector `n`.
#[derive(Clone, Debug)]
pub struct RelativeLattice {
    pub n: usize,
    pub refine: usize,
    pub d: usize,
    pub m: usize,
    pub delta: f64,
}

fn ipow(b: usize, e: usize) -> usize {
    b.pow(e as u32)
}

impl RelativeLattice {
    pub fn new(grid: &GridSpec, n: usize, refine: usize) -> Result<Self> {
        if n == 0 || refine == 0 || refine % n != 0 {
            return Err(Error::Refinement { refine, n });
        }
        Ok(Self {
            n,
            refine,
            d: grid.d,
            m: grid.m,
            delta: grid.delta,
        })
    }

    /// Lattice points per axis of a full relative coordinate (R·M).
    pub fn extent(&self) -> i64 {
        (self.refine * self.m) as i64
    }

    /// Lattice points per axis of the first relative coordinate (R·M/n).
    pub fn first_extent(&self) -> i64 {
        self.extent() / self.n as i64
    }

    pub fn nfree(&self) -> usize {
        self.n - 1
    }

    pub fn points(&self) -> usize {
        if self.n == 1 {
            return 1;
        }
        ipow(self.first_extent() as usize, self.d)
            * ipow(self.extent() as usize, self.d * (self.n - 2))
    }

    /// μ_n quadrature weight per stored point.
    pub fn weight(&self) -> f64 {
        if self.n == 1 {
            return 1.0;
        }
        (self.n as f64).powi(self.d as i32)
            * (self.delta / self.refine as f64).powi((self.d * (self.n - 1)) as i32)
    }

    /// Lattice spacing δ/R.
    pub fn spacing(&self) -> f64 {
        self.delta / self.refine as f64
    }

    fn ext_of(&self, j: usize) -> i64 {
        if j == 0 {
            self.first_extent()
        } else {
            self.extent()
        }
    }

    /// Free coordinates (layout `[j][axis]`, units δ/R) of stored point `idx`.
    pub fn free_coords(&self, mut idx: usize, out: &mut [i64]) {
        let d = self.d;
        for pos in (0..self.nfree() * d).rev() {
            let e = self.ext_of(pos / d);
            out[pos] = (idx % e as usize) as i64 - e / 2;
            idx /= e as usize;
        }
    }

    /// All n coordinates, the last one derived from the zero-sum constraint.
    pub fn full_coords(&self, idx: usize) -> Vec<i64> {
        let d = self.d;
        let mut out = vec![0; self.n * d];
        self.free_coords(idx, &mut out[..self.nfree() * d]);
        for a in 0..d {
            let s: i64 = (0..self.nfree()).map(|j| out[j * d + a]).sum();
            out[self.nfree() * d + a] = -s;
        }
        out
    }

    /// Index of a reduced point.
    pub fn index(&self, free: &[i64]) -> usize {
        let d = self.d;
        let mut idx = 0usize;
        for (pos, &x) in free.iter().enumerate() {
            let e = self.ext_of(pos / d);
            idx = idx * e as usize + (x + e / 2) as usize;
        }
        idx
    }

    /// Bring `(y_G, free)` (units δ/R) into the fundamental domain.
    pub fn reduce(&self, yg: &mut [i64], free: &mut [i64]) {
        if self.n == 1 {
            return;
        }
        let d = self.d;
        let e = self.extent();
        let e1 = self.first_extent();
        let wrap = |x: i64| (x + e / 2).rem_euclid(e) - e / 2;
        for a in 0..d {
            for j in 0..self.nfree() {
                free[j * d + a] = wrap(free[j * d + a]);
            }
            let k = (free[a] + e1 / 2).div_euclid(e1);
            if k != 0 {
                free[a] -= k * e1;
                for j in 1..self.nfree() {
                    free[j * d + a] = wrap(free[j * d + a] - k * e1);
                }
                yg[a] += k * e1;
            }
        }
    }
}

/// One parameter slot: momentum offset ξ, z-measure weight, and sectors 0..=N_max.
#[derive(Clone, Debug)]
pub struct CmSlot {
    pub xi: Vec<f64>,
    pub weight: f64,
    /// `sectors[0]` is the vacuum scalar; sector `n ≥ 1` has layout `[rel][y_G]`.
    pub sectors: Vec<Vec<C64>>,
}

#[derive(Clone, Debug)]
pub struct CMFockVector {
    pub grid: GridSpec,
    pub n_max: usize,
    pub refine: usize,
    pub slots: Vec<CmSlot>,
    pub dropped_mass: f64,
}

/// Smallest refinement valid for all sectors up to `n_max`: lcm(1..=n_max).
pub fn default_refine(n_max: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (1..=n_max.max(1)).fold(1, |acc, k| acc / gcd(acc, k) * k)
}

impl CMFockVector {
    pub fn zeros(grid: &GridSpec, n_max: usize, refine: usize, xis: &[(Vec<f64>, f64)]) -> Result<Self> {
        for n in 1..=n_max {
            RelativeLattice::new(grid, n, refine)?;
        }
        let slots = xis
            .iter()
            .map(|(xi, w)| CmSlot {
                xi: xi.clone(),
                weight: *w,
                sectors: (0..=n_max)
                    .map(|n| {
                        if n == 0 {
                            vec![ZERO]
                        } else {
                            let lat = RelativeLattice::new(grid, n, refine).unwrap();
                            vec![ZERO; lat.points() * grid.points()]
                        }
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            n_max,
            refine,
            slots,
            dropped_mass: 0.0,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.slots
            .iter_mut()
            .flat_map(|s| s.sectors.iter_mut())
            .flatten()
            .for_each(|v| *v = ZERO);
        z.dropped_mass = 0.0;
        z
    }

    pub fn lattice(&self, n: usize) -> RelativeLattice {
        RelativeLattice::new(&self.grid, n, self.refine).expect("validated at construction")
    }

    /// Quadrature weight of one stored value of sector `n` (μ weight × δ^d).
    pub fn value_weight(&self, n: usize) -> f64 {
        if n == 0 {
            1.0
        } else {
            self.lattice(n).weight() * self.grid.cell()
        }
    }

    pub fn sector_norm_sq(&self, n: usize) -> f64 {
        let w = self.value_weight(n);
        self.slots
            .iter()
            .map(|s| s.weight * w * s.sectors[n].iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        (0..=self.n_max)
            .map(|n| self.sector_norm_sq(n))
            .sum::<f64>()
            .sqrt()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        let mut s = ZERO;
        for n in 0..=self.n_max {
            let w = self.value_weight(n);
            for (a, b) in self.slots.iter().zip(&other.slots) {
                let x: C64 = a.sectors[n]
                    .iter()
                    .zip(&b.sectors[n])
                    .map(|(p, q)| p.conj() * q)
                    .sum();
                s += x * (w * a.weight);
            }
        }
        s
    }

    pub fn number_expectation(&self) -> f64 {
        (0..=self.n_max)
            .map(|n| n as f64 * self.sector_norm_sq(n))
            .sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.slots
            .iter_mut()
            .flat_map(|s| s.sectors.iter_mut())
            .flatten()
            .for_each(|v| *v *= c);
        out.dropped_mass *= c.norm_sqr();
        out
    }

    /// self + c·other
    pub fn axpy(&self, c: C64, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy_in_place(c, other);
        out
    }

    pub fn axpy_in_place(&mut self, c: C64, other: &Self) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            for (x, y) in a.sectors.iter_mut().zip(&b.sectors) {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += c * q;
                }
            }
        }
        self.dropped_mass += c.norm_sqr() * other.dropped_mass;
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// e^{αN} (same overflow guard as the lab frame).
    pub fn number_weight(&self, alpha: f64) -> Result<Self> {
        let x = alpha.abs() * self.n_max as f64;
        if x > 700.0 {
            return Err(Error::WeightOverflow(x));
        }
        let mut out = self.clone();
        for s in out.slots.iter_mut() {
            for (n, sec) in s.sectors.iter_mut().enumerate() {
                let w = (alpha * n as f64).exp();
                sec.iter_mut().for_each(|v| *v *= w);
            }
        }
        Ok(out)
    }

    /// Norm of e^{αN}v without materializing the weighted vector.
    pub fn weighted_norm(&self, alpha: f64) -> f64 {
        (0..=self.n_max)
            .map(|n| (2.0 * alpha * n as f64).exp() * self.sector_norm_sq(n))
            .sum::<f64>()
            .sqrt()
    }
}

/// Interpolating evaluator for one CM sector.
///
/// Points are given in units `u = δ/(nR)`: the center of mass `A` and the
/// `n−1` free relative coordinates `Z`. All `Z_j` must share one residue `r0`
/// modulo `n` per axis and `A + r0 ≡ 0 (mod n)`, which is the case for every
/// argument produced by the lab↔CM change of frame and by a_G, a_G*.
pub struct SectorInterp<'a> {
    lat: RelativeLattice,
    grid: &'a GridSpec,
    data: &'a [C64],
    spec_yg: Option<Vec<C64>>,
    torus_spec: Option<Vec<C64>>,
    cache: Vec<Option<Vec<C64>>>,
    scratch_yg: Vec<i64>,
    scratch_free: Vec<i64>,
}

impl<'a> SectorInterp<'a> {
    pub fn new(grid: &'a GridSpec, lat: RelativeLattice, data: &'a [C64]) -> Self {
        let keys = ipow(lat.n, grid.d) * ipow(lat.refine, grid.d);
        let d = grid.d;
        let nf = lat.nfree();
        Self {
            lat,
            grid,
            data,
            spec_yg: None,
            torus_spec: None,
            cache: vec![None; keys],
            scratch_yg: vec![0; d],
            scratch_free: vec![0; nf * d],
        }
    }

    fn ensure_spec_yg(&mut self) {
        if self.spec_yg.is_none() {
            let b = self.grid.points();
            let mut s = self.data.to_vec();
            for blk in s.chunks_mut(b) {
                fft_axes(blk, &self.grid.shape(), &(0..self.grid.d).collect::<Vec<_>>(), false);
            }
            self.spec_yg = Some(s);
        }
    }

    fn key(&self, r0: &[i64], c: &[i64]) -> usize {
        let n = self.lat.n as i64;
        let r = self.lat.refine as i64;
        let k0 = r0.iter().fold(0, |acc, &x| acc * n + x);
        let k1 = c.iter().fold(0, |acc, &x| acc * r + x);
        (k0 * ipow(self.lat.refine, self.grid.d) as i64 + k1) as usize
    }

    /// y_G translate of the stored data by c·δ/R.
    fn yg_shift_copy(&mut self, c: &[i64]) -> Vec<C64> {
        self.ensure_spec_yg();
        let g = self.grid;
        let b = g.points();
        let step = g.delta / self.lat.refine as f64;
        let phase: Vec<C64> = (0..b)
            .map(|idx| {
                let ph: f64 = g
                    .unravel(idx)
                    .iter()
                    .enumerate()
                    .map(|(a, &j)| g.wavenumber(j) * c[a] as f64 * step)
                    .sum();
                C64::from_polar(1.0, ph)
            })
            .collect();
        let spec = self.spec_yg.as_ref().unwrap();
        let mut out = spec.clone();
        let axes: Vec<usize> = (0..g.d).collect();
        for blk in out.chunks_mut(b) {
            for (v, p) in blk.iter_mut().zip(&phase) {
                *v *= p;
            }
            fft_axes(blk, &g.shape(), &axes, true);
        }
        out
    }

    fn copy(&mut self, r0: &[i64], c: &[i64]) -> &Vec<C64> {
        let key = self.key(r0, c);
        if self.cache[key].is_none() {
            let v = if r0.iter().all(|&x| x == 0) {
                self.yg_shift_copy(c)
            } else {
                self.diagonal_shift_copy(r0, c)
            };
            self.cache[key] = Some(v);
        }
        self.cache[key].as_ref().unwrap()
    }

    /// Value on the δ/R lattice (after reduction) with y_G in units δ/R.
    fn lattice_value(&mut self, r0: &[i64], yg: &mut [i64], free: &mut [i64]) -> C64 {
        self.lat.reduce(yg, free);
        let r = self.lat.refine as i64;
        let m = self.grid.m as i64;
        let d = self.grid.d;
        let mut c = [0i64; 3];
        let mut base = 0usize;
        for a in 0..d {
            c[a] = yg[a].rem_euclid(r);
            base = base * self.grid.m + yg[a].div_euclid(r).rem_euclid(m) as usize;
        }
        let rel = self.lat.index(free);
        let b = self.grid.points();
        let cp = self.copy(r0, &c[..d]);
        cp[rel * b + base]
    }

    /// F(A·u, Z·u) with u = δ/(nR); `free` has layout `[j][axis]`.
    pub fn value(&mut self, yg_u: &[i64], free_u: &[i64]) -> C64 {
        let n = self.lat.n as i64;
        let d = self.grid.d;
        let mut r0 = [0i64; 3];
        if self.lat.nfree() > 0 {
            for a in 0..d {
                r0[a] = free_u[a].rem_euclid(n);
            }
        } else {
            for a in 0..d {
                r0[a] = (-yg_u[a]).rem_euclid(n);
            }
        }
        let mut yg = std::mem::take(&mut self.scratch_yg);
        let mut free = std::mem::take(&mut self.scratch_free);
        for a in 0..d {
            debug_assert_eq!((yg_u[a] + r0[a]).rem_euclid(n), 0);
            yg[a] = (yg_u[a] + r0[a]).div_euclid(n);
        }
        for (pos, x) in free.iter_mut().enumerate() {
            let a = pos % d;
            debug_assert_eq!((free_u[pos] - r0[a]).rem_euclid(n), 0);
            *x = (free_u[pos] - r0[a]).div_euclid(n);
        }
        let v = self.lattice_value(&r0[..d], &mut yg, &mut free);
        self.scratch_yg = yg;
        self.scratch_free = free;
        v
    }

    /// The y_G row through the point (`yg_u0`, `free_u`) when y_G advances by nR
    /// units per grid step: value at grid index ix is `row[ix + off]`.
    pub fn row(&mut self, yg_u0: &[i64], free_u: &[i64]) -> (&[C64], [i64; 3]) {
        let n = self.lat.n as i64;
        let d = self.grid.d;
        let mut r0 = [0i64; 3];
        for a in 0..d {
            r0[a] = if self.lat.nfree() > 0 {
                free_u[a].rem_euclid(n)
            } else {
                (-yg_u0[a]).rem_euclid(n)
            };
        }
        let mut yg = [0i64; 3];
        for a in 0..d {
            yg[a] = (yg_u0[a] + r0[a]).div_euclid(n);
        }
        let mut free = std::mem::take(&mut self.scratch_free);
        for (pos, x) in free.iter_mut().enumerate() {
            *x = (free_u[pos] - r0[pos % d]).div_euclid(n);
        }
        self.lat.reduce(&mut yg[..d], &mut free);
        let r = self.lat.refine as i64;
        let mut c = [0i64; 3];
        let mut off = [0i64; 3];
        for a in 0..d {
            c[a] = yg[a].rem_euclid(r);
            off[a] = yg[a].div_euclid(r);
        }
        let rel = self.lat.index(&free);
        self.scratch_free = free;
        let b = self.grid.points();
        let cp = self.copy(&r0[..d], &c[..d]);
        (&cp[rel * b..(rel + 1) * b], off)
    }

    /// Translate along the frame-invariant diagonal: F(a − r0·u, Z + r0·u), then y_G by c·δ/R.
    fn diagonal_shift_copy(&mut self, r0: &[i64], c: &[i64]) -> Vec<C64> {
        let g = self.grid;
        let d = g.d;
        let lat = self.lat.clone();
        let nf = lat.nfree();
        let e = lat.extent() as usize;
        let b = g.points();
        let mut shape = vec![e; nf * d];
        shape.extend(vec![g.m; d]);
        let axes: Vec<usize> = (0..shape.len()).collect();
        if self.torus_spec.is_none() {
            let tp = ipow(e, nf * d);
            let mut torus = vec![ZERO; tp * b];
            let mut free = vec![0i64; nf * d];
            let zero = vec![0i64; d];
            for t in 0..tp {
                let mut rem = t;
                for pos in (0..nf * d).rev() {
                    free[pos] = (rem % e) as i64 - (e / 2) as i64;
                    rem /= e;
                }
                let mut yg = vec![0i64; d];
                lat.reduce(&mut yg, &mut free);
                let rel = lat.index(&free);
                let r = lat.refine as i64;
                let cc: Vec<i64> = yg.iter().map(|x| x.rem_euclid(r)).collect();
                let off: Vec<i64> = yg.iter().map(|x| x.div_euclid(r)).collect();
                let cp = self.copy(&zero, &cc).clone();
                for gi in 0..b {
                    let ix = g.unravel(gi);
                    let src = ix.iter().enumerate().fold(0usize, |acc, (a, &i)| {
                        acc * g.m + (i as i64 + off[a]).rem_euclid(g.m as i64) as usize
                    });
                    torus[t * b + gi] = cp[rel * b + src];
                }
            }
            fft_axes(&mut torus, &shape, &axes, false);
            self.torus_spec = Some(torus);
        }
        let u = g.delta / (lat.n * lat.refine) as f64;
        let step = g.delta / lat.refine as f64;
        let lrel = e as f64 * step;
        let mut spec = self.torus_spec.as_ref().unwrap().clone();
        let total = spec.len();
        let mut ds = vec![0usize; shape.len()];
        for idx in 0..total {
            let mut rem = idx;
            for pos in (0..shape.len()).rev() {
                ds[pos] = rem % shape[pos];
                rem /= shape[pos];
            }
            let mut ph = 0.0;
            for pos in 0..nf * d {
                let a = pos % d;
                let kappa = 2.0 * std::f64::consts::PI / lrel * signed_mode(ds[pos], e) as f64;
                ph += kappa * r0[a] as f64 * u;
            }
            for a in 0..d {
                let k = g.wavenumber(ds[nf * d + a]);
                ph += k * (c[a] as f64 * step - r0[a] as f64 * u);
            }
            spec[idx] *= C64::from_polar(1.0, ph);
        }
        fft_axes(&mut spec, &shape, &axes, true);
        let mut out = vec![ZERO; lat.points() * b];
        let mut free = vec![0i64; nf * d];
        for rel in 0..lat.points() {
            lat.free_coords(rel, &mut free);
            let t = free
                .iter()
                .fold(0usize, |acc, &x| acc * e + (x + (e / 2) as i64) as usize);
            out[rel * b..(rel + 1) * b].copy_from_slice(&spec[t * b..(t + 1) * b]);
        }
        out
    }
}

/// Lab sector tensor → CM sector via g_{G,n}(y_G, Y') = g_n(y_G + y'_1, …, y_G + y'_n).
fn sector_to_cm(grid: &GridSpec, lab: &[C64], lat: &RelativeLattice) -> Vec<C64> {
    let n = lat.n;
    let d = grid.d;
    let b = grid.points();
    let m = grid.m;
    let r = lat.refine as i64;
    let mut out = vec![ZERO; lat.points() * b];
    if n == 1 {
        out.copy_from_slice(lab);
        return out;
    }
    if lab.iter().all(|z| *z == ZERO) {
        return out;
    }
    let shape = vec![m; d * n];
    let axes: Vec<usize> = (0..shape.len()).collect();
    let mut spec = lab.to_vec();
    fft_axes(&mut spec, &shape, &axes, false);
    // group relative points by their fractional classes
    let mut groups: std::collections::BTreeMap<Vec<i64>, Vec<usize>> = Default::default();
    for rel in 0..lat.points() {
        let full = lat.full_coords(rel);
        let q: Vec<i64> = full.iter().map(|x| x.rem_euclid(r)).collect();
        groups.entry(q).or_default().push(rel);
    }
    let step = grid.delta / lat.refine as f64;
    let ixs = index_table(grid);
    let wrap: Vec<usize> = (0..2 * m).map(|x| x % m).collect();
    // Classes sorted lexicographically share prefixes; level `pos` holds the
    // transform after phasing and inverting axes 0..=pos.
    let p = shape.len();
    let mut levels: Vec<Vec<C64>> = vec![vec![ZERO; spec.len()]; p];
    let mut prev: Option<Vec<i64>> = None;
    for (q, rels) in groups {
        let start = match &prev {
            Some(pq) => (0..p).find(|&i| pq[i] != q[i]).unwrap_or(p),
            None => 0,
        };
        for pos in start..p {
            // e^{ik·qδ/R} factorizes over tensor slots
            let table: Vec<C64> = (0..m)
                .map(|j| C64::from_polar(1.0, grid.wavenumber(j) * q[pos] as f64 * step))
                .collect();
            let inner = m.pow((p - pos - 1) as u32);
            let (done, rest) = levels.split_at_mut(pos);
            let src: &[C64] = if pos == 0 { &spec } else { &done[pos - 1] };
            let dst = &mut rest[0];
            for (db, sb) in dst.chunks_mut(m * inner).zip(src.chunks(m * inner)) {
                for ((drow, srow), f) in db.chunks_mut(inner).zip(sb.chunks(inner)).zip(&table) {
                    for (x, y) in drow.iter_mut().zip(srow) {
                        *x = y * f;
                    }
                }
            }
            fft_axes(dst, &shape, &[pos], true);
        }
        prev = Some(q);
        let copy = &levels[p - 1];
        for rel in rels {
            let full = lat.full_coords(rel);
            let off: Vec<usize> = full.iter().map(|x| x.div_euclid(r).rem_euclid(m as i64) as usize).collect();
            for (gi, gix) in ixs.iter().enumerate() {
                let mut src = 0usize;
                for (pos, o) in off.iter().enumerate() {
                    src = src * m + wrap[gix[pos % d] + o];
                }
                out[rel * b + gi] = copy[src];
            }
        }
    }
    out
}

/// U_G for a set of lab states sharing a grid, one per parameter slot.
pub fn to_cm_slots(states: &[(Vec<f64>, f64, &FockVector)], refine: usize) -> Result<CMFockVector> {
    let first = states
        .first()
        .ok_or_else(|| Error::Config("no parameter slots".into()))?
        .2;
    let grid = first.grid.clone();
    let xis: Vec<(Vec<f64>, f64)> = states.iter().map(|(x, w, _)| (x.clone(), *w)).collect();
    let mut v = CMFockVector::zeros(&grid, first.n_max, refine, &xis)?;
    for (slot, (_, _, u)) in v.slots.iter_mut().zip(states) {
        if u.grid != grid || u.n_max != first.n_max {
            return Err(Error::Config("slots must share grid and truncation".into()));
        }
        slot.sectors[0][0] = u.sectors[0][0];
        for n in 1..=u.n_max {
            let lat = RelativeLattice::new(&grid, n, refine)?;
            slot.sectors[n] = sector_to_cm(&grid, &u.sectors[n], &lat);
        }
    }
    v.dropped_mass = states.iter().map(|(_, w, u)| w * u.dropped_mass).sum();
    Ok(v)
}

/// U_G with a single slot ξ = 0 of unit weight.
pub fn to_cm(u: &FockVector, refine: usize) -> Result<CMFockVector> {
    to_cm_slots(&[(vec![0.0; u.grid.d], 1.0, u)], refine)
}

/// U_G^{-1} of one parameter slot: g_n(Y) = g_{G,n}(ȳ, Y − ȳ) with ȳ the mean of Y.
pub fn from_cm_slot(v: &CMFockVector, slot: usize) -> FockVector {
    let grid = &v.grid;
    let d = grid.d;
    let m = grid.m;
    let b = grid.points();
    let s = &v.slots[slot];
    let mut out = FockVector::zeros(grid, v.n_max);
    out.sectors[0][0] = s.sectors[0][0];
    for n in 1..=v.n_max {
        let lat = v.lattice(n);
        let r = lat.refine as i64;
        let nn = n as i64;
        let mut it = SectorInterp::new(grid, lat, &s.sectors[n]);
        let mut ix = vec![0i64; n * d];
        let mut yg = vec![0i64; d];
        let mut free = vec![0i64; (n - 1) * d];
        for (idx, o) in out.sectors[n].iter_mut().enumerate() {
            let mut rem = idx;
            for pos in (0..n * d).rev() {
                ix[pos] = (rem % m) as i64;
                rem /= m;
            }
            for a in 0..d {
                let sum: i64 = (0..n).map(|j| ix[j * d + a]).sum();
                yg[a] = r * sum;
                for j in 0..n - 1 {
                    free[j * d + a] = nn * r * ix[j * d + a] - r * sum;
                }
            }
            *o = it.value(&yg, &free);
        }
        let _ = b;
    }
    out.dropped_mass = v.dropped_mass;
    out
}

pub fn from_cm(v: &CMFockVector) -> FockVector {
    from_cm_slot(v, 0)
}

/// μ_n integral of a function of the relative coordinates (full coordinates in
/// units δ/R passed to `g`).
pub fn mu_integral<F: FnMut(&[i64]) -> C64>(lat: &RelativeLattice, mut g: F) -> C64 {
    let mut s = ZERO;
    for rel in 0..lat.points() {
        s += g(&lat.full_coords(rel));
    }
    s * lat.weight()
}

/// Flat index of the grid point ix + off (periodic).
fn shifted_index(grid: &GridSpec, ix: &[usize; 3], off: &[i64; 3]) -> usize {
    let m = grid.m as i64;
    (0..grid.d).fold(0, |acc, a| acc * grid.m + (ix[a] as i64 + off[a]).rem_euclid(m) as usize)
}

fn index_table(grid: &GridSpec) -> Vec<[usize; 3]> {
    (0..grid.points())
        .map(|i| {
            let mut out = [0usize; 3];
            for (a, v) in grid.unravel(i).into_iter().enumerate() {
                out[a] = v;
            }
            out
        })
        .collect()
}

/// a_G(V): lowers each sector by one, contracting the last particle against conj V.
pub fn ag_apply(v_pot: &[C64], v: &CMFockVector) -> CMFockVector {
    let grid = &v.grid;
    let d = grid.d;
    let b = grid.points();
    let mut out = v.zeros_like();
    out.dropped_mass = v.dropped_mass;
    let ixs = index_table(grid);
    for (si, slot) in v.slots.iter().enumerate() {
        if v.n_max >= 1 {
            let s: C64 = v_pot
                .iter()
                .zip(&slot.sectors[1])
                .map(|(a, f)| a.conj() * f)
                .sum();
            out.slots[si].sectors[0][0] = s * grid.cell();
        }
        for n in 2..=v.n_max {
            if slot.sectors[n].iter().all(|z| *z == ZERO) {
                continue;
            }
            let src_lat = v.lattice(n);
            let dst_lat = v.lattice(n - 1);
            let r = v.refine as i64;
            let nn = n as i64;
            let c = (n as f64).sqrt() * grid.cell();
            let mut it = SectorInterp::new(grid, src_lat, &slot.sectors[n]);
            let dst = &mut out.slots[si].sectors[n - 1];
            let mut yg = [0i64; 3];
            let mut free = vec![0i64; (n - 1) * d];
            let mut acc = vec![ZERO; b];
            for rel in 0..dst_lat.points() {
                let yprime = if n - 1 == 1 {
                    vec![0i64; d]
                } else {
                    dst_lat.full_coords(rel)
                };
                acc.iter_mut().for_each(|z| *z = ZERO);
                for mix in &ixs {
                    for a in 0..d {
                        let mm = mix[a] as i64;
                        yg[a] = r * mm;
                        for j in 0..n - 1 {
                            free[j * d + a] = nn * yprime[j * d + a] - r * mm;
                        }
                    }
                    let moff = [mix[0] as i64, mix[1] as i64, mix[2] as i64];
                    let (row, off) = it.row(&yg[..d], &free);
                    for (gi, gix) in ixs.iter().enumerate() {
                        let vv = v_pot[shifted_index(grid, gix, &moff)].conj();
                        acc[gi] += vv * row[shifted_index(grid, gix, &off)];
                    }
                }
                for (o, a) in dst[rel * b..(rel + 1) * b].iter_mut().zip(&acc) {
                    *o = a * c;
                }
            }
        }
    }
    out
}

/// y_G translates V(· + c·δ/R) for all classes c ∈ [0,R)^d.
fn potential_copies(grid: &GridSpec, v_pot: &[C64], refine: usize) -> Vec<Vec<C64>> {
    let step = grid.delta / refine as f64;
    (0..ipow(refine, grid.d))
        .map(|ci| {
            let mut rem = ci;
            let mut s = vec![0.0; grid.d];
            for a in (0..grid.d).rev() {
                s[a] = (rem % refine) as f64 * step;
                rem /= refine;
            }
            crate::grid::shift_grid(grid, v_pot, &s)
        })
        .collect()
}

/// a_G*(V): raises each sector by one; the top sector's outflow is recorded as dropped mass.
pub fn ag_star_apply(v_pot: &[C64], v: &CMFockVector) -> CMFockVector {
    let grid = &v.grid;
    let d = grid.d;
    let b = grid.points();
    let r = v.refine as i64;
    let mut out = v.zeros_like();
    let vcopies = potential_copies(grid, v_pot, v.refine);
    let ixs = index_table(grid);
    for (si, slot) in v.slots.iter().enumerate() {
        if v.n_max >= 1 {
            let f0 = slot.sectors[0][0];
            for (o, p) in out.slots[si].sectors[1].iter_mut().zip(v_pot) {
                *o = p * f0;
            }
        }
        for n in 1..v.n_max {
            if slot.sectors[n].iter().all(|z| *z == ZERO) {
                continue;
            }
            let src_lat = v.lattice(n);
            let dst_lat = v.lattice(n + 1);
            let nn = n as i64;
            let c = 1.0 / ((n + 1) as f64).sqrt();
            let mut it = SectorInterp::new(grid, src_lat, &slot.sectors[n]);
            let dst = &mut out.slots[si].sectors[n + 1];
            let mut yg = [0i64; 3];
            let mut free = vec![0i64; (n - 1) * d];
            let mut acc = vec![ZERO; b];
            for rel in 0..dst_lat.points() {
                let full = dst_lat.full_coords(rel);
                acc.iter_mut().for_each(|z| *z = ZERO);
                for j in 0..=n {
                    // V(y_G + y'_j) and F_n(y_G − y'_j/n, (y'_k + y'_j/n)_{k≠j}) in units δ/(nR)
                    let mut ci = 0usize;
                    let mut voff = [0i64; 3];
                    for a in 0..d {
                        let mj = full[j * d + a];
                        ci = ci * v.refine + mj.rem_euclid(r) as usize;
                        voff[a] = mj.div_euclid(r);
                        yg[a] = -mj;
                        let mut pos = 0;
                        for k in 0..=n {
                            if k == j {
                                continue;
                            }
                            if pos < n - 1 {
                                free[pos * d + a] = nn * full[k * d + a] + mj;
                            }
                            pos += 1;
                        }
                    }
                    let vc = &vcopies[ci];
                    let (row, off) = it.row(&yg[..d], &free);
                    for (gi, gix) in ixs.iter().enumerate() {
                        acc[gi] += vc[shifted_index(grid, gix, &voff)] * row[shifted_index(grid, gix, &off)];
                    }
                }
                for (o, a) in dst[rel * b..(rel + 1) * b].iter_mut().zip(&acc) {
                    *o = a * c;
                }
            }
        }
    }
    // ‖a*(V)f_N‖² = ‖V‖²‖f_N‖² + ‖a(V)f_N‖²
    let top = v.n_max;
    let vn2: f64 = v_pot.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell();
    let top_sq = v.sector_norm_sq(top);
    let lowered_sq = if top_sq == 0.0 {
        0.0
    } else {
        let mut topv = v.zeros_like();
        for (a, s) in topv.slots.iter_mut().zip(&v.slots) {
            a.sectors[top] = s.sectors[top].clone();
        }
        ag_apply(v_pot, &topv).norm().powi(2)
    };
    out.dropped_mass = v.dropped_mass + vn2 * top_sq + lowered_sq;
    out
}

/// Largest deviation of F(y_G, σY') from F(y_G, Y') over all permutations σ of
/// the n relative coordinates, relative to max |F|.
pub fn cm_symmetry_defect(v: &CMFockVector) -> f64 {
    let grid = &v.grid;
    let d = grid.d;
    let b = grid.points();
    let mut worst: f64 = 0.0;
    for slot in &v.slots {
        for n in 2..=v.n_max {
            let lat = v.lattice(n);
            let data = &slot.sectors[n];
            let scale = data.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if scale == 0.0 {
                continue;
            }
            let r = v.refine as i64;
            let nn = n as i64;
            let mut it = SectorInterp::new(grid, lat.clone(), data);
            let perms = crate::fock::permutations(n);
            let mut yg = vec![0i64; d];
            let mut free = vec![0i64; (n - 1) * d];
            for rel in 0..lat.points() {
                let full = lat.full_coords(rel);
                for gi in 0..b {
                    let gix = grid.unravel(gi);
                    for p in perms.iter().skip(1) {
                        for a in 0..d {
                            yg[a] = nn * r * gix[a] as i64;
                            for j in 0..n - 1 {
                                free[j * d + a] = nn * full[p[j] * d + a];
                            }
                        }
                        let x = it.value(&yg, &free);
                        worst = worst.max((x - data[rel * b + gi]).norm() / scale);
                    }
                }
            }
        }
    }
    worst
}

/// Mixed norm: inner L^q over y_G per (slot, relative point), outer L^p over
/// slots × sectors × relative points with μ weights; the vacuum is an atom.
pub fn mixed_norm(v: &CMFockVector, p_outer: f64, q_inner: f64) -> f64 {
    mixed_norm_sectors(v, p_outer, q_inner, 0..=v.n_max)
}

pub fn mixed_norm_sectors(
    v: &CMFockVector,
    p: f64,
    q: f64,
    sectors: impl IntoIterator<Item = usize> + Clone,
) -> f64 {
    let b = v.grid.points();
    let cell = v.grid.cell();
    let mut acc = 0.0;
    let mut mx: f64 = 0.0;
    for slot in &v.slots {
        for n in sectors.clone() {
            if n == 0 {
                let x = slot.sectors[0][0].norm();
                if p.is_infinite() {
                    mx = mx.max(x);
                } else {
                    acc += slot.weight * x.powf(p);
                }
                continue;
            }
            let w = v.lattice(n).weight();
            for blk in slot.sectors[n].chunks(b) {
                let x = lp_norm(blk, cell, q);
                if p.is_infinite() {
                    mx = mx.max(x);
                } else {
                    acc += slot.weight * w * x.powf(p);
                }
            }
        }
    }
    if p.is_infinite() {
        mx
    } else {
        acc.powf(1.0 / p)
    }
}

/// Swapped order L^q_{y_G} L^p_{Y'} for one sector of one slot.
pub fn mixed_norm_swapped(v: &CMFockVector, slot: usize, n: usize, p: f64, q: f64) -> f64 {
    let b = v.grid.points();
    let lat = v.lattice(n);
    let data = &v.slots[slot].sectors[n];
    let inner: Vec<C64> = (0..b)
        .map(|gi| {
            let col: Vec<C64> = (0..lat.points()).map(|rel| data[rel * b + gi]).collect();
            C64::new(lp_norm(&col, lat.weight(), p), 0.0)
        })
        .collect();
    lp_norm(&inner, v.grid.cell(), q)
}

/// Total momentum dΓ(D_y) along `axis` in the lab frame.
pub fn total_momentum_lab(u: &FockVector, axis: usize) -> FockVector {
    let g = &u.grid;
    let m = g.m;
    let d = g.d;
    let mut out = u.clone();
    out.sectors[0][0] = ZERO;
    for n in 1..=u.n_max {
        let shape = vec![m; d * n];
        let axes: Vec<usize> = (0..shape.len()).collect();
        let t = &mut out.sectors[n];
        fft_axes(t, &shape, &axes, false);
        let mut ds = vec![0usize; shape.len()];
        for (idx, v) in t.iter_mut().enumerate() {
            let mut rem = idx;
            for pos in (0..shape.len()).rev() {
                ds[pos] = rem % m;
                rem /= m;
            }
            let k: f64 = (0..n).map(|j| g.wavenumber(ds[j * d + axis])).sum();
            *v *= k;
        }
        fft_axes(t, &shape, &axes, true);
    }
    out
}

/// D_{y_G} along `axis` applied to every CM sector.
pub fn d_yg(v: &CMFockVector, axis: usize) -> CMFockVector {
    let g = &v.grid;
    let b = g.points();
    let axes: Vec<usize> = (0..g.d).collect();
    let mut out = v.clone();
    for s in out.slots.iter_mut() {
        s.sectors[0][0] = ZERO;
        for n in 1..=v.n_max {
            for blk in s.sectors[n].chunks_mut(b) {
                fft_axes(blk, &g.shape(), &axes, false);
                for (idx, z) in blk.iter_mut().enumerate() {
                    *z *= g.wavenumber(g.unravel(idx)[axis]);
                }
                fft_axes(blk, &g.shape(), &axes, true);
            }
        }
    }
    out
}

/// Exponent tuple (q', p') with derived p, q (Hölder conjugates) and r'.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponents {
    pub qp: f64,
    pub pp: f64,
    pub p: f64,
    pub q: f64,
    pub rp: f64,
}

fn conjugate(x: f64) -> f64 {
    if x == 1.0 {
        f64::INFINITY
    } else {
        x / (x - 1.0)
    }
}

impl Exponents {
    pub fn new(qp: f64, pp: f64) -> Result<Self> {
        if !(1.0 <= qp && qp <= pp && pp <= 2.0) {
            return Err(Error::Exponents { qp, pp });
        }
        let inv_rp = 0.5 + 1.0 / qp - 1.0 / pp;
        Ok(Self {
            qp,
            pp,
            p: conjugate(pp),
            q: conjugate(qp),
            rp: 1.0 / inv_rp,
        })
    }

    pub fn label(&self) -> String {
        format!("q'={:.4};p'={:.4};r'={:.4}", self.qp, self.pp, self.rp)
    }
}

#[derive(Clone, Debug)]
pub struct BoundRow {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundRow {
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

fn only_sector(v: &CMFockVector, n: usize) -> CMFockVector {
    let mut out = v.zeros_like();
    for (a, s) in out.slots.iter_mut().zip(&v.slots) {
        a.sectors[n] = s.sectors[n].clone();
    }
    out
}

/// Both sides of the L^p bounds for a_G, a_G* on every sector of `v`, and of
/// the number-weighted bounds for the pair (α, α'), α < α'.
pub fn lp_bound_report(
    v_pot: &[C64],
    v: &CMFockVector,
    ex: &Exponents,
    alphas: Option<(f64, f64)>,
) -> Vec<BoundRow> {
    let cell = v.grid.cell();
    let vq = lp_norm(v_pot, cell, ex.qp);
    let vr = lp_norm(v_pot, cell, ex.rp);
    let mut rows = Vec::new();
    // a* on the vacuum: ‖V f0‖_{q'} ≤ ‖V‖_{q'}|f0|
    if v.n_max >= 1 {
        let s0 = only_sector(v, 0);
        let out = ag_star_apply(v_pot, &s0);
        rows.push(BoundRow {
            id: "a_star_vacuum".into(),
            lhs: mixed_norm_sectors(&out, 2.0, ex.qp, [1]),
            rhs: vq * mixed_norm_sectors(&s0, 2.0, 2.0, [0]),
        });
    }
    for n in 1..v.n_max {
        let sn = only_sector(v, n);
        let out = ag_star_apply(v_pot, &sn);
        rows.push(BoundRow {
            id: format!("a_star_n{n}"),
            lhs: mixed_norm_sectors(&out, 2.0, ex.qp, [n + 1]),
            rhs: vr * ((n + 1) as f64).sqrt() * mixed_norm_sectors(&sn, 2.0, ex.pp, [n]),
        });
    }
    if v.n_max >= 1 {
        let s1 = only_sector(v, 1);
        let out = ag_apply(v_pot, &s1);
        rows.push(BoundRow {
            id: "a_n1".into(),
            lhs: mixed_norm_sectors(&out, 2.0, 2.0, [0]),
            rhs: vq * mixed_norm_sectors(&s1, 2.0, ex.q, [1]),
        });
    }
    for n in 2..=v.n_max {
        let sn = only_sector(v, n);
        let out = ag_apply(v_pot, &sn);
        rows.push(BoundRow {
            id: format!("a_n{n}"),
            lhs: mixed_norm_sectors(&out, 2.0, ex.p, [n - 1]),
            rhs: vr * (n as f64).sqrt() * mixed_norm_sectors(&sn, 2.0, ex.q, [n]),
        });
    }
    if let Some((a, ap)) = alphas {
        let cmax = vr.max(vq);
        let gap = (ap - a).sqrt();
        // the top sector is excluded from the creation bound since its image is truncated
        let mut low = v.clone();
        for s in low.slots.iter_mut() {
            s.sectors[v.n_max].iter_mut().for_each(|z| *z = ZERO);
        }
        let up = ag_star_apply(v_pot, &low).number_weight(a).unwrap();
        let src = low.number_weight(ap).unwrap();
        rows.push(BoundRow {
            id: "exp_a_star".into(),
            lhs: mixed_norm(&up, 2.0, ex.qp),
            rhs: cmax * ap.exp() / (2.0 * gap) * mixed_norm(&src, 2.0, ex.pp),
        });
        let down = ag_apply(v_pot, v).number_weight(a).unwrap();
        let src = v.number_weight(ap).unwrap();
        rows.push(BoundRow {
            id: "exp_a".into(),
            lhs: mixed_norm(&down, 2.0, ex.p),
            rhs: cmax * (-a).exp() / (2.0 * gap) * mixed_norm(&src, 2.0, ex.q),
        });
    }
    rows
}

/// ‖V(y_G + y')φ(y_G)‖_{L²_{y'} L^{q'}_{y_G}} and ‖V‖_{r'}‖φ‖_{p'}, y' on the δ-grid.
pub fn young_check(grid: &GridSpec, v_pot: &[C64], phi: &[C64], ex: &Exponents) -> (f64, f64) {
    let b = grid.points();
    let m = grid.m;
    let cell = grid.cell();
    let mut acc = 0.0;
    for yi in 0..b {
        let yix = grid.unravel(yi);
        let row: Vec<C64> = (0..b)
            .map(|gi| {
                let gix = grid.unravel(gi);
                let vidx = (0..grid.d).fold(0, |acc, a| acc * m + (gix[a] + yix[a]) % m);
                v_pot[vidx] * phi[gi]
            })
            .collect();
        acc += lp_norm(&row, cell, ex.qp).powi(2);
    }
    let lhs = (acc * cell).sqrt();
    let rhs = lp_norm(v_pot, cell, ex.rp) * lp_norm(phi, cell, ex.pp);
    (lhs, rhs)
}
