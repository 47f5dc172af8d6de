//! Weighted trajectory functionals M_∞, M_2, M_1, dyadic time partitions and
//! the norm families N_{p,i}.
//!
//! Suprema over α and τ run over finite grids. In M_1 the weight 1/√(ht) is
//! singular at t = 0; that node is skipped and quadrature starts at the first
//! positive node.

use crate::cm::CMFockVector;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct WeightParams {
    pub h: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub gamma: f64,
    pub cv: f64,
    /// Number of α samples α_0 + k(α_1 − α_0)/K, k < K.
    pub k_alpha: usize,
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 < self.alpha1) {
            return Err(Error::Config("weights.alpha0 must be < weights.alpha1".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config("weights.gamma must be > 0".into()));
        }
        if !(self.h > 0.0) {
            return Err(Error::Config("h must be > 0".into()));
        }
        if self.k_alpha == 0 {
            return Err(Error::Config("weights.k_alpha must be >= 1".into()));
        }
        Ok(())
    }

    /// max(e^{α_1}, e^{−α_0})/2.
    pub fn m_a01(&self) -> f64 {
        self.alpha1.exp().max((-self.alpha0).exp()) / 2.0
    }

    /// T_α = γ(α_1 − α).
    pub fn t_alpha(&self, alpha: f64) -> f64 {
        self.gamma * (self.alpha1 - alpha)
    }

    pub fn alphas(&self) -> Vec<f64> {
        (0..self.k_alpha)
            .map(|k| self.alpha0 + k as f64 * (self.alpha1 - self.alpha0) / self.k_alpha as f64)
            .collect()
    }
}

/// States on a uniform grid of non-negative times starting at 0.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMFockVector>,
}

impl Trajectory {
    /// ‖sector n‖² for every node.
    pub fn sector_profile(&self) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .map(|s| (0..=s.n_max).map(|n| s.sector_norm_sq(n)).collect())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MKind {
    Inf,
    Two,
    One,
}

fn weighted(prof: &[f64], alpha: f64) -> f64 {
    prof.iter()
        .enumerate()
        .map(|(n, s)| (2.0 * alpha * n as f64).exp() * s)
        .sum::<f64>()
        .sqrt()
}

/// M_∞, M_2 or M_1 from per-node sector norms on uniform `times`.
pub fn weighted_m_profile(times: &[f64], prof: &[Vec<f64>], p: &WeightParams, which: MKind) -> Result<f64> {
    p.validate()?;
    let h = p.h;
    if times.len() < 2 || !(h * times[1] < p.t_alpha(p.alpha0)) {
        return Err(Error::EmptyWindow);
    }
    let dt = times[1] - times[0];
    let norm = 1.0 / (p.m_a01() * p.cv * p.gamma.sqrt());
    let mut best: f64 = 0.0;
    for alpha in p.alphas() {
        let ta = p.t_alpha(alpha);
        let vals: Vec<f64> = prof.iter().map(|s| weighted(s, alpha)).collect();
        match which {
            MKind::Inf => {
                for (j, &t) in times.iter().enumerate() {
                    if t > 0.0 && h * t < ta {
                        best = best.max(((ta - h * t) / (h * t)).sqrt() * vals[j]);
                    }
                }
            }
            MKind::Two => {
                let mut acc = 0.0;
                for j in 1..times.len() {
                    acc += 0.5 * dt * (vals[j - 1].powi(2) + vals[j].powi(2));
                    if h * times[j] < ta {
                        best = best.max((ta - h * times[j]).sqrt() * acc.sqrt() * norm);
                    }
                }
            }
            MKind::One => {
                let mut acc = 0.0;
                for j in 2..times.len() {
                    let g = |k: usize| vals[k] / (h * times[k]).sqrt();
                    acc += 0.5 * dt * (g(j - 1) + g(j));
                    if h * times[j] < ta {
                        best = best.max((ta - h * times[j]).sqrt() * acc * norm);
                    }
                }
            }
        }
    }
    Ok(best)
}

/// weighted_M on a triple (u_∞, u_2, u_1).
pub fn weighted_m(traj: [&Trajectory; 3], p: &WeightParams, which: MKind) -> Result<f64> {
    let t = match which {
        MKind::Inf => traj[0],
        MKind::Two => traj[1],
        MKind::One => traj[2],
    };
    weighted_m_profile(&t.times, &t.sector_profile(), p, which)
}

/// M = M_∞ + M_2 + M_1.
pub fn weighted_m_total(traj: [&Trajectory; 3], p: &WeightParams) -> Result<f64> {
    Ok(weighted_m(traj, p, MKind::Inf)? + weighted_m(traj, p, MKind::Two)? + weighted_m(traj, p, MKind::One)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionMode {
    AroundT,
    AroundZeroAndT,
}

#[derive(Clone, Debug)]
pub struct DyadicPartition {
    pub t: f64,
    pub mode: PartitionMode,
    /// (n, start, end) with J^n_T = [start, end).
    pub intervals: Vec<(i64, f64, f64)>,
}

impl DyadicPartition {
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(_, a, b)| b - a).sum()
    }
}

/// J^n_T = [(1−2^{−n})T, (1−2^{−n−1})T) for 0 ≤ n ≤ n_max; in the two-sided mode
/// J^0 = [T/4, T/2) and J^n = 2^n J^0 for −n_max ≤ n < 0.
pub fn dyadic_partition(t: f64, mode: PartitionMode, n_max: usize) -> DyadicPartition {
    let around_t = |n: i64| {
        (
            n,
            (1.0 - 2f64.powi(-n as i32)) * t,
            (1.0 - 2f64.powi(-n as i32 - 1)) * t,
        )
    };
    let intervals = match mode {
        PartitionMode::AroundT => (0..=n_max as i64).map(around_t).collect(),
        PartitionMode::AroundZeroAndT => {
            let mut v: Vec<(i64, f64, f64)> = (1..=n_max as i64)
                .rev()
                .map(|k| {
                    let s = 2f64.powi(-(k as i32));
                    (-k, s * t / 4.0, s * t / 2.0)
                })
                .collect();
            v.push((0, t / 4.0, t / 2.0));
            v.extend((1..=n_max as i64).map(around_t));
            v
        }
    };
    DyadicPartition { t, mode, intervals }
}

/// α′_0 = (α_1 + 6α)/7, α′_n = (α_1 + (2^{n+2}−1)α)/2^{n+2}.
pub fn alpha_prime_schedule(alpha: f64, alpha1: f64, n: u32) -> f64 {
    if n == 0 {
        (alpha1 + 6.0 * alpha) / 7.0
    } else {
        let q = 2f64.powi(n as i32 + 2);
        (alpha1 + (q - 1.0) * alpha) / q
    }
}

/// Non-negative scalar profile, constant on `values.len()` equal cells of [0, T/h).
struct Profile<'a> {
    values: &'a [f64],
    t: f64,
    h: f64,
}

impl Profile<'_> {
    fn cell(&self) -> f64 {
        self.t / self.h / self.values.len() as f64
    }

    /// ∫_{[a,b)} |φ|^p w(t) dt over physical time, where w = 1 or (ht)^{−1/2}; exact per cell.
    fn integral(&self, a: f64, b: f64, p: u8, singular: bool) -> f64 {
        let dc = self.cell();
        let n = self.values.len();
        let a = a.max(0.0);
        let b = b.min(self.t / self.h);
        if b <= a {
            return 0.0;
        }
        let j0 = ((a / dc).floor() as usize).min(n - 1);
        let j1 = ((b / dc).ceil() as usize).min(n);
        let mut s = 0.0;
        for j in j0..j1 {
            let lo = a.max(j as f64 * dc);
            let hi = b.min((j + 1) as f64 * dc);
            if hi <= lo {
                continue;
            }
            let w = if singular {
                2.0 / self.h * ((self.h * hi).sqrt() - (self.h * lo).sqrt())
            } else {
                hi - lo
            };
            s += self.values[j].abs().powi(p as i32) * w;
        }
        s
    }

    /// ‖φ‖_{L^p} (optionally with weight (ht)^{−1/2}) over h^{−1}[a, b) in macroscopic time.
    fn norm(&self, a: f64, b: f64, p: u8, singular: bool) -> f64 {
        let v = self.integral(a / self.h, b / self.h, p, singular);
        if p == 2 {
            v.sqrt()
        } else {
            v
        }
    }
}

/// Sub-points per cell for the τ supremum.
const TAU_SUB: usize = 8;

fn depth(cells: usize) -> i32 {
    (cells as f64).log2().ceil() as i32 + 4
}

/// N_{p,i} of a profile constant on equal cells of [0, T/h).
pub fn n_norm(values: &[f64], p: u8, i: u8, t: f64, h: f64) -> f64 {
    assert!(p == 1 || p == 2, "p must be 1 or 2");
    assert!((1..=4).contains(&i), "i must be 1..=4");
    if values.is_empty() {
        return 0.0;
    }
    let f = Profile { values, t, h };
    let kmax = depth(values.len());
    let sqrt_t = t.sqrt();
    // first-term weight (T/ht)^{1/2} for p = 1 is √T times the singular weight
    let head = |end: f64| -> f64 {
        if p == 2 {
            sqrt_t * f.norm(0.0, end, 2, false)
        } else {
            sqrt_t * f.norm(0.0, end, 1, true)
        }
    };
    let tail_scale = |delta: f64| if p == 2 { delta.sqrt() } else { (delta / t).sqrt() };
    match i {
        1 => {
            let steps = values.len() * TAU_SUB;
            let mut best: f64 = 0.0;
            for k in 0..steps {
                let tau = t * k as f64 / steps as f64;
                let v = if p == 2 {
                    f.norm(0.0, tau, 2, false)
                } else {
                    f.norm(0.0, tau, 1, true)
                };
                best = best.max((t - tau).sqrt() * v);
            }
            best
        }
        2 | 4 => {
            let (end, k0, width) = if i == 2 { (0.75 * t, 3, 2.0) } else { (0.875 * t, 4, 3.0) };
            let mut sup: f64 = 0.0;
            for k in k0..=kmax {
                let delta = t / 2f64.powi(k);
                let v = f.norm(t - width * delta, t - delta, p, false);
                sup = sup.max(tail_scale(delta) * v);
            }
            head(end) + sup
        }
        _ => {
            let start = if p == 2 { 0 } else { 2 };
            let mut sup: f64 = 0.0;
            for n in start..=kmax {
                let a = (1.0 - 2f64.powi(-n)) * t;
                let b = (1.0 - 2f64.powi(-n - 1)) * t;
                sup = sup.max(2f64.powi(-n).sqrt() * f.norm(a, b, p, false));
            }
            if p == 2 {
                sqrt_t * sup
            } else {
                head(0.75 * t) + sup
            }
        }
    }
}

/// N_{p,i} of a trajectory sampled at uniform nodes covering [0, T/h]: the norm at
/// each node, averaged over adjacent nodes, gives the cell values.
pub fn n_norm_trajectory(traj: &Trajectory, p: u8, i: u8, t: f64, h: f64) -> f64 {
    let node: Vec<f64> = traj.states.iter().map(|s| s.norm()).collect();
    let cells: Vec<f64> = node.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    n_norm(&cells, p, i, t, h)
}

/// Band [lo, hi] for N_{p,i}/N_{p,1} assembled from the proof's factor chain.
pub fn kappa_band(p: u8, i: u8) -> (f64, f64) {
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    let c1 = s2 / (s2 - 1.0);
    match (p, i) {
        (_, 1) => (1.0, 1.0),
        (2, 2) => (0.5, 3.0),
        (2, 3) => (1.0 / (s3 + s2), 2.0),
        (2, 4) => (0.5, 1.0 + 2.0 * s2),
        (1, 2) => (s3 / (2.0 * s2 * c1), 3.0),
        (1, 3) => (s3 / (2.0 * c1), 2.0 + s2),
        (1, 4) => (1.0 / (1.0 + c1 / 2.0).max(c1 * s2 * 2.0 / s3), 1.0 + 2.0 * s2),
        _ => panic!("no band for p={p}, i={i}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_profile_is_zero() {
        let z = vec![0.0; 64];
        for p in [1, 2] {
            for i in 1..=4 {
                assert_eq!(n_norm(&z, p, i, 1.0, 1.0), 0.0);
            }
        }
    }

    #[test]
    fn single_dyadic_interval() {
        // unit L² mass on J^n_T, T = h = 1, cells of width 1/256
        let cells = 256;
        for n in 0..5 {
            let a = 1.0 - 2f64.powi(-n);
            let b = 1.0 - 2f64.powi(-n - 1);
            let amp = 1.0 / (b - a as f64).sqrt();
            let v: Vec<f64> = (0..cells)
                .map(|j| {
                    let m = (j as f64 + 0.5) / cells as f64;
                    if m >= a && m < b {
                        amp
                    } else {
                        0.0
                    }
                })
                .collect();
            let got = n_norm(&v, 2, 3, 1.0, 1.0);
            assert!((got - 2f64.powi(-n).sqrt()).abs() < 1e-12, "n={n} got={got}");
        }
    }

    #[test]
    fn partition_geometry() {
        let d = dyadic_partition(2.0, PartitionMode::AroundT, 10);
        assert_eq!(d.intervals[0], (0, 0.0, 1.0));
        for w in d.intervals.windows(2) {
            assert_eq!(w[0].2, w[1].1);
        }
        for &(n, a, b) in &d.intervals {
            assert!((b - a - 2.0 * 2f64.powi(-(n as i32) - 1)).abs() < 1e-15);
        }
        assert!(2.0 - d.measure() <= 2.0 * 2f64.powi(-10));
        let e = dyadic_partition(1.0, PartitionMode::AroundZeroAndT, 6);
        let j0 = e.intervals.iter().find(|x| x.0 == 0).unwrap();
        assert_eq!((j0.1, j0.2), (0.25, 0.5));
        let jm1 = e.intervals.iter().find(|x| x.0 == -1).unwrap();
        assert_eq!((jm1.1, jm1.2), (0.125, 0.25));
        let j1 = e.intervals.iter().find(|x| x.0 == 1).unwrap();
        assert_eq!((j1.1, j1.2), (0.5, 0.75));
    }

    #[test]
    fn alpha_prime_identities() {
        let g = 1.3;
        let a1 = 1.0;
        let ta = |a: f64| g * (a1 - a);
        assert!((alpha_prime_schedule(0.0, 1.0, 1) - 0.125).abs() < 1e-15);
        for n in 2..=6 {
            let al = -0.4;
            let ap = alpha_prime_schedule(al, a1, n);
            assert!((ta(ap) - (1.0 - 2f64.powi(-(n as i32) - 2)) * ta(al)).abs() < 1e-14);
            // J^n_{T_α} = [T_{α′}−3δ_n, T_{α′}−δ_n) with δ_n = T_α/2^{n+2}
            let dn = ta(al) / 2f64.powi(n as i32 + 2);
            let lo = (1.0 - 2f64.powi(-(n as i32))) * ta(al);
            let hi = (1.0 - 2f64.powi(-(n as i32) - 1)) * ta(al);
            assert!((ta(ap) - 3.0 * dn - lo).abs() < 1e-14);
            assert!((ta(ap) - dn - hi).abs() < 1e-14);
        }
        let al = 0.2;
        let ap0 = alpha_prime_schedule(al, a1, 0);
        assert!((0.875 * ta(ap0) - 0.75 * ta(al)).abs() < 1e-14);
    }

    #[test]
    fn m_inf_of_vacuum_root_profile() {
        let p = WeightParams {
            h: 0.1,
            alpha0: -1.0,
            alpha1: 1.0,
            gamma: 0.5,
            cv: 1.0,
            k_alpha: 8,
        };
        let c = 0.7;
        let dt = 1e-4;
        let times: Vec<f64> = (0..20).map(|j| j as f64 * dt).collect();
        let prof: Vec<Vec<f64>> = times.iter().map(|t| vec![(p.h * t) * c * c, 0.0]).collect();
        let m = weighted_m_profile(&times, &prof, &p, MKind::Inf).unwrap();
        let exact = c * (p.gamma * (p.alpha1 - p.alpha0)).sqrt();
        assert!((m - exact).abs() < 1e-4 * exact);
        assert!(m <= exact);
        let zero: Vec<Vec<f64>> = times.iter().map(|_| vec![0.0, 0.0]).collect();
        for k in [MKind::Inf, MKind::Two, MKind::One] {
            assert_eq!(weighted_m_profile(&times, &zero, &p, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn m2_of_unit_bump_matches_sweep() {
        let p = WeightParams {
            h: 0.5,
            alpha0: -0.5,
            alpha1: 0.5,
            gamma: 2.0,
            cv: 1.3,
            k_alpha: 5,
        };
        let dt = 0.01;
        let times: Vec<f64> = (0..=400).map(|j| j as f64 * dt).collect();
        // unit L²_t mass on nodes 50..=150 (trapezoid)
        let (a, b) = (50, 150);
        let amp2 = 1.0 / ((b - a) as f64 * dt);
        let prof: Vec<Vec<f64>> = (0..times.len())
            .map(|j| vec![if j >= a && j <= b { amp2 } else { 0.0 }])
            .collect();
        let m = weighted_m_profile(&times, &prof, &p, MKind::Two).unwrap();
        // exhaustive sweep over α and τ of the same quantity
        let mut best: f64 = 0.0;
        for al in p.alphas() {
            let ta = p.t_alpha(al);
            let mut acc = 0.0;
            for j in 1..times.len() {
                acc += 0.5 * dt * (prof[j - 1][0] + prof[j][0]);
                if p.h * times[j] < ta {
                    best = best.max((ta - p.h * times[j]).sqrt() * acc.sqrt());
                }
            }
        }
        let expect = best / (p.m_a01() * p.cv * p.gamma.sqrt());
        assert!((m - expect).abs() < 1e-12);
        // the full bump mass is reached one node past the right edge
        let edge = (p.t_alpha(p.alpha0) - p.h * times[b + 1]).sqrt() * (1.0 + amp2 * dt).sqrt();
        assert!((m - edge / (p.m_a01() * p.cv * p.gamma.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn empty_window_rejected() {
        let p = WeightParams {
            h: 1.0,
            alpha0: 0.0,
            alpha1: 0.01,
            gamma: 0.01,
            cv: 1.0,
            k_alpha: 2,
        };
        let times = vec![0.0, 1.0, 2.0];
        let prof = vec![vec![1.0]; 3];
        assert!(matches!(
            weighted_m_profile(&times, &prof, &p, MKind::Inf),
            Err(Error::EmptyWindow)
        ));
    }
}
