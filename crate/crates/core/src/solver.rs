//! Three-component Duhamel system in the CM frame, its Picard solution, and a
//! split-step reference integrator.
//!
//! Time integrals use the composite trapezoid on the shared uniform grid,
//! evaluated recursively: D_{j+1} = U(Δt)D_j + Δt/2 (U(Δt)F_j + F_{j+1}).
//! Only t ≥ 0 is computed; negative times follow from t ↦ −t.

use crate::cm::{ag_apply, ag_star_apply, CMFockVector};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, C64};
use crate::norms::{weighted_m_profile, MKind, Trajectory, WeightParams};
use crate::propagator::FreeFlow;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chi {
    /// 1_{[0, 1/ε]}(N)
    Hard,
    /// e^{−εN}
    Exp,
}

impl Chi {
    pub fn weight(self, eps: f64, n: usize) -> f64 {
        if eps == 0.0 {
            return 1.0;
        }
        match self {
            Chi::Hard => {
                if n as f64 <= 1.0 / eps {
                    1.0
                } else {
                    0.0
                }
            }
            Chi::Exp => (-eps * n as f64).exp(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub h: f64,
    pub gamma: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub cv: f64,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub eps: f64,
    pub chi: Chi,
    pub k_alpha: usize,
    /// Strang substeps per output node in the reference integrator.
    pub substeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            h: 0.1,
            gamma: 0.05,
            alpha0: -1.0,
            alpha1: 1.0,
            cv: 1.0,
            dt: 0.005,
            tol: 1e-9,
            max_iter: 60,
            eps: 0.0,
            chi: Chi::Exp,
            k_alpha: 8,
            substeps: 4,
        }
    }
}

impl SolverConfig {
    pub fn weights(&self) -> WeightParams {
        WeightParams {
            h: self.h,
            alpha0: self.alpha0,
            alpha1: self.alpha1,
            gamma: self.gamma,
            cv: self.cv,
            k_alpha: self.k_alpha,
        }
    }

    /// Microscopic end time T_{α_0}/h.
    pub fn t_end(&self) -> f64 {
        self.gamma * (self.alpha1 - self.alpha0) / self.h
    }

    /// Uniform nodes 0, Δt', …, t_end with Δt' ≤ Δt.
    pub fn times(&self) -> Vec<f64> {
        times_to(self.t_end(), self.dt)
    }

    pub fn validate(&self, v: &CMFockVector) -> Result<()> {
        self.weights().validate()?;
        if !(self.tol > 0.0) {
            return Err(Error::Config("solver.tol must be > 0".into()));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Config("solver.eps must be >= 0".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("solver.substeps must be >= 1".into()));
        }
        let limit = phase_step_limit(v);
        if !(self.dt > 0.0) || self.dt > limit {
            return Err(Error::Config(format!(
                "solver.dt = {} does not resolve the fastest free phase (need <= {limit:.3e})",
                self.dt
            )));
        }
        Ok(())
    }
}

fn times_to(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt).ceil().max(1.0) as usize;
    let step = t_end / n as f64;
    (0..=n).map(|j| j as f64 * step).collect()
}

/// Eight samples per period of the fastest phase e^{−it|ξ−k|²}.
pub fn phase_step_limit(v: &CMFockVector) -> f64 {
    let g = &v.grid;
    let kmax = g.k_max() * (g.d as f64).sqrt();
    let w = v
        .slots
        .iter()
        .map(|s| {
            let xi = s.xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            (xi + kmax).powi(2)
        })
        .fold(0.0, f64::max);
    2.0 * std::f64::consts::PI / w / 8.0
}

/// V_1 enters a_G*, V_2 enters a_G; both are the same V in the standard system.
#[derive(Clone, Debug)]
pub struct Potentials {
    pub v_create: Vec<C64>,
    pub v_annihilate: Vec<C64>,
}

impl Potentials {
    pub fn same(v: &[C64]) -> Self {
        Self {
            v_create: v.to_vec(),
            v_annihilate: v.to_vec(),
        }
    }
    pub fn is_zero(&self) -> bool {
        self.v_create.iter().chain(&self.v_annihilate).all(|z| *z == C64::new(0.0, 0.0))
    }
}

fn chi_sectors(v: &mut CMFockVector, chi: Chi, eps: f64) {
    if eps == 0.0 {
        return;
    }
    for s in v.slots.iter_mut() {
        for (n, sec) in s.sectors.iter_mut().enumerate() {
            let w = chi.weight(eps, n);
            if w != 1.0 {
                sec.iter_mut().for_each(|z| *z *= w);
            }
        }
    }
}

/// Interaction operators with the optional χ_ε(N) sandwich.
struct Ops<'a> {
    pot: &'a Potentials,
    chi: Chi,
    eps: f64,
}

impl Ops<'_> {
    fn new<'a>(pot: &'a Potentials, cfg: &SolverConfig) -> Ops<'a> {
        Ops {
            pot,
            chi: cfg.chi,
            eps: cfg.eps,
        }
    }
    fn astar(&self, v: &CMFockVector) -> CMFockVector {
        let mut x = v.clone();
        chi_sectors(&mut x, self.chi, self.eps);
        let mut y = ag_star_apply(&self.pot.v_create, &x);
        chi_sectors(&mut y, self.chi, self.eps);
        y
    }
    fn a(&self, v: &CMFockVector) -> CMFockVector {
        let mut x = v.clone();
        chi_sectors(&mut x, self.chi, self.eps);
        let mut y = ag_apply(&self.pot.v_annihilate, &x);
        chi_sectors(&mut y, self.chi, self.eps);
        y
    }
}

/// D[F](t_j) = ∫_0^{t_j} U(t_j − s) F(s) ds by the recursive trapezoid.
pub fn duhamel(flow: &FreeFlow, f: &[CMFockVector]) -> Vec<CMFockVector> {
    let dt = flow.t;
    let half = C64::new(0.5 * dt, 0.0);
    let mut out = Vec::with_capacity(f.len());
    let mut d = f[0].zeros_like();
    out.push(d.clone());
    for j in 1..f.len() {
        let mut next = flow.apply(&d.axpy(half, &f[j - 1]));
        next.axpy_in_place(half, &f[j]);
        d = next;
        out.push(d.clone());
    }
    out
}

/// U(t_j)u0 for every node.
pub fn free_trajectory(u0: &CMFockVector, times: &[f64]) -> Vec<CMFockVector> {
    let flow = FreeFlow::new(u0, times.get(1).copied().unwrap_or(0.0) - times[0]);
    let mut out = Vec::with_capacity(times.len());
    let mut u = u0.clone();
    out.push(u.clone());
    for _ in 1..times.len() {
        u = flow.apply(&u);
        out.push(u.clone());
    }
    out
}

#[derive(Clone, Debug)]
pub struct SystemTrajectory {
    pub times: Vec<f64>,
    pub inf: Vec<CMFockVector>,
    pub two: Vec<CMFockVector>,
    pub one: Vec<CMFockVector>,
}

impl SystemTrajectory {
    pub fn zeros(times: &[f64], like: &CMFockVector) -> Self {
        let z = like.zeros_like();
        Self {
            times: times.to_vec(),
            inf: vec![z.clone(); times.len()],
            two: vec![z.clone(); times.len()],
            one: vec![z; times.len()],
        }
    }

    fn comps(&self) -> [&Vec<CMFockVector>; 3] {
        [&self.inf, &self.two, &self.one]
    }

    pub fn axpy_in_place(&mut self, c: C64, o: &Self) {
        for (a, b) in [&mut self.inf, &mut self.two, &mut self.one].into_iter().zip(o.comps()) {
            for (x, y) in a.iter_mut().zip(b) {
                x.axpy_in_place(c, y);
            }
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut out = self.clone();
        out.axpy_in_place(C64::new(-1.0, 0.0), o);
        out
    }

    pub fn trajectory(&self, which: MKind) -> Trajectory {
        let states = match which {
            MKind::Inf => &self.inf,
            MKind::Two => &self.two,
            MKind::One => &self.one,
        };
        Trajectory {
            times: self.times.clone(),
            states: states.clone(),
        }
    }

    /// M = M_∞ + M_2 + M_1.
    pub fn m_norm(&self, w: &WeightParams) -> Result<f64> {
        let mut total = 0.0;
        for (states, kind) in self.comps().into_iter().zip([MKind::Inf, MKind::Two, MKind::One]) {
            let prof: Vec<Vec<f64>> = states
                .iter()
                .map(|s| (0..=s.n_max).map(|n| s.sector_norm_sq(n)).collect())
                .collect();
            total += weighted_m_profile(&self.times, &prof, w, kind)?;
        }
        Ok(total)
    }

    /// Largest L² norm over nodes and components.
    pub fn sup_norm(&self) -> f64 {
        self.comps()
            .into_iter()
            .flat_map(|c| c.iter().map(|s| s.norm()))
            .fold(0.0, f64::max)
    }
}

/// (f_∞, f_2): f_∞ = −i D[√h a_G* U(s)u0], f_2 = a_G(f_∞ + U(t)u0). f_1 ≡ 0.
pub fn rhs_build(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig) -> Result<SystemTrajectory> {
    cfg.validate(u0)?;
    let times = cfg.times();
    rhs_on(u0, pot, cfg, &times)
}

fn rhs_on(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig, times: &[f64]) -> Result<SystemTrajectory> {
    let ops = Ops::new(pot, cfg);
    let free = free_trajectory(u0, times);
    let sh = C64::new(cfg.h.sqrt(), 0.0);
    let src: Vec<CMFockVector> = free.iter().map(|u| ops.astar(u).scale(sh)).collect();
    let flow = FreeFlow::new(u0, times[1] - times[0]);
    let finf: Vec<CMFockVector> = duhamel(&flow, &src).into_iter().map(|x| x.scale(-I)).collect();
    let f2: Vec<CMFockVector> = finf.iter().zip(&free).map(|(a, b)| ops.a(&a.add(b))).collect();
    let mut out = SystemTrajectory::zeros(times, u0);
    out.inf = finf;
    out.two = f2;
    Ok(out)
}

/// The six nonzero blocks of L:
/// (Lu)_∞ = −i D[√h a_G* u_∞ + √h u_2 + u_1], (Lu)_2 = −i√h a_G D[u_2],
/// (Lu)_1 = −i a_G D[h a_G* u_∞ + √h u_1].
pub fn apply_l(traj: &SystemTrajectory, pot: &Potentials, cfg: &SolverConfig) -> SystemTrajectory {
    let ops = Ops::new(pot, cfg);
    let sh = cfg.h.sqrt();
    let like = &traj.inf[0];
    let flow = FreeFlow::new(like, traj.times[1] - traj.times[0]);
    let astar_inf: Vec<CMFockVector> = traj.inf.iter().map(|u| ops.astar(u)).collect();
    let src_inf: Vec<CMFockVector> = (0..traj.times.len())
        .map(|j| {
            let mut x = astar_inf[j].scale(C64::new(sh, 0.0));
            x.axpy_in_place(C64::new(sh, 0.0), &traj.two[j]);
            x.axpy_in_place(C64::new(1.0, 0.0), &traj.one[j]);
            x
        })
        .collect();
    let src_one: Vec<CMFockVector> = (0..traj.times.len())
        .map(|j| {
            let mut x = astar_inf[j].scale(C64::new(cfg.h, 0.0));
            x.axpy_in_place(C64::new(sh, 0.0), &traj.one[j]);
            x
        })
        .collect();
    let inf = duhamel(&flow, &src_inf).into_iter().map(|x| x.scale(-I)).collect();
    let two = duhamel(&flow, &traj.two)
        .iter()
        .map(|x| ops.a(x).scale(-I * sh))
        .collect();
    let one = duhamel(&flow, &src_one).iter().map(|x| ops.a(x).scale(-I)).collect();
    SystemTrajectory {
        times: traj.times.clone(),
        inf,
        two,
        one,
    }
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    /// M-norm of u^{(k+1)} − u^{(k)}; entry 0 is M(f).
    pub increments: Vec<f64>,
    /// increments[k+1]/increments[k].
    pub ratios: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Diagnostics {
    /// Largest per-iterate ratio: the empirical contraction ratio.
    pub fn contraction_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Picard iteration u ← L u + f on increments. Aborts after three consecutive
/// ratios ≥ 1.
pub fn picard_solve(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig) -> Result<(SystemTrajectory, Diagnostics)> {
    let f = rhs_build(u0, pot, cfg)?;
    let w = cfg.weights();
    let mut u = f.clone();
    let mut delta = f;
    let mut diag = Diagnostics::default();
    diag.increments.push(delta.m_norm(&w)?);
    diag.iterations = 1;
    let mut bad = 0;
    while diag.increments.last().copied().unwrap_or(0.0) >= cfg.tol {
        if diag.iterations >= cfg.max_iter {
            return Ok((u, diag));
        }
        delta = apply_l(&delta, pot, cfg);
        let inc = delta.m_norm(&w)?;
        let prev = *diag.increments.last().unwrap();
        let ratio = inc / prev;
        diag.ratios.push(ratio);
        diag.increments.push(inc);
        diag.iterations += 1;
        if ratio >= 1.0 {
            bad += 1;
            if bad >= 3 {
                return Err(Error::Divergence { ratio });
            }
        } else {
            bad = 0;
        }
        u.axpy_in_place(C64::new(1.0, 0.0), &delta);
    }
    diag.converged = true;
    Ok((u, diag))
}

/// M(Lx)/M(x) for x_q(t) = (t/t_end)·w_q with fixed random CM vectors w_q.
pub fn probe_ratio(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig, seed: u64) -> Result<f64> {
    cfg.validate(u0)?;
    let times = cfg.times();
    let mut r = crate::rng::stream(seed, 0);
    let mut rand_like = || {
        let mut v = u0.zeros_like();
        for s in v.slots.iter_mut() {
            for sec in s.sectors.iter_mut() {
                for z in sec.iter_mut() {
                    *z = crate::rng::complex_normal(&mut r);
                }
            }
        }
        let nv = v.norm();
        v.scale(C64::new(1.0 / nv, 0.0))
    };
    let ws = [rand_like(), rand_like(), rand_like()];
    let te = *times.last().unwrap();
    let mk = |w: &CMFockVector| -> Vec<CMFockVector> {
        times.iter().map(|t| w.scale(C64::new(t / te, 0.0))).collect()
    };
    let x = SystemTrajectory {
        times: times.clone(),
        inf: mk(&ws[0]),
        two: mk(&ws[1]),
        one: mk(&ws[2]),
    };
    let wp = cfg.weights();
    Ok(apply_l(&x, pot, cfg).m_norm(&wp)? / x.m_norm(&wp)?)
}

/// Refuses γ whose probe ratio reaches 0.9.
pub fn check_gamma(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig, seed: u64) -> Result<f64> {
    let ratio = probe_ratio(u0, pot, cfg, seed)?;
    if ratio >= 0.9 {
        return Err(Error::GammaTooLarge { ratio });
    }
    Ok(ratio)
}

/// u_G(t) = u_∞(t) + U(t)u0.
pub fn reconstruct(u_inf: &[CMFockVector], u0: &CMFockVector, times: &[f64]) -> Vec<CMFockVector> {
    free_trajectory(u0, times)
        .into_iter()
        .zip(u_inf)
        .map(|(f, u)| f.add(u))
        .collect()
}

/// ‖√h a_G(V)u_G(t) − u_1(t) − √h u_2(t)‖ per node.
pub fn identity_split_check(
    traj: &SystemTrajectory,
    u_g: &[CMFockVector],
    pot: &Potentials,
    cfg: &SolverConfig,
) -> Vec<f64> {
    let ops = Ops::new(pot, cfg);
    let sh = C64::new(cfg.h.sqrt(), 0.0);
    u_g.iter()
        .enumerate()
        .map(|(j, u)| {
            let mut r = ops.a(u).scale(sh);
            r.axpy_in_place(C64::new(-1.0, 0.0), &traj.one[j]);
            r.axpy_in_place(-sh, &traj.two[j]);
            r.norm()
        })
        .collect()
}

/// e^{−iτW}u by Taylor series, W = √h(a_G,ε*(V_1) + a_G,ε(V_2)).
fn interaction_exp(ops: &Ops, sh: f64, tau: f64, u: &CMFockVector) -> CMFockVector {
    let mut out = u.clone();
    let mut term = u.clone();
    let base = u.norm().max(1e-300);
    for k in 1..80 {
        let w = ops.astar(&term).add(&ops.a(&term));
        term = w.scale(-I * (sh * tau / k as f64));
        out.axpy_in_place(C64::new(1.0, 0.0), &term);
        if term.norm() < 1e-17 * base {
            break;
        }
    }
    out.dropped_mass = u.dropped_mass;
    out
}

#[derive(Clone, Debug)]
pub struct ReferenceRun {
    pub times: Vec<f64>,
    pub states: Vec<CMFockVector>,
    /// max_t |‖u(t)‖² − ‖u0‖²|
    pub leakage: f64,
}

/// Strang splitting U(Δ/2) e^{−iΔW} U(Δ/2) with `cfg.substeps` steps per node,
/// on the nodes of `times` (uniform).
pub fn reference_integrate_on(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig, times: &[f64]) -> Result<ReferenceRun> {
    let dt_node = times[1] - times[0];
    let step = dt_node / cfg.substeps as f64;
    if step > phase_step_limit(u0) {
        return Err(Error::Config(format!(
            "reference step {step:.3e} does not resolve the fastest free phase"
        )));
    }
    let ops = Ops::new(pot, cfg);
    let sh = cfg.h.sqrt();
    let half = FreeFlow::new(u0, 0.5 * step);
    let n0 = u0.norm().powi(2);
    let mut u = u0.clone();
    let mut states = vec![u.clone()];
    let mut leak: f64 = 0.0;
    for _ in 1..times.len() {
        for _ in 0..cfg.substeps {
            u = half.apply(&u);
            u = interaction_exp(&ops, sh, step, &u);
            u = half.apply(&u);
        }
        leak = leak.max((u.norm().powi(2) - n0).abs());
        states.push(u.clone());
    }
    Ok(ReferenceRun {
        times: times.to_vec(),
        states,
        leakage: leak,
    })
}

pub fn reference_integrate(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig) -> Result<ReferenceRun> {
    cfg.validate(u0)?;
    reference_integrate_on(u0, pot, cfg, &cfg.times())
}

/// ε-truncated evolution and ‖u_G(t) − v_ε(t)‖ per node against the untruncated run.
pub fn truncated_dynamics(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig) -> Result<(ReferenceRun, Vec<f64>)> {
    let v = reference_integrate(u0, pot, cfg)?;
    let mut base = cfg.clone();
    base.eps = 0.0;
    let u = reference_integrate(u0, pot, &base)?;
    let gaps = u.states.iter().zip(&v.states).map(|(a, b)| a.sub(b).norm()).collect();
    Ok((v, gaps))
}

#[derive(Clone, Debug)]
pub struct ExpansionReport {
    /// Macroscopic increments δ = h·τ.
    pub deltas: Vec<f64>,
    /// ‖e^{(α_1/2)N} R_k(δ)‖ for k = 0, 1, 2.
    pub remainders: [Vec<f64>; 3],
    pub slopes: [f64; 3],
}

/// Remainders after the free term, the single Duhamel term and the double
/// Duhamel term, at microscopic times δ/h on the node grid of step cfg.dt.
/// `deltas` are rounded to the nearest node.
pub fn expansion_check(u0: &CMFockVector, pot: &Potentials, cfg: &SolverConfig, deltas: &[f64]) -> Result<ExpansionReport> {
    if deltas.is_empty() {
        return Err(Error::Config("expansion needs at least one delta".into()));
    }
    let dmax = deltas.iter().copied().fold(0.0, f64::max);
    if deltas.iter().any(|&d| d < 0.0) || dmax > cfg.gamma * (cfg.alpha1 - cfg.alpha0) {
        return Err(Error::Config(format!(
            "expansion deltas must lie in [0, T_alpha0 = {}]",
            cfg.gamma * (cfg.alpha1 - cfg.alpha0)
        )));
    }
    if dmax == 0.0 {
        return Ok(ExpansionReport {
            deltas: deltas.to_vec(),
            remainders: [vec![0.0; deltas.len()], vec![0.0; deltas.len()], vec![0.0; deltas.len()]],
            slopes: [f64::NAN; 3],
        });
    }
    if cfg.dt > phase_step_limit(u0) {
        return Err(Error::Config("solver.dt does not resolve the fastest free phase".into()));
    }
    let times = times_to(dmax / cfg.h, cfg.dt);
    let step = times[1] - times[0];
    let exact = reference_integrate_on(u0, pot, cfg, &times)?;
    let ops = Ops::new(pot, cfg);
    let sh = C64::new(cfg.h.sqrt(), 0.0);
    let flow = FreeFlow::new(u0, step);
    let free = free_trajectory(u0, &times);
    let w = |x: &CMFockVector| ops.astar(x).add(&ops.a(x)).scale(-I * sh);
    let d1 = duhamel(&flow, &free.iter().map(w).collect::<Vec<_>>());
    let d2 = duhamel(&flow, &d1.iter().map(w).collect::<Vec<_>>());
    let half = 0.5 * cfg.alpha1;
    let mut rem = [vec![], vec![], vec![]];
    for &d in deltas {
        let j = ((d / cfg.h) / step).round() as usize;
        let r0 = exact.states[j].sub(&free[j]);
        let r1 = r0.sub(&d1[j]);
        let r2 = r1.sub(&d2[j]);
        rem[0].push(r0.weighted_norm(half));
        rem[1].push(r1.weighted_norm(half));
        rem[2].push(r2.weighted_norm(half));
    }
    let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let slope = |r: &Vec<f64>| {
        let ly: Vec<f64> = r.iter().map(|x| x.max(1e-300).ln()).collect();
        crate::grid::fit_slope(&lx, &ly)
    };
    let slopes = [slope(&rem[0]), slope(&rem[1]), slope(&rem[2])];
    Ok(ExpansionReport {
        deltas: deltas.to_vec(),
        remainders: rem,
        slopes,
    })
}

/// sup_t ‖u_∞[V_1, V_2](t) − u_∞[base](t)‖ from two Picard solves.
pub fn perturb_potential(u0: &CMFockVector, base: &Potentials, pert: &Potentials, cfg: &SolverConfig) -> Result<f64> {
    let (a, _) = picard_solve(u0, base, cfg)?;
    let (b, _) = picard_solve(u0, pert, cfg)?;
    Ok(a.inf.iter().zip(&b.inf).map(|(x, y)| x.sub(y).norm()).fold(0.0, f64::max))
}

/// ‖V‖_{L^{2d/(d+2)}} on the grid.
pub fn potential_norm(grid: &GridSpec, v: &[C64]) -> f64 {
    let r = 2.0 * grid.d as f64 / (grid.d as f64 + 2.0);
    crate::grid::lp_norm(v, grid.cell(), r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cm::to_cm_slots;
    use crate::fock::FockVector;
    use crate::grid::{gaussian, ZERO};

    fn setup(m: usize, xi: f64) -> (GridSpec, CMFockVector, Vec<C64>) {
        let g = GridSpec::new(1, m, 0.5).unwrap();
        let l = g.length();
        let v = gaussian(&g, &[l / 2.0], 1.5, &[0.0]);
        let mut u = FockVector::vacuum(&g, 2, C64::new(1.0, 0.0));
        let phi = gaussian(&g, &[l / 2.0 - 2.0], 1.5, &[2.0 * std::f64::consts::PI / l]);
        let nphi = crate::grid::lp_norm(&phi, g.cell(), 2.0);
        for (s, p) in u.sectors[1].iter_mut().zip(&phi) {
            *s = p / nphi * 0.5;
        }
        let v0 = to_cm_slots(&[(vec![xi], 1.0, &u)], 2).unwrap();
        (g, v0, v)
    }

    fn cfg() -> SolverConfig {
        SolverConfig {
            h: 0.1,
            gamma: 0.05,
            dt: 0.01,
            ..Default::default()
        }
    }

    #[test]
    fn zero_potential_is_trivial() {
        let (g, u0, _) = setup(16, 0.3);
        let pot = Potentials::same(&vec![ZERO; g.points()]);
        let c = cfg();
        let f = rhs_build(&u0, &pot, &c).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
        let (u, d) = picard_solve(&u0, &pot, &c).unwrap();
        assert_eq!(d.iterations, 1);
        assert!(d.converged);
        assert_eq!(u.sup_norm(), 0.0);
        let r = reference_integrate(&u0, &pot, &c).unwrap();
        let free = free_trajectory(&u0, &c.times());
        for (a, b) in r.states.iter().zip(&free) {
            assert!(a.sub(b).norm() < 1e-12);
        }
        let l = apply_l(&f, &Potentials::same(&gaussian(&g, &[4.0], 1.0, &[0.0])), &c);
        assert_eq!(l.sup_norm(), 0.0);
    }

    #[test]
    fn apply_l_is_linear() {
        let (_g, u0, v) = setup(16, 0.3);
        let pot = Potentials::same(&v);
        let c = cfg();
        let f = rhs_build(&u0, &pot, &c).unwrap();
        let mut r = crate::rng::stream(4, 0);
        let a = crate::rng::complex_normal(&mut r);
        let mut g = f.clone();
        for x in g.two.iter_mut() {
            *x = x.scale(C64::new(0.3, -1.0));
        }
        let mut s = f.clone();
        s.axpy_in_place(a, &g);
        let mut lhs = apply_l(&f, &pot, &c);
        lhs.axpy_in_place(a, &apply_l(&g, &pot, &c));
        let rhs = apply_l(&s, &pot, &c);
        assert!(lhs.sub(&rhs).sup_norm() < 1e-12 * (1.0 + rhs.sup_norm()));
    }

    #[test]
    fn vacuum_source_matches_closed_form() {
        // sector-1 part of f_∞ for u0 = vacuum, by Richardson on two step sizes
        let g = GridSpec::new(1, 16, 0.5).unwrap();
        let v = gaussian(&g, &[4.0], 1.0, &[0.0]);
        let xi = 0.7;
        let u = FockVector::vacuum(&g, 1, C64::new(1.0, 0.0));
        let u0 = to_cm_slots(&[(vec![xi], 1.0, &u)], 1).unwrap();
        let pot = Potentials::same(&v);
        let run = |dt: f64| {
            let c = SolverConfig {
                h: 0.1,
                gamma: 0.025,
                dt,
                ..Default::default()
            };
            let f = rhs_build(&u0, &pot, &c).unwrap();
            (c.times(), f.inf.last().unwrap().slots[0].sectors[1].clone())
        };
        let (ta, a) = run(0.004);
        let (_, b) = run(0.002);
        let t = *ta.last().unwrap();
        let mut vh = v.clone();
        crate::grid::fft_grid(&g, &mut vh, false);
        let mut exact: Vec<C64> = (0..16)
            .map(|j| {
                let k = g.wavenumber(j);
                let e1 = (xi - k) * (xi - k);
                let om = e1 - xi * xi;
                let int = if om.abs() < 1e-14 {
                    C64::new(t, 0.0)
                } else {
                    (C64::from_polar(1.0, t * om) - 1.0) / (I * om)
                };
                -I * 0.1f64.sqrt() * vh[j] * C64::from_polar(1.0, -t * e1) * int
            })
            .collect();
        crate::grid::fft_grid(&g, &mut exact, true);
        let scale = exact.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut err_b: f64 = 0.0;
        let mut err_r: f64 = 0.0;
        for j in 0..16 {
            let rich = (b[j] * 4.0 - a[j]) / 3.0;
            err_b = err_b.max((b[j] - exact[j]).norm());
            err_r = err_r.max((rich - exact[j]).norm());
        }
        assert!(err_b < 1e-3 * scale, "trapezoid error {err_b}");
        assert!(err_r < 1e-8 * scale, "extrapolated error {err_r}");
    }

    #[test]
    fn picard_matches_split_step_and_identity() {
        let (_g, u0, v) = setup(16, 0.3);
        let pot = Potentials::same(&v);
        let c = SolverConfig {
            tol: 1e-11,
            dt: 0.0025,
            substeps: 2,
            ..cfg()
        };
        let (sol, diag) = picard_solve(&u0, &pot, &c).unwrap();
        assert!(diag.converged);
        let times = c.times();
        let ug = reconstruct(&sol.inf, &u0, &times);
        let res = identity_split_check(&sol, &ug, &pot, &c);
        assert!(res.iter().copied().fold(0.0, f64::max) < 10.0 * c.tol);
        let r = reference_integrate(&u0, &pot, &c).unwrap();
        for (a, b) in ug.iter().zip(&r.states) {
            assert!(a.sub(b).norm() < 1e-4 * b.norm());
        }
        assert!(r.leakage < 1e-10, "leakage {}", r.leakage);
        assert!(ug[0].sub(&u0).norm() == 0.0);
    }

    #[test]
    fn identity_detects_non_solution() {
        let (_g, u0, v) = setup(16, 0.3);
        let pot = Potentials::same(&v);
        let c = cfg();
        let f = rhs_build(&u0, &pot, &c).unwrap();
        let mut bogus = f.clone();
        for x in bogus.one.iter_mut() {
            *x = u0.clone();
        }
        let ug = reconstruct(&f.inf, &u0, &c.times());
        let res = identity_split_check(&bogus, &ug, &pot, &c);
        assert!(res.iter().copied().fold(0.0, f64::max) > 0.1);
    }

    #[test]
    fn truncation_limits() {
        let (_g, u0, v) = setup(16, 0.3);
        let pot = Potentials::same(&v);
        let c = SolverConfig {
            gamma: 0.02,
            chi: Chi::Hard,
            eps: 0.5,
            ..cfg()
        };
        // 1/ε = 2 ≥ N_max: identical to the untruncated run
        let (_, gaps) = truncated_dynamics(&u0, &pot, &c).unwrap();
        assert!(gaps.iter().all(|&x| x == 0.0));
        let c2 = SolverConfig { eps: 0.1, chi: Chi::Exp, ..c };
        let (_, gaps) = truncated_dynamics(&u0, &pot, &c2).unwrap();
        assert!(gaps.iter().copied().fold(0.0, f64::max) > 0.0);
    }

    #[test]
    fn identical_potential_pairs_agree() {
        let (_g, u0, v) = setup(16, 0.3);
        let pot = Potentials::same(&v);
        let c = SolverConfig { gamma: 0.02, ..cfg() };
        assert_eq!(perturb_potential(&u0, &pot, &pot, &c).unwrap(), 0.0);
        let cplx = Potentials {
            v_create: v.clone(),
            v_annihilate: v.iter().map(|z| z * C64::new(1.0, 0.2)).collect(),
        };
        assert!(perturb_potential(&u0, &pot, &cplx, &c).unwrap() > 0.0);
    }

    #[test]
    fn expansion_at_zero_and_free() {
        let (g, u0, v) = setup(16, 0.3);
        let c = cfg();
        let r = expansion_check(&u0, &Potentials::same(&v), &c, &[0.0]).unwrap();
        assert!(r.remainders.iter().all(|x| x[0] == 0.0));
        let z = Potentials::same(&vec![ZERO; g.points()]);
        let r = expansion_check(&u0, &z, &c, &[0.01, 0.02]).unwrap();
        for k in 0..3 {
            assert!(r.remainders[k].iter().all(|&x| x < 1e-12));
        }
        assert!(expansion_check(&u0, &z, &c, &[10.0]).is_err());
    }

    #[test]
    fn coarse_step_rejected() {
        let (_g, u0, _) = setup(16, 0.3);
        let c = SolverConfig { dt: 1.0, ..cfg() };
        assert!(c.validate(&u0).is_err());
    }
}
