//! Subcommand bodies. Each writes its artifacts into the run directory and
//! returns summary lines plus the list of violated checks.

use std::fs;
use std::io;
use std::path::Path;

use fockcm::checks::{frame_suite, inequality_suite, norm_suite, ops_suite, CheckRow};
use fockcm::cm::{from_cm_slot, CMFockVector};
use fockcm::fock::{write_dump, FockVector};
use fockcm::grid::{fit_slope, project_band, C64};
use fockcm::noise::{crosscheck_suite, CrossCheck};
use fockcm::propagator::evolve_free;
use fockcm::rng;
use fockcm::semiclassics::{band_leak_amplitude, coherent_state, husimi, husimi_rows, HusimiField};
use fockcm::solver::{
    expansion_check, identity_split_check, perturb_potential, picard_solve, reconstruct, reference_integrate,
    truncated_dynamics, Potentials, SolverConfig,
};
use toml::{Table, Value};

use crate::config::{ExperimentConfig, FieldError, PotentialKind};
use crate::output::{husimi_raster, num, read_csv, RunDir};
use crate::queue;
use crate::svg::{heatmap, line_plot, Series};

pub const INEQ_SLACK: f64 = 1e-6;
pub const HOMOGENEITY_TOL: f64 = 1e-10;
pub const Z_LIMIT: f64 = 5.0;
pub const WICK_TOL: f64 = 1e-10;
pub const HUSIMI_MASS_TOL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    H,
    Eps,
    Gamma,
    Delta,
}

impl Sweep {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "h" => Some(Sweep::H),
            "eps" => Some(Sweep::Eps),
            "gamma" => Some(Sweep::Gamma),
            "delta" => Some(Sweep::Delta),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sweep::H => "h",
            Sweep::Eps => "eps",
            Sweep::Gamma => "gamma",
            Sweep::Delta => "delta",
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(Vec<FieldError>),
    Failed(String),
    Io(io::Error),
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<fockcm::Error> for RunError {
    fn from(e: fockcm::Error) -> Self {
        match e {
            fockcm::Error::Config(m) => RunError::Config(vec![FieldError::new("<runtime>", m)]),
            fockcm::Error::Io(e) => RunError::Io(e),
            other => RunError::Failed(other.to_string()),
        }
    }
}

#[derive(Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub violations: Vec<String>,
}

pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub run: RunDir,
    pub threads: usize,
    pub sweep: Option<Sweep>,
}

type Res = Result<Outcome, RunError>;

fn b(x: bool) -> String {
    x.to_string()
}

fn max_of<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_slope(&lx, &ly)
}

fn check_rows(rows: &[CheckRow], seed: u64, out: &mut Outcome) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let ratio = if r.tol > 0.0 { r.value / r.tol } else { f64::INFINITY };
            if !r.pass() {
                out.violations.push(format!(
                    "seed={seed} suite={} id={} trial={} value={} tol={}",
                    r.suite,
                    r.id,
                    r.trial,
                    num(r.value),
                    num(r.tol)
                ));
            }
            vec![r.suite.to_string(), r.id.clone(), r.trial.to_string(), num(r.value), num(r.tol), num(ratio), b(r.pass())]
        })
        .collect()
}

pub fn verify_ops(ctx: &mut Ctx) -> Res {
    let cfg = ctx.cfg;
    let g = cfg.grid();
    let f = &cfg.fock;
    let parts = queue::run(ctx.threads, &[0u8, 1], |&k| {
        if k == 0 {
            ops_suite(&g, f.n_max, f.band, f.trials, cfg.seed)
        } else {
            frame_suite(&g, f.n_max, f.band, f.trials, cfg.seed)
        }
    });
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    let mut out = Outcome::default();
    let csv = check_rows(&rows, cfg.seed, &mut out);
    ctx.run.csv("checks.csv", &["suite", "id", "trial", "value", "tol", "ratio", "pass"], &csv)?;
    let mut ids: Vec<(&str, &str)> = rows.iter().map(|r| (r.suite, r.id.as_str())).collect();
    ids.sort();
    ids.dedup();
    for (s, id) in ids {
        let sel: Vec<&CheckRow> = rows.iter().filter(|r| r.suite == s && r.id == id).collect();
        let worst = max_of(sel.iter().map(|r| r.value / r.tol));
        out.lines.push(format!("{s}/{id}: {} rows, max value/tol {worst:.3e}", sel.len()));
    }
    Ok(out)
}

pub fn verify_ineq(ctx: &mut Ctx) -> Res {
    let cfg = ctx.cfg;
    let f = &cfg.fock;
    let iq = &cfg.inequalities;
    let rows = inequality_suite(&cfg.grid(), f.n_max, f.band, &iq.tuples, iq.trials, cfg.seed, iq.alphas)?;
    let mut out = Outcome::default();
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let ok = r.ratio() <= 1.0 + INEQ_SLACK;
            if !ok {
                out.violations.push(format!(
                    "seed={} id={} exponents={} trial={} lhs={} rhs={}",
                    cfg.seed,
                    r.id,
                    r.exponents,
                    r.trial_seed,
                    num(r.lhs),
                    num(r.rhs)
                ));
            }
            vec![r.id.clone(), r.exponents.clone(), r.trial_seed.to_string(), num(r.lhs), num(r.rhs), num(r.ratio()), b(ok)]
        })
        .collect();
    ctx.run.csv("inequalities.csv", &["id", "exponents", "trial", "lhs", "rhs", "ratio", "pass"], &csv)?;
    let mut ids: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    for id in ids {
        let worst = max_of(rows.iter().filter(|r| r.id == id).map(|r| r.ratio()));
        out.lines.push(format!("{id}: max ratio {worst:.6}"));
    }
    Ok(out)
}

pub fn verify_norms(ctx: &mut Ctx) -> Res {
    let cfg = ctx.cfg;
    let n = &cfg.norms;
    let rows = norm_suite(n.trials, n.cells, cfg.seed, n.t_window, n.h);
    let mut out = Outcome::default();
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let ok = r.in_band() && r.homogeneity <= HOMOGENEITY_TOL;
            if !ok {
                out.violations.push(format!(
                    "seed={} trial={} p={} i={} ratio={} band=[{}, {}] homogeneity={}",
                    cfg.seed,
                    r.trial,
                    r.p,
                    r.i,
                    num(r.ratio),
                    num(r.lo),
                    num(r.hi),
                    num(r.homogeneity)
                ));
            }
            vec![
                r.trial.to_string(),
                r.p.to_string(),
                r.i.to_string(),
                num(r.ratio),
                num(r.lo),
                num(r.hi),
                num(r.homogeneity),
                b(ok),
            ]
        })
        .collect();
    ctx.run.csv("norms.csv", &["trial", "p", "i", "ratio", "lo", "hi", "homogeneity", "pass"], &csv)?;
    for p in [1u8, 2] {
        let sel: Vec<_> = rows.iter().filter(|r| r.p == p).collect();
        let lo = sel.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let hi = max_of(sel.iter().map(|r| r.ratio));
        out.lines.push(format!("p={p}: ratios in [{lo:.4}, {hi:.4}] over {} rows", sel.len()));
    }
    out.lines.push(format!("homogeneity: max {:.2e}", max_of(rows.iter().map(|r| r.homogeneity))));
    Ok(out)
}

pub fn mc_crosscheck(ctx: &mut Ctx) -> Res {
    let cfg = ctx.cfg;
    if cfg.potential.kind == PotentialKind::RandomComplex {
        return Err(RunError::Config(vec![FieldError::new(
            "potential.kind",
            "the random field needs a real covariance profile",
        )]));
    }
    let g = cfg.grid();
    let v = cfg.potential();
    let mut r = rng::stream(cfg.seed, 11);
    let f = FockVector::random(&g, 2, 1, None, &mut r);
    let gv = FockVector::random(&g, 2, 2, None, &mut r);
    let rows = crosscheck_suite(&CrossCheck {
        grid: &g,
        v: &v,
        f: &f,
        g: &gv,
        xs: &cfg.mc.xs,
        n_samples: cfg.mc.samples,
        seed: cfg.seed,
    })?;
    let mut out = Outcome::default();
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|m| {
            let ok = if m.experiment_id == "wick_pathwise" {
                m.mc_mean < WICK_TOL
            } else {
                m.z_score().abs() <= Z_LIMIT
            };
            if !ok {
                out.violations.push(format!(
                    "seed={} experiment={} x={} mean={} stderr={} analytic={}",
                    cfg.seed,
                    m.experiment_id,
                    m.x_index,
                    num(m.mc_mean),
                    num(m.mc_stderr),
                    num(m.analytic_value)
                ));
            }
            vec![
                m.experiment_id.clone(),
                m.x_index.to_string(),
                num(m.mc_mean),
                num(m.mc_stderr),
                num(m.analytic_value),
                num(m.z_score()),
                b(ok),
            ]
        })
        .collect();
    ctx.run.csv(
        "crosscheck.csv",
        &["experiment_id", "x_index", "mc_mean", "mc_stderr", "analytic_value", "z", "pass"],
        &csv,
    )?;
    let mut ids: Vec<&str> = rows.iter().map(|m| m.experiment_id.as_str()).collect();
    ids.sort();
    ids.dedup();
    for id in ids {
        let z = max_of(rows.iter().filter(|m| m.experiment_id == id).map(|m| m.z_score().abs()));
        out.lines.push(format!("{id}: max |z| {z:.2}"));
    }
    Ok(out)
}

struct SolveRun {
    h: f64,
    gamma: f64,
    iterations: usize,
    converged: bool,
    ratio: f64,
    oracle: f64,
    identity: f64,
    sup_weighted: f64,
    traj: Vec<[f64; 4]>,
    finals: Vec<FockVector>,
}

fn solve_one(u0: &CMFockVector, pot: &Potentials, sc: &SolverConfig, oracle_substeps: usize) -> fockcm::Result<SolveRun> {
    let (traj, diag) = picard_solve(u0, pot, sc)?;
    let u_g = reconstruct(&traj.inf, u0, &traj.times);
    let oracle = reference_integrate(
        u0,
        pot,
        &SolverConfig {
            substeps: oracle_substeps,
            ..sc.clone()
        },
    )?;
    let err = max_of(u_g.iter().zip(&oracle.states).map(|(a, b)| a.sub(b).norm() / b.norm()));
    let identity = max_of(identity_split_check(&traj, &u_g, pot, sc));
    let rows: Vec<[f64; 4]> = traj
        .times
        .iter()
        .zip(&u_g)
        .zip(&oracle.states)
        .map(|((t, u), o)| [*t, u.norm(), u.weighted_norm(sc.alpha1), o.norm()])
        .collect();
    let last = u_g.last().expect("at least one node");
    Ok(SolveRun {
        h: sc.h,
        gamma: sc.gamma,
        iterations: diag.iterations,
        converged: diag.converged,
        ratio: diag.contraction_ratio(),
        oracle: err,
        identity,
        sup_weighted: max_of(rows.iter().map(|r| r[2])),
        traj: rows,
        finals: (0..last.slots.len()).map(|k| from_cm_slot(last, k)).collect(),
    })
}

pub fn solve(ctx: &mut Ctx) -> Res {
    let cfg = ctx.cfg;
    let s = &cfg.solver;
    let jobs: Vec<(f64, f64)> = match ctx.sweep {
        Some(Sweep::H) => cfg.sweep.h.iter().map(|&h| (h, s.gamma)).collect(),
        Some(Sweep::Gamma) => cfg.sweep.gamma.iter().map(|&g| (s.h, g)).collect(),
        _ => vec![(s.h, s.gamma)],
    };
    let u0 = cfg.initial_state()?;
    let pot = Potentials::same(&cfg.potential());
    let runs = queue::run(ctx.threads, &jobs, |&(h, gamma)| {
        solve_one(&u0, &pot, &cfg.solver_config(&pot, h, gamma), s.oracle_substeps)
    });
    let mut out = Outcome::default();
    let mut summary = Vec::new();
    let mut traj = Vec::new();
    let mut series = Vec::new();
    for (j, (run, &(h, gamma))) in runs.into_iter().zip(&jobs).enumerate() {
        let r = match run {
            Ok(r) => r,
            Err(fockcm::Error::Config(m)) => return Err(RunError::Config(vec![FieldError::new("<runtime>", m)])),
            Err(e) => {
                out.violations.push(format!("seed={} h={h} gamma={gamma} error={e}", cfg.seed));
                let nan = num(f64::NAN);
                summary.push(vec![num(h), num(gamma), "0".into(), b(false), nan.clone(), nan.clone(), nan.clone(), nan, b(false)]);
                continue;
            }
        };
        let ok = r.converged && r.oracle <= s.oracle_tol && r.identity <= 10.0 * s.tol;
        if !ok {
            out.violations.push(format!(
                "seed={} h={} gamma={} converged={} oracle_rel_l2={} identity={}",
                cfg.seed,
                r.h,
                r.gamma,
                r.converged,
                num(r.oracle),
                num(r.identity)
            ));
        }
        out.lines.push(format!(
            "h={} gamma={}: {} iterations, contraction {:.4}, oracle {:.2e}, identity {:.2e}",
            r.h, r.gamma, r.iterations, r.ratio, r.oracle, r.identity
        ));
        summary.push(vec![
            num(r.h),
            num(r.gamma),
            r.iterations.to_string(),
            b(r.converged),
            num(r.ratio),
            num(r.oracle),
            num(r.identity),
            num(r.sup_weighted),
            b(ok),
        ]);
        for row in &r.traj {
            traj.push(vec![num(r.h), num(r.gamma), num(row[0]), num(row[1]), num(row[2]), num(row[3])]);
        }
        series.push(Series {
            label: format!("h={} gamma={}", r.h, r.gamma),
            points: r.traj.iter().map(|row| (row[0], row[2])).collect(),
        });
        for (k, u) in r.finals.iter().enumerate() {
            let mut buf = Vec::new();
            write_dump(u, &mut buf)?;
            ctx.run.bytes(&format!("u_final_run{j}_slot{k}.fock"), &buf)?;
        }
    }
    ctx.run.csv(
        "solve.csv",
        &[
            "h",
            "gamma",
            "iterations",
            "converged",
            "contraction_ratio",
            "oracle_rel_l2",
            "identity_residual",
            "sup_weighted_norm",
            "pass",
        ],
        &summary,
    )?;
    ctx.run.csv("trajectory.csv", &["h", "gamma", "t", "norm", "weighted_norm", "oracle_norm"], &traj)?;
    ctx.run.text(
        "trajectory.svg",
        &line_plot("number-weighted norm along the solution", "t", "weighted norm", &series, false),
    )?;
    Ok(out)
}

pub fn truncate_sweep(ctx: &mut Ctx) -> Res {
    let cfg = ctx.cfg;
    let s = &cfg.solver;
    let hs = if ctx.sweep == Some(Sweep::H) {
        cfg.sweep.h.clone()
    } else {
        vec![s.h]
    };
    let jobs: Vec<(f64, f64)> = hs.iter().flat_map(|&h| cfg.sweep.eps.iter().map(move |&e| (h, e))).collect();
    let u0 = cfg.initial_state()?;
    let pot = Potentials::same(&cfg.potential());
    let gaps = queue::run(ctx.threads, &jobs, |&(h, eps)| {
        let sc = SolverConfig {
            eps,
            ..cfg.solver_config(&pot, h, s.gamma)
        };
        truncated_dynamics(&u0, &pot, &sc).map(|(_, g)| max_of(g))
    })
    .into_iter()
    .collect::<fockcm::Result<Vec<f64>>>()?;
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &h in &hs {
        let pts: Vec<(f64, f64)> = gaps.iter().zip(&jobs).filter(|(_, j)| j.0 == h).map(|(g, j)| (j.1, *g)).collect();
        rows.extend(pts.iter().map(|&(eps, g)| vec![num(h), num(eps), num(g)]));
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let slope = log_slope(&x, &y);
        out.lines.push(format!("h={h}: eps slope {slope:.3}"));
        fits.push(vec![num(h), num(slope)]);
    }
    ctx.run.csv("truncation.csv", &["h", "eps", "sup_gap"], &rows)?;
    ctx.run.csv("truncation_fit.csv", &["h", "slope"], &fits)?;
    Ok(out)
}

pub fn expansion(ctx: &mut Ctx) -> Res {
    let cfg = ctx.cfg;
    let s = &cfg.solver;
    let u0 = cfg.initial_state()?;
    let pot = Potentials::same(&cfg.potential());
    let rep = expansion_check(&u0, &pot, &cfg.solver_config(&pot, s.h, s.gamma), &cfg.sweep.delta)?;
    let rows: Vec<Vec<String>> = (0..rep.deltas.len())
        .map(|j| vec![num(rep.deltas[j]), num(rep.remainders[0][j]), num(rep.remainders[1][j]), num(rep.remainders[2][j])])
        .collect();
    ctx.run.csv("expansion.csv", &["delta", "r0", "r1", "r2"], &rows)?;
    let mut out = Outcome::default();
    let fits: Vec<Vec<String>> = (0..3)
        .map(|k| {
            let want = 0.5 * (k + 1) as f64;
            out.lines.push(format!("remainder {k}: slope {:.3} (leading order {want})", rep.slopes[k]));
            vec![k.to_string(), num(rep.slopes[k]), num(want)]
        })
        .collect();
    ctx.run.csv("expansion_fit.csv", &["k", "slope", "leading_order"], &fits)?;
    Ok(out)
}

pub fn perturb(ctx: &mut Ctx) -> Res {
    let cfg = ctx.cfg;
    let s = &cfg.solver;
    let g = cfg.grid();
    let v = cfg.potential();
    let pb = &cfg.perturb;
    let mut r = rng::stream(cfg.seed, 10);
    let dv: Vec<C64> = project_band(&g, &rng::complex_vec(&mut r, g.points()), pb.band)
        .iter()
        .map(|z| z * pb.amplitude)
        .collect();
    let u0 = cfg.initial_state()?;
    let base = Potentials::same(&v);
    let sc = cfg.solver_config(&base, s.h, s.gamma);
    let diffs = queue::run(ctx.threads, &pb.scales, |&scale| {
        let p: Vec<C64> = v.iter().zip(&dv).map(|(a, d)| a + d * scale).collect();
        perturb_potential(&u0, &base, &Potentials::same(&p), &sc)
    });
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (d, &scale) in diffs.into_iter().zip(&pb.scales) {
        let d = d?;
        let prev = ys.last().copied();
        rows.push(vec![num(scale), num(d), prev.map_or(String::new(), |p: f64| num(d / p))]);
        ys.push(d);
    }
    ctx.run.csv("perturb.csv", &["scale", "difference", "ratio_to_previous"], &rows)?;
    if ys.len() >= 2 {
        out.lines.push(format!("difference vs scale: log-log slope {:.3}", log_slope(&pb.scales, &ys)));
    }
    out.lines.push(format!("max |Im dV| {:.3e}", max_of(dv.iter().map(|z| z.im.abs()))));
    Ok(out)
}

fn husimi_svg(f: &HusimiField, title: &str) -> String {
    let m = f.grid.m;
    let nx = f.x_nodes();
    // ξ bins in increasing wavenumber order
    let mut vals = Vec::with_capacity(nx * m);
    for i in 0..nx {
        for j in 0..m {
            vals.push(f.values[i * m + (j + m / 2) % m]);
        }
    }
    let xr = (f.x_of(0)[0], f.x_of(nx - 1)[0]);
    let yr = (f.grid.wavenumber(m / 2), f.grid.wavenumber(m / 2 - 1));
    heatmap(title, nx, m, &vals, xr, yr)
}

pub fn husimi_cmd(ctx: &mut Ctx) -> Res {
    let cfg = ctx.cfg;
    let sc = &cfg.semiclassics;
    let sg = cfg.semi_grid();
    let d = sg.d;
    let c = coherent_state(&sg, sc.h, &sc.x0, &sc.xi0)?;
    let fields = queue::run(ctx.threads, &sc.times, |&t| {
        let psi = evolve_free(&sg, &c.values, t / sc.h, &vec![0.0; d]);
        husimi(&sg, sc.h, &[(1.0, &psi)], sc.stride)
    });
    let mut out = Outcome::default();
    let mut header: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
    header.extend((1..=d).map(|a| format!("xi{a}")));
    header.push("value".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut summary = Vec::new();
    for (j, (f, &t)) in fields.into_iter().zip(&sc.times).enumerate() {
        let f = f?;
        let rows: Vec<Vec<String>> = husimi_rows(&f).iter().map(|r| r.iter().map(|v| num(*v)).collect()).collect();
        ctx.run.csv(&format!("husimi_t{j}.csv"), &header, &rows)?;
        ctx.run.bytes(&format!("husimi_t{j}.bin"), &husimi_raster(&f))?;
        if d == 1 {
            ctx.run.text(&format!("husimi_t{j}.svg"), &husimi_svg(&f, &format!("Husimi density at t = {t}")))?;
        }
        let want: Vec<f64> = sc.x0.iter().zip(&sc.xi0).map(|(x, k)| x + 2.0 * k * t).collect();
        let (cx, ck) = f.centre(&want);
        let (mass, min) = (f.mass(), f.min());
        let ok = min >= 0.0 && (mass - 1.0).abs() <= HUSIMI_MASS_TOL;
        if !ok {
            out.violations.push(format!("seed={} t={t} mass={} min={}", cfg.seed, num(mass), num(min)));
        }
        out.lines.push(format!("t={t}: mass {mass:.6}, min {min:.3e}, centre x {:?}", cx));
        let mut row = vec![num(t), num(mass), num(min)];
        row.extend(cx.iter().chain(&ck).chain(&want).map(|v| num(*v)));
        row.push(b(ok));
        summary.push(row);
    }
    let mut sh = vec!["t".to_string(), "mass".into(), "min".into()];
    sh.extend((1..=d).map(|a| format!("centre_x{a}")));
    sh.extend((1..=d).map(|a| format!("centre_xi{a}")));
    sh.extend((1..=d).map(|a| format!("transport_x{a}")));
    sh.push("pass".into());
    let sh: Vec<&str> = sh.iter().map(String::as_str).collect();
    ctx.run.csv("husimi.csv", &sh, &summary)?;

    // outside-band mass growth along the coupled dynamics, one run per h
    let u0 = cfg.initial_state()?;
    let pot = Potentials::same(&cfg.potential());
    let band = cfg.energy_band();
    let amps = queue::run(ctx.threads, &cfg.sweep.h, |&h| {
        band_leak_amplitude(&u0, &pot, &cfg.solver_config(&pot, h, cfg.solver.gamma), &band)
    });
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for (a, &h) in amps.into_iter().zip(&cfg.sweep.h) {
        let a = a?;
        rows.push(vec![num(h), num(a)]);
        ys.push(a);
    }
    ctx.run.csv("band_mass.csv", &["h", "leak_amplitude"], &rows)?;
    if ys.len() >= 2 {
        out.lines.push(format!("band leak vs h: log-log slope {:.3}", log_slope(&cfg.sweep.h, &ys)));
    }
    Ok(out)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Option<Vec<f64>> {
    let i = header.iter().position(|h| h == name)?;
    Some(rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
}

/// Log-log plots for the scaling artifacts report knows about.
fn report_plot(name: &str, header: &[String], rows: &[Vec<String>]) -> Option<String> {
    let pts = |x: &[f64], y: &[f64]| x.iter().copied().zip(y.iter().copied()).collect::<Vec<_>>();
    match name {
        "truncation.csv" => {
            let (h, e, g) = (column(header, rows, "h")?, column(header, rows, "eps")?, column(header, rows, "sup_gap")?);
            let mut hs = h.clone();
            hs.dedup();
            let series = hs
                .iter()
                .map(|&hv| Series {
                    label: format!("h={hv}"),
                    points: (0..h.len()).filter(|&i| h[i] == hv).map(|i| (e[i], g[i])).collect(),
                })
                .collect::<Vec<_>>();
            Some(line_plot("truncation gap", "eps", "sup gap", &series, true))
        }
        "expansion.csv" => {
            let dl = column(header, rows, "delta")?;
            let series = ["r0", "r1", "r2"]
                .iter()
                .map(|k| {
                    Some(Series {
                        label: k.to_string(),
                        points: pts(&dl, &column(header, rows, k)?),
                    })
                })
                .collect::<Option<Vec<_>>>()?;
            Some(line_plot("expansion remainders", "delta", "remainder", &series, true))
        }
        "perturb.csv" => {
            let s = Series {
                label: "difference".into(),
                points: pts(&column(header, rows, "scale")?, &column(header, rows, "difference")?),
            };
            Some(line_plot("potential perturbation", "scale", "sup difference", &[s], true))
        }
        "band_mass.csv" => {
            let s = Series {
                label: "leak".into(),
                points: pts(&column(header, rows, "h")?, &column(header, rows, "leak_amplitude")?),
            };
            Some(line_plot("outside-band leak", "h", "amplitude", &[s], true))
        }
        _ => None,
    }
}

pub fn report(ctx: &mut Ctx, root: &Path) -> Res {
    let mut dirs: Vec<_> = match fs::read_dir(root) {
        Ok(rd) => rd.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect(),
        Err(_) => Vec::new(),
    };
    dirs.sort();
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    let mut md = String::from("| run | artifact | rows | failures | status |\n|---|---|---|---|---|\n");
    for dir in dirs {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name == "report" {
            continue;
        }
        let Ok(text) = fs::read_to_string(dir.join("manifest.toml")) else {
            continue;
        };
        let Ok(man) = text.parse::<Table>() else {
            out.violations.push(format!("run={name} unreadable manifest"));
            continue;
        };
        let get = |k: &str| man.get(k).and_then(Value::as_str).unwrap_or("").to_string();
        let status = get("status");
        if status != "ok" {
            out.violations.push(format!("run={name} status={status} seed={}", man.get("seed").map_or(String::new(), |v| v.to_string())));
        }
        let arts = man.get("artifacts").and_then(Value::as_array).cloned().unwrap_or_default();
        for a in arts {
            let Some(file) = a.get("name").and_then(Value::as_str) else { continue };
            if !file.ends_with(".csv") {
                continue;
            }
            let (header, data) = read_csv(&dir.join(file))?;
            let fails = match header.iter().position(|h| h == "pass") {
                Some(i) => data.iter().filter(|r| r[i] == "false").count(),
                None => 0,
            };
            rows.push(vec![
                name.clone(),
                file.to_string(),
                data.len().to_string(),
                fails.to_string(),
                status.clone(),
                get("config_sha256"),
            ]);
            md.push_str(&format!("| {name} | {file} | {} | {fails} | {status} |\n", data.len()));
            if let Some(svg) = report_plot(file, &header, &data) {
                ctx.run.text(&format!("{name}_{}.svg", file.trim_end_matches(".csv")), &svg)?;
            }
        }
    }
    out.lines.push(format!("{} artifacts summarized", rows.len()));
    ctx.run.csv("summary.csv", &["run", "artifact", "rows", "failures", "status", "config_sha256"], &rows)?;
    ctx.run.text("summary.md", &md)?;
    Ok(out)
}
