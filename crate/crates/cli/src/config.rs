//! Experiment configuration: TOML block tables read field by field so every
//! problem can be reported with its dotted path.

use std::fmt;

use fockcm::cm::{to_cm_slots, CMFockVector, Exponents};
use fockcm::fock::FockVector;
use fockcm::grid::{gaussian, project_band, GridSpec, C64};
use fockcm::rng;
use fockcm::semiclassics::{packet_width, EnergyBand};
use fockcm::solver::{phase_step_limit, potential_norm, Chi, Potentials, SolverConfig};
use toml::{Table, Value};

#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config-error\t{}\t{}", self.field, self.message)
    }
}

#[derive(Clone, Debug)]
pub struct GridBlock {
    pub d: usize,
    pub m: usize,
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct FockBlock {
    pub n_max: usize,
    pub band: usize,
    pub trials: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    Gaussian,
    RandomReal,
    RandomComplex,
}

impl PotentialKind {
    fn name(self) -> &'static str {
        match self {
            PotentialKind::Gaussian => "gaussian",
            PotentialKind::RandomReal => "random_real",
            PotentialKind::RandomComplex => "random_complex",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PotentialBlock {
    pub kind: PotentialKind,
    pub amplitude: f64,
    pub width: f64,
    /// Fourier cut-off of the random kinds.
    pub band: usize,
}

/// Vacuum initial data on parameter slots ξ with weights.
#[derive(Clone, Debug)]
pub struct StateBlock {
    pub xi: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct WeightBlock {
    pub alpha0: f64,
    pub alpha1: f64,
    pub k_alpha: usize,
}

#[derive(Clone, Debug)]
pub struct SolverBlock {
    pub h: f64,
    pub gamma: f64,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub eps: f64,
    pub chi: Chi,
    pub substeps: usize,
    pub oracle_substeps: usize,
    pub oracle_tol: f64,
}

#[derive(Clone, Debug)]
pub struct NormsBlock {
    pub trials: u64,
    pub cells: usize,
    pub t_window: f64,
    pub h: f64,
}

#[derive(Clone, Debug)]
pub struct IneqBlock {
    pub trials: u64,
    pub tuples: Vec<(f64, f64)>,
    pub alphas: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct McBlock {
    pub samples: usize,
    pub xs: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct PerturbBlock {
    pub amplitude: f64,
    pub band: usize,
    pub scales: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SemiBlock {
    pub m: usize,
    pub delta: f64,
    pub h: f64,
    pub stride: usize,
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub times: Vec<f64>,
    pub band: Vec<(f64, f64)>,
    pub band_width: f64,
}

#[derive(Clone, Debug)]
pub struct SweepBlock {
    pub h: Vec<f64>,
    pub eps: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub out: String,
    pub grid: GridBlock,
    pub fock: FockBlock,
    pub potential: PotentialBlock,
    pub state: StateBlock,
    pub weight: WeightBlock,
    pub solver: SolverBlock,
    pub norms: NormsBlock,
    pub inequalities: IneqBlock,
    pub mc: McBlock,
    pub perturb: PerturbBlock,
    pub semiclassics: SemiBlock,
    pub sweep: SweepBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "default".into(),
            seed: 20240,
            out: "fockcm-out".into(),
            grid: GridBlock { d: 1, m: 16, delta: 0.5 },
            fock: FockBlock {
                n_max: 2,
                band: 2,
                trials: 10,
            },
            potential: PotentialBlock {
                kind: PotentialKind::Gaussian,
                amplitude: 1.0,
                width: 1.5,
                band: 4,
            },
            state: StateBlock {
                xi: vec![vec![0.5], vec![-1.0]],
                weights: vec![0.5, 0.5],
            },
            weight: WeightBlock {
                alpha0: -1.0,
                alpha1: 1.0,
                k_alpha: 8,
            },
            solver: SolverBlock {
                h: 0.1,
                gamma: 0.05,
                dt: 0.01,
                tol: 1e-10,
                max_iter: 60,
                eps: 0.0,
                chi: Chi::Exp,
                substeps: 2,
                oracle_substeps: 8,
                oracle_tol: 1e-4,
            },
            norms: NormsBlock {
                trials: 50,
                cells: 64,
                t_window: 1.3,
                h: 0.2,
            },
            inequalities: IneqBlock {
                trials: 10,
                tuples: fockcm::checks::DEFAULT_TUPLES.to_vec(),
                alphas: (0.0, 1.0),
            },
            mc: McBlock {
                samples: 2000,
                xs: vec![0, 3, 6],
            },
            perturb: PerturbBlock {
                amplitude: 0.05,
                band: 4,
                scales: vec![1.0, 0.5, 0.25],
            },
            semiclassics: SemiBlock {
                m: 128,
                delta: 0.5,
                h: 0.1,
                stride: 2,
                x0: vec![2.0],
                xi0: vec![1.0],
                times: vec![0.0, 0.5, 1.0],
                band: vec![(0.2, 3.0)],
                band_width: 0.05,
            },
            sweep: SweepBlock {
                h: vec![0.1, 0.05],
                eps: vec![0.2, 0.1, 0.05, 0.025],
                gamma: vec![0.05, 0.025],
                delta: vec![0.01, 0.0215, 0.0464, 0.1],
            },
        }
    }
}

/// Typed field access on one block; records every problem instead of stopping.
struct Fields<'a> {
    block: &'static str,
    table: Option<&'a Table>,
    used: Vec<&'static str>,
    errs: &'a mut Vec<FieldError>,
}

impl<'a> Fields<'a> {
    fn path(&self, key: &str) -> String {
        if self.block.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.block)
        }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.push(key);
        self.table.and_then(|t| t.get(key))
    }

    fn fail<T>(&mut self, key: &str, msg: String, default: T) -> T {
        let p = self.path(key);
        self.errs.push(FieldError::new(p, msg));
        default
    }

    fn f64(&mut self, key: &'static str, default: f64) -> f64 {
        match self.raw(key) {
            None => default,
            Some(v) => match as_f64(v) {
                Some(x) => x,
                None => self.fail(key, format!("expected a number, got {}", v.type_str()), default),
            },
        }
    }

    fn uint(&mut self, key: &'static str, default: u64) -> u64 {
        match self.raw(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(v) => self.fail(key, format!("expected a non-negative integer, got {v}"), default),
        }
    }

    fn string(&mut self, key: &'static str, default: &str) -> String {
        match self.raw(key) {
            None => default.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => self.fail(key, format!("expected a string, got {}", v.type_str()), default.to_string()),
        }
    }

    fn f64_list(&mut self, key: &'static str, default: &[f64]) -> Vec<f64> {
        match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(a)) => match a.iter().map(as_f64).collect::<Option<Vec<_>>>() {
                Some(v) => v,
                None => self.fail(key, "expected an array of numbers".into(), default.to_vec()),
            },
            Some(v) => self.fail(key, format!("expected an array, got {}", v.type_str()), default.to_vec()),
        }
    }

    fn uint_list(&mut self, key: &'static str, default: &[usize]) -> Vec<usize> {
        match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(a)) => {
                let v: Option<Vec<usize>> = a
                    .iter()
                    .map(|x| match x {
                        Value::Integer(i) if *i >= 0 => Some(*i as usize),
                        _ => None,
                    })
                    .collect();
                match v {
                    Some(v) => v,
                    None => self.fail(key, "expected an array of non-negative integers".into(), default.to_vec()),
                }
            }
            Some(v) => self.fail(key, format!("expected an array, got {}", v.type_str()), default.to_vec()),
        }
    }

    fn nested(&mut self, key: &'static str, default: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(a)) => {
                let v: Option<Vec<Vec<f64>>> = a
                    .iter()
                    .map(|row| match row {
                        Value::Array(r) => r.iter().map(as_f64).collect(),
                        _ => None,
                    })
                    .collect();
                match v {
                    Some(v) => v,
                    None => self.fail(key, "expected an array of number arrays".into(), default.to_vec()),
                }
            }
            Some(v) => self.fail(key, format!("expected an array, got {}", v.type_str()), default.to_vec()),
        }
    }

    fn pairs(&mut self, key: &'static str, default: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let d: Vec<Vec<f64>> = default.iter().map(|&(a, b)| vec![a, b]).collect();
        let rows = self.nested(key, &d);
        if rows.iter().any(|r| r.len() != 2) {
            return self.fail(key, "every entry must be a pair [a, b]".into(), default.to_vec());
        }
        rows.into_iter().map(|r| (r[0], r[1])).collect()
    }

    fn finish(self) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.used.contains(&k.as_str()) && !(self.block.is_empty() && BLOCKS.contains(&k.as_str())) {
                    let p = if self.block.is_empty() {
                        k.clone()
                    } else {
                        format!("{}.{k}", self.block)
                    };
                    self.errs.push(FieldError::new(p, "unknown key"));
                }
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

const BLOCKS: [&str; 12] = [
    "grid",
    "fock",
    "potential",
    "state",
    "weight",
    "solver",
    "norms",
    "inequalities",
    "mc",
    "perturb",
    "semiclassics",
    "sweep",
];

fn block<'a>(root: &'a Table, name: &'static str, errs: &'a mut Vec<FieldError>) -> Fields<'a> {
    let table = match root.get(name) {
        None => None,
        Some(Value::Table(t)) => Some(t),
        Some(v) => {
            errs.push(FieldError::new(name, format!("expected a table, got {}", v.type_str())));
            None
        }
    };
    Fields {
        block: name,
        table,
        used: Vec::new(),
        errs,
    }
}

impl ExperimentConfig {
    /// Parse and validate; on failure every field-level problem is returned.
    pub fn parse(text: &str) -> Result<Self, Vec<FieldError>> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| {
            let msg = e.message().replace('\n', " ");
            vec![FieldError::new("<syntax>", msg)]
        })?;
        let dft = Self::default();
        let mut errs = Vec::new();

        let mut f = Fields {
            block: "",
            table: Some(&root),
            used: Vec::new(),
            errs: &mut errs,
        };
        let experiment = f.string("experiment", &dft.experiment);
        let seed = f.uint("seed", dft.seed);
        let out = f.string("out", &dft.out);
        f.finish();

        let mut f = block(&root, "grid", &mut errs);
        let grid = GridBlock {
            d: f.uint("d", dft.grid.d as u64) as usize,
            m: f.uint("m", dft.grid.m as u64) as usize,
            delta: f.f64("delta", dft.grid.delta),
        };
        f.finish();

        let mut f = block(&root, "fock", &mut errs);
        let fock = FockBlock {
            n_max: f.uint("n_max", dft.fock.n_max as u64) as usize,
            band: f.uint("band", dft.fock.band as u64) as usize,
            trials: f.uint("trials", dft.fock.trials),
        };
        f.finish();

        let mut f = block(&root, "potential", &mut errs);
        let kind_s = f.string("kind", dft.potential.kind.name());
        let kind = match kind_s.as_str() {
            "gaussian" => PotentialKind::Gaussian,
            "random_real" => PotentialKind::RandomReal,
            "random_complex" => PotentialKind::RandomComplex,
            other => f.fail(
                "kind",
                format!("unknown kind {other:?} (gaussian, random_real, random_complex)"),
                dft.potential.kind,
            ),
        };
        let potential = PotentialBlock {
            kind,
            amplitude: f.f64("amplitude", dft.potential.amplitude),
            width: f.f64("width", dft.potential.width),
            band: f.uint("band", dft.potential.band as u64) as usize,
        };
        f.finish();

        let mut f = block(&root, "state", &mut errs);
        let state = StateBlock {
            xi: f.nested("xi", &dft.state.xi),
            weights: f.f64_list("weights", &dft.state.weights),
        };
        f.finish();

        let mut f = block(&root, "weight", &mut errs);
        let weight = WeightBlock {
            alpha0: f.f64("alpha0", dft.weight.alpha0),
            alpha1: f.f64("alpha1", dft.weight.alpha1),
            k_alpha: f.uint("k_alpha", dft.weight.k_alpha as u64) as usize,
        };
        f.finish();

        let mut f = block(&root, "solver", &mut errs);
        let s = &dft.solver;
        let h = f.f64("h", s.h);
        let gamma = f.f64("gamma", s.gamma);
        let dt = f.f64("dt", s.dt);
        let tol = f.f64("tol", s.tol);
        let max_iter = f.uint("max_iter", s.max_iter as u64) as usize;
        let eps = f.f64("eps", s.eps);
        let chi = match f.string("chi", "exp").as_str() {
            "exp" => Chi::Exp,
            "hard" => Chi::Hard,
            other => f.fail("chi", format!("unknown cut-off {other:?} (exp, hard)"), s.chi),
        };
        let solver = SolverBlock {
            h,
            gamma,
            dt,
            tol,
            max_iter,
            eps,
            chi,
            substeps: f.uint("substeps", s.substeps as u64) as usize,
            oracle_substeps: f.uint("oracle_substeps", s.oracle_substeps as u64) as usize,
            oracle_tol: f.f64("oracle_tol", s.oracle_tol),
        };
        f.finish();

        let mut f = block(&root, "norms", &mut errs);
        let norms = NormsBlock {
            trials: f.uint("trials", dft.norms.trials),
            cells: f.uint("cells", dft.norms.cells as u64) as usize,
            t_window: f.f64("t_window", dft.norms.t_window),
            h: f.f64("h", dft.norms.h),
        };
        f.finish();

        let mut f = block(&root, "inequalities", &mut errs);
        let trials = f.uint("trials", dft.inequalities.trials);
        let tuples = f.pairs("tuples", &dft.inequalities.tuples);
        let a = f.f64_list("alphas", &[dft.inequalities.alphas.0, dft.inequalities.alphas.1]);
        let alphas = if a.len() == 2 {
            (a[0], a[1])
        } else {
            f.fail("alphas", "expected two numbers [alpha, alpha']".into(), dft.inequalities.alphas)
        };
        let inequalities = IneqBlock { trials, tuples, alphas };
        f.finish();

        let mut f = block(&root, "mc", &mut errs);
        let mc = McBlock {
            samples: f.uint("samples", dft.mc.samples as u64) as usize,
            xs: f.uint_list("xs", &dft.mc.xs),
        };
        f.finish();

        let mut f = block(&root, "perturb", &mut errs);
        let perturb = PerturbBlock {
            amplitude: f.f64("amplitude", dft.perturb.amplitude),
            band: f.uint("band", dft.perturb.band as u64) as usize,
            scales: f.f64_list("scales", &dft.perturb.scales),
        };
        f.finish();

        let mut f = block(&root, "semiclassics", &mut errs);
        let sc = &dft.semiclassics;
        let semiclassics = SemiBlock {
            m: f.uint("m", sc.m as u64) as usize,
            delta: f.f64("delta", sc.delta),
            h: f.f64("h", sc.h),
            stride: f.uint("stride", sc.stride as u64) as usize,
            x0: f.f64_list("x0", &sc.x0),
            xi0: f.f64_list("xi0", &sc.xi0),
            times: f.f64_list("times", &sc.times),
            band: f.pairs("band", &sc.band),
            band_width: f.f64("band_width", sc.band_width),
        };
        f.finish();

        let mut f = block(&root, "sweep", &mut errs);
        let sweep = SweepBlock {
            h: f.f64_list("h", &dft.sweep.h),
            eps: f.f64_list("eps", &dft.sweep.eps),
            gamma: f.f64_list("gamma", &dft.sweep.gamma),
            delta: f.f64_list("delta", &dft.sweep.delta),
        };
        f.finish();

        let cfg = Self {
            experiment,
            seed,
            out,
            grid,
            fock,
            potential,
            state,
            weight,
            solver,
            norms,
            inequalities,
            mc,
            perturb,
            semiclassics,
            sweep,
        };
        if errs.is_empty() {
            errs = cfg.validate();
        }
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(errs)
        }
    }

    /// Module invariants of every block.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut e = Vec::new();
        let mut need = |ok: bool, field: &str, msg: String| {
            if !ok {
                e.push(FieldError::new(field, msg));
            }
        };
        let g = &self.grid;
        need(self.experiment.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !self.experiment.is_empty(),
            "experiment", "use a non-empty id of letters, digits, '-', '_' or '.'".into());
        need(self.seed <= i64::MAX as u64, "seed", format!("must be <= {}", i64::MAX));
        need(!self.out.is_empty(), "out", "output directory must be non-empty".into());
        need((1..=3).contains(&g.d), "grid.d", format!("must be 1, 2 or 3, got {}", g.d));
        need(g.m >= 4 && g.m.is_power_of_two(), "grid.m", format!("must be a power of two >= 4, got {}", g.m));
        need(g.delta > 0.0 && g.delta.is_finite(), "grid.delta", format!("must be positive, got {}", g.delta));
        let grid_ok = GridSpec::new(g.d, g.m, g.delta).is_ok();

        let fk = &self.fock;
        need((1..=4).contains(&fk.n_max), "fock.n_max", format!("must be in 1..=4, got {}", fk.n_max));
        need(fk.band >= 1, "fock.band", "must be >= 1".into());
        need(
            fk.n_max * fk.band < g.m / 2,
            "fock.band",
            format!("n_max * band = {} must be < grid.m / 2 = {} for an exact CM frame", fk.n_max * fk.band, g.m / 2),
        );
        need(fk.trials >= 1, "fock.trials", "must be >= 1".into());

        let p = &self.potential;
        need(p.amplitude.is_finite(), "potential.amplitude", "must be finite".into());
        need(p.width > 0.0 && p.width.is_finite(), "potential.width", format!("must be positive, got {}", p.width));
        need(p.band < g.m / 2, "potential.band", format!("must be < grid.m / 2 = {}", g.m / 2));

        let st = &self.state;
        need(!st.xi.is_empty(), "state.xi", "needs at least one slot".into());
        for (i, xi) in st.xi.iter().enumerate() {
            need(xi.len() == g.d, &format!("state.xi[{i}]"), format!("needs {} components, got {}", g.d, xi.len()));
        }
        need(st.weights.len() == st.xi.len(), "state.weights", format!("needs {} entries, one per slot", st.xi.len()));
        need(st.weights.iter().all(|w| *w > 0.0), "state.weights", "all weights must be positive".into());

        let w = &self.weight;
        need(w.alpha0 < w.alpha1, "weight.alpha1", format!("must exceed alpha0 = {}", w.alpha0));
        let worst = w.alpha0.abs().max(w.alpha1.abs()) * fk.n_max.max(2) as f64;
        need(worst <= 700.0, "weight.alpha1", format!("|alpha| * N_max = {worst} overflows the number weight"));
        need(w.k_alpha >= 1, "weight.k_alpha", "must be >= 1".into());

        let s = &self.solver;
        need(s.h > 0.0, "solver.h", format!("must be positive, got {}", s.h));
        need(s.gamma > 0.0, "solver.gamma", format!("must be positive, got {}", s.gamma));
        need(s.tol > 0.0, "solver.tol", "must be positive".into());
        need(s.max_iter >= 1, "solver.max_iter", "must be >= 1".into());
        need(s.eps >= 0.0, "solver.eps", "must be >= 0".into());
        need(s.substeps >= 1, "solver.substeps", "must be >= 1".into());
        need(s.oracle_substeps >= 1, "solver.oracle_substeps", "must be >= 1".into());
        need(s.oracle_tol > 0.0, "solver.oracle_tol", "must be positive".into());
        if grid_ok && st.xi.iter().all(|x| x.len() == g.d) && st.weights.len() == st.xi.len() {
            if let Ok(u0) = self.initial_state() {
                let limit = phase_step_limit(&u0);
                need(
                    s.dt > 0.0 && s.dt <= limit,
                    "solver.dt",
                    format!("{} does not resolve the fastest free phase (need <= {limit:.4e})", s.dt),
                );
            }
        }

        let n = &self.norms;
        need(n.trials >= 1, "norms.trials", "must be >= 1".into());
        need(n.cells >= 4, "norms.cells", "must be >= 4".into());
        need(n.t_window > 0.0, "norms.t_window", "must be positive".into());
        need(n.h > 0.0, "norms.h", "must be positive".into());

        let iq = &self.inequalities;
        need(iq.trials >= 1, "inequalities.trials", "must be >= 1".into());
        need(!iq.tuples.is_empty(), "inequalities.tuples", "needs at least one (q', p') pair".into());
        for (i, &(qp, pp)) in iq.tuples.iter().enumerate() {
            if let Err(err) = Exponents::new(qp, pp) {
                need(false, &format!("inequalities.tuples[{i}]"), err.to_string());
            }
        }
        need(iq.alphas.0 < iq.alphas.1, "inequalities.alphas", "needs alpha < alpha'".into());

        let mc = &self.mc;
        need(mc.samples >= 2, "mc.samples", "must be >= 2".into());
        need(!mc.xs.is_empty(), "mc.xs", "needs at least one grid index".into());
        let pts = g.m.checked_pow(g.d as u32).unwrap_or(usize::MAX);
        for (i, x) in mc.xs.iter().enumerate() {
            need(*x < pts, &format!("mc.xs[{i}]"), format!("index {x} outside the {pts} grid points"));
        }

        let pb = &self.perturb;
        need(pb.amplitude > 0.0, "perturb.amplitude", "must be positive".into());
        need(pb.band < g.m / 2, "perturb.band", format!("must be < grid.m / 2 = {}", g.m / 2));
        need(!pb.scales.is_empty() && pb.scales.iter().all(|s| *s > 0.0), "perturb.scales", "needs positive scales".into());

        let sc = &self.semiclassics;
        need(sc.m >= 4 && sc.m.is_power_of_two(), "semiclassics.m", format!("must be a power of two >= 4, got {}", sc.m));
        need(sc.delta > 0.0, "semiclassics.delta", "must be positive".into());
        need(sc.stride >= 1 && sc.m % sc.stride.max(1) == 0, "semiclassics.stride", format!("must divide semiclassics.m = {}", sc.m));
        need(sc.x0.len() == g.d, "semiclassics.x0", format!("needs {} components", g.d));
        need(sc.xi0.len() == g.d, "semiclassics.xi0", format!("needs {} components", g.d));
        need(!sc.times.is_empty() && sc.times.iter().all(|t| *t >= 0.0), "semiclassics.times", "needs non-negative times".into());
        if let Ok(sg) = GridSpec::new(g.d.clamp(1, 3), sc.m, sc.delta) {
            if let Err(err) = packet_width(&sg, sc.h) {
                need(false, "semiclassics.h", err.to_string());
            }
        }
        if let Err(err) = EnergyBand::new(sc.band.clone(), sc.band_width) {
            need(false, "semiclassics.band", err.to_string());
        }

        let sw = &self.sweep;
        for (name, list) in [("sweep.h", &sw.h), ("sweep.eps", &sw.eps), ("sweep.gamma", &sw.gamma), ("sweep.delta", &sw.delta)] {
            need(!list.is_empty() && list.iter().all(|x| *x > 0.0 && x.is_finite()), name, "needs positive finite values".into());
        }
        e
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.grid.d, self.grid.m, self.grid.delta).expect("validated grid")
    }

    pub fn semi_grid(&self) -> GridSpec {
        GridSpec::new(self.grid.d, self.semiclassics.m, self.semiclassics.delta).expect("validated grid")
    }

    pub fn potential(&self) -> Vec<C64> {
        let g = self.grid();
        let p = &self.potential;
        let mut r = rng::stream(self.seed, 9);
        let raw = match p.kind {
            PotentialKind::Gaussian => gaussian(&g, &vec![g.length() / 2.0; g.d], p.width, &vec![0.0; g.d]),
            PotentialKind::RandomReal => {
                let v = project_band(&g, &rng::complex_vec(&mut r, g.points()), p.band);
                v.iter().map(|z| C64::new(z.re, 0.0)).collect()
            }
            PotentialKind::RandomComplex => project_band(&g, &rng::complex_vec(&mut r, g.points()), p.band),
        };
        raw.iter().map(|z| z * p.amplitude).collect()
    }

    pub fn initial_state(&self) -> fockcm::Result<CMFockVector> {
        let g = GridSpec::new(self.grid.d, self.grid.m, self.grid.delta)?;
        let n_max = self.fock.n_max.max(1);
        let vac = FockVector::vacuum(&g, n_max, C64::new(1.0, 0.0));
        let slots: Vec<(Vec<f64>, f64, &FockVector)> = self
            .state
            .xi
            .iter()
            .zip(&self.state.weights)
            .map(|(x, w)| (x.clone(), *w, &vac))
            .collect();
        to_cm_slots(&slots, fockcm::cm::default_refine(n_max))
    }

    pub fn solver_config(&self, pot: &Potentials, h: f64, gamma: f64) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            h,
            gamma,
            alpha0: self.weight.alpha0,
            alpha1: self.weight.alpha1,
            cv: potential_norm(&self.grid(), &pot.v_create),
            dt: s.dt,
            tol: s.tol,
            max_iter: s.max_iter,
            eps: s.eps,
            chi: s.chi,
            k_alpha: self.weight.k_alpha,
            substeps: s.substeps,
        }
    }

    pub fn energy_band(&self) -> EnergyBand {
        EnergyBand::new(self.semiclassics.band.clone(), self.semiclassics.band_width).expect("validated band")
    }

    /// Canonical TOML of the resolved configuration; the config hash is taken over this text.
    pub fn canonical(&self) -> String {
        let mut root = Table::new();
        root.insert("experiment".into(), Value::String(self.experiment.clone()));
        root.insert("seed".into(), Value::Integer(self.seed as i64));
        root.insert("out".into(), Value::String(self.out.clone()));
        let fl = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
        let pairs = |v: &[(f64, f64)]| Value::Array(v.iter().map(|&(a, b)| fl(&[a, b])).collect());
        let int = |x: usize| Value::Integer(x as i64);
        let mut t = |name: &str, items: Vec<(&str, Value)>| {
            root.insert(name.into(), Value::Table(items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()));
        };
        let g = &self.grid;
        t("grid", vec![("d", int(g.d)), ("m", int(g.m)), ("delta", Value::Float(g.delta))]);
        let f = &self.fock;
        t("fock", vec![("n_max", int(f.n_max)), ("band", int(f.band)), ("trials", int(f.trials as usize))]);
        let p = &self.potential;
        t(
            "potential",
            vec![
                ("kind", Value::String(p.kind.name().into())),
                ("amplitude", Value::Float(p.amplitude)),
                ("width", Value::Float(p.width)),
                ("band", int(p.band)),
            ],
        );
        t(
            "state",
            vec![
                ("xi", Value::Array(self.state.xi.iter().map(|x| fl(x)).collect())),
                ("weights", fl(&self.state.weights)),
            ],
        );
        let w = &self.weight;
        t(
            "weight",
            vec![("alpha0", Value::Float(w.alpha0)), ("alpha1", Value::Float(w.alpha1)), ("k_alpha", int(w.k_alpha))],
        );
        let s = &self.solver;
        t(
            "solver",
            vec![
                ("h", Value::Float(s.h)),
                ("gamma", Value::Float(s.gamma)),
                ("dt", Value::Float(s.dt)),
                ("tol", Value::Float(s.tol)),
                ("max_iter", int(s.max_iter)),
                ("eps", Value::Float(s.eps)),
                ("chi", Value::String(if s.chi == Chi::Exp { "exp" } else { "hard" }.into())),
                ("substeps", int(s.substeps)),
                ("oracle_substeps", int(s.oracle_substeps)),
                ("oracle_tol", Value::Float(s.oracle_tol)),
            ],
        );
        let n = &self.norms;
        t(
            "norms",
            vec![
                ("trials", int(n.trials as usize)),
                ("cells", int(n.cells)),
                ("t_window", Value::Float(n.t_window)),
                ("h", Value::Float(n.h)),
            ],
        );
        let iq = &self.inequalities;
        t(
            "inequalities",
            vec![
                ("trials", int(iq.trials as usize)),
                ("tuples", pairs(&iq.tuples)),
                ("alphas", fl(&[iq.alphas.0, iq.alphas.1])),
            ],
        );
        t(
            "mc",
            vec![
                ("samples", int(self.mc.samples)),
                ("xs", Value::Array(self.mc.xs.iter().map(|x| int(*x)).collect())),
            ],
        );
        let pb = &self.perturb;
        t(
            "perturb",
            vec![("amplitude", Value::Float(pb.amplitude)), ("band", int(pb.band)), ("scales", fl(&pb.scales))],
        );
        let sc = &self.semiclassics;
        t(
            "semiclassics",
            vec![
                ("m", int(sc.m)),
                ("delta", Value::Float(sc.delta)),
                ("h", Value::Float(sc.h)),
                ("stride", int(sc.stride)),
                ("x0", fl(&sc.x0)),
                ("xi0", fl(&sc.xi0)),
                ("times", fl(&sc.times)),
                ("band", pairs(&sc.band)),
                ("band_width", Value::Float(sc.band_width)),
            ],
        );
        let sw = &self.sweep;
        t(
            "sweep",
            vec![("h", fl(&sw.h)), ("eps", fl(&sw.eps)), ("gamma", fl(&sw.gamma)), ("delta", fl(&sw.delta))],
        );
        root.to_string()
    }
}
