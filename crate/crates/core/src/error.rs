use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("number weight overflow: |alpha|*N_max = {0} exceeds 700")]
    WeightOverflow(f64),
    #[error("complex potential passed where a real one is required")]
    ComplexPotential,
    #[error("relative lattice refinement {refine} is not divisible by sector {n}")]
    Refinement { refine: usize, n: usize },
    #[error("exponents violate 1 <= q' <= p' <= 2: q'={qp}, p'={pp}")]
    Exponents { qp: f64, pp: f64 },
    #[error("time {t} is outside the no-wrap window |t| <= {t_wrap}")]
    WrapWindow { t: f64, t_wrap: f64 },
    #[error("Strichartz endpoint unavailable for d = {0} (sigma <= 1)")]
    EndpointUnavailable(usize),
    #[error("empty time window")]
    EmptyWindow,
    #[error("chaos order {0} unsupported (maximum 2)")]
    ChaosOrder(usize),
    #[error("Picard iteration diverged: ratio {ratio:.4} >= 1 for 3 consecutive iterates")]
    Divergence { ratio: f64 },
    #[error("contraction probe ratio {ratio:.4} >= 0.9; reduce gamma")]
    GammaTooLarge { ratio: f64 },
    #[error("coherent state width {sigma} outside [{lo}, {hi}]")]
    Width { sigma: f64, lo: f64, hi: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
