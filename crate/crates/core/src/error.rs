use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing required configuration key `{0}`")]
    MissingKey(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("cannot parse value `{value}` for key `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error(
        "particle {particle} left the momentum domain at t = {time_ps} ps \
         (k = ({kx}, {ky}) nm^-1)"
    )]
    DomainEscape {
        particle: usize,
        time_ps: f64,
        kx: f64,
        ky: f64,
    },

    #[error("grid rebase at t = {time_ps} ps would push occupied cells outside the array")]
    RebaseEscape { time_ps: f64 },

    #[error("initial occupancy is empty after rounding; target particle count is too small for the grid")]
    EmptyInitialOccupancy,

    #[error("emission requested below threshold (energy {energy} eV, phonon {phonon} eV)")]
    EmissionBelowThreshold { energy: f64, phonon: f64 },

    #[error("sampled partner estimator needs at least two particles, found {0}")]
    TooFewParticles(usize),

    #[error("analysis window [{lo}, {hi}] ps is invalid: {reason}")]
    Window { lo: f64, hi: f64, reason: String },

    #[error("harmonic design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("malformed {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
