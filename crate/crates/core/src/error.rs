use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expected {expected_zero} zero and {expected_pi} pi modes, found {found_zero} and {found_pi}")]
    WrongDegeneracy {
        expected_zero: usize,
        expected_pi: usize,
        found_zero: usize,
        found_pi: usize,
    },

    #[error("edge-mode gauge is ambiguous: best overlap {0:.3} < 0.5")]
    GaugeAmbiguity(f64),

    #[error("gap closed near k = {k:.5} (|det| = {det:.2e})")]
    GapClosed { k: f64, det: f64 },

    #[error("winding is not an integer (residual {0:.2e}); grid too coarse")]
    NonIntegerResult(f64),

    #[error("parameters are not homogeneous")]
    OverridesPresent,

    #[error("unknown schedule `{0}`")]
    UnknownName(String),

    #[error("step `{name}` has odd duration {duration}")]
    OddDuration { name: String, duration: usize },

    #[error("schedule is not closed (mismatch {0:.2e})")]
    NotClosed(f64),

    #[error("leakage {0:.2e} exceeds threshold")]
    LeakageTooLarge(f64),

    #[error("rotation angle is {0:.2e} away from a multiple of pi/4")]
    OffLattice(f64),

    #[error("tracked subspace dimension changed from {from} to {to}")]
    SubspaceDimensionChanged { from: usize, to: usize },

    #[error("forced outcome has probability {0:.2e}")]
    ZeroProbabilityBranch(f64),

    #[error("incompatible modes: {0}")]
    IncompatibleModes(String),

    #[error("measurement would leave the Gaussian manifold: {0}")]
    NonGaussian(String),

    #[error("symmetry-breaking terms closed the edge-mode gap")]
    GapClosedByBreaking,

    #[error("unsupported register width {0}")]
    UnsupportedWidth(usize),

    #[error("Fock space with {0} modes exceeds the 8-mode limit")]
    TooLarge(usize),
}

impl Error {
    /// True for errors caused by bad user input rather than a failed numerical contract.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::OverridesPresent
                | Error::UnknownName(_)
                | Error::OddDuration { .. }
                | Error::NotClosed(_)
                | Error::UnsupportedWidth(_)
                | Error::TooLarge(_)
                | Error::IncompatibleModes(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
