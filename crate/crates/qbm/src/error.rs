use thiserror::Error;

/// Every failure the library can report. Each variant names the operation
/// that failed so the CLI can map it to an exit code and a useful message.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QbmError {
    #[error("{op}: domain error: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("{op}: overdamped parameters (omega_r = {omega_r} <= gamma/2 = {half_gamma})")]
    Overdamped {
        op: &'static str,
        omega_r: f64,
        half_gamma: f64,
    },

    #[error("{op}: unstable parameters (gamma*lambda = {gamma_lambda} >= omega^2 = {omega_sq})")]
    Instability {
        op: &'static str,
        gamma_lambda: f64,
        omega_sq: f64,
    },

    #[error("{op}: pole of the function at z = {re} + {im}i")]
    Pole { op: &'static str, re: f64, im: f64 },

    #[error("{op}: Matsubara resonance at l = {l} (lambda/2piT = {a})")]
    Resonance { op: &'static str, l: u64, a: f64 },

    #[error("{op}: series did not converge within {max_terms} terms")]
    NonConvergence { op: &'static str, max_terms: usize },

    #[error("{op}: quadrature failed to reach tolerance (estimate {estimate}, error {error})")]
    QuadratureFailure {
        op: &'static str,
        estimate: f64,
        error: f64,
    },

    #[error("{op}: root finding failed (residual {residual})")]
    RootFindingFailure { op: &'static str, residual: f64 },

    #[error("{op}: integration step failed at t = {t}")]
    StepFailure { op: &'static str, t: f64 },

    #[error("{op}: unphysical initial state (uncertainty product {product} < 1/4)")]
    UnphysicalInit { op: &'static str, product: f64 },

    #[error("{op}: memory window {window} too short (needs >= {required})")]
    MemoryWindowTooShort {
        op: &'static str,
        window: f64,
        required: f64,
    },

    #[error("{op}: did not converge in t_eval (change {change} > tolerance {tol})")]
    Convergence {
        op: &'static str,
        change: f64,
        tol: f64,
    },

    #[error("{op}: horizon {horizon} exceeds half the recurrence time {t_rec}")]
    Resolution {
        op: &'static str,
        horizon: f64,
        t_rec: f64,
    },

    #[error("{op}: eigen-decomposition failed: {msg}")]
    DiagonalizationFailure { op: &'static str, msg: String },

    #[error("{op}: averaging window [{start}, {end}] is invalid: {msg}")]
    Window {
        op: &'static str,
        start: f64,
        end: f64,
        msg: String,
    },
}

impl QbmError {
    pub fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        QbmError::Domain {
            op,
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            QbmError::Domain { .. }
                | QbmError::Overdamped { .. }
                | QbmError::Instability { .. }
                | QbmError::UnphysicalInit { .. }
                | QbmError::MemoryWindowTooShort { .. }
                | QbmError::Resolution { .. }
                | QbmError::Window { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, QbmError>;
