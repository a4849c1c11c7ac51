pub mod certificate;
pub mod envelope;
pub mod linalg;
pub mod lyapunov;

pub use certificate::{
    certify_norm_series, certify_practical_stability, fit_rho_envelope, mixed_rho, rho_series,
    stability_report, theorem31_bound_check, theorem31_constants, BoundCheck,
    PracticalStabilityEstimate, StabilityReport,
};
pub use envelope::{fit_envelope, EnvelopeOutcome, KlFit, NormSeries};
pub use linalg::{eigenvalues, eigenvalues_qr, matrix_exp, pseudo_inverse};
pub use lyapunov::{
    alpha_bounds, build_delay_matrix, build_from_injection, lyapunov_value, solve_lyapunov,
    DelayMatrix, LyapunovSolution,
};
