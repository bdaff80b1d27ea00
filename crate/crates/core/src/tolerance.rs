//! Numerical tolerances shared by every module and by the test suites.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed deviation of a state norm from one.
    pub norm: f64,
    /// Allowed entry-wise deviation of `U†U` from the identity (and of `H` from `H†`).
    pub unitarity: f64,
    /// Exact-comparison tolerance for algebraic identities.
    pub comparison: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    norm: 1e-9,
    unitarity: 1e-10,
    comparison: 1e-12,
};

impl Default for Tolerances {
    fn default() -> Self {
        TOLERANCES
    }
}
