/// Numerical tolerances shared across modules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed deviation of `‖q‖` from 1 before a quaternion log is refused.
    pub unit_norm: f64,
    /// Vector parts shorter than this are treated as zero.
    pub zero_vector: f64,
    /// Largest imaginary residue of an inverse FFT, relative to the input norm.
    pub riesz_imag_rel: f64,
    /// Pyramid coefficients below this fraction of the level's peak amplitude
    /// carry no usable phase.
    pub phase_mask_rel: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        unit_norm: 1e-9,
        zero_vector: 1e-12,
        riesz_imag_rel: 1e-8,
        phase_mask_rel: 1e-4,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
