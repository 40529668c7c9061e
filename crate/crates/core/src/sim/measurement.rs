use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::CVector;
use crate::signature::Placement;

/// PMU total vector error bound (fraction).
pub const TVE_BOUND: f64 = 0.0005;
/// Largest PT bias magnitude, as a fraction of `U_N`.
pub const PT_BIAS_MAX: f64 = 0.003;
/// Probability mass within three standard deviations of a 1-D Gaussian.
pub const THREE_SIGMA_COVERAGE: f64 = 0.997_300_203_936_739_8;

/// Radius, in per-axis standard deviations, that a circular complex
/// Gaussian stays within with [`THREE_SIGMA_COVERAGE`] probability.
pub fn radial_three_sigma() -> f64 {
    (-2.0 * (1.0 - THREE_SIGMA_COVERAGE).ln()).sqrt()
}

/// PMU noise plus a per-bus constant PT bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    tve_bound: f64,
    bias: Vec<Complex64>,
}

impl MeasurementModel {
    pub fn new(tve_bound: f64, bias: Vec<Complex64>) -> Self {
        MeasurementModel { tve_bound, bias }
    }

    pub fn noiseless(num_buses: usize) -> Self {
        Self::new(0.0, vec![Complex64::new(0.0, 0.0); num_buses])
    }

    /// Draws the per-bus biases: magnitude uniform in `[0, bias_max * u_n]`,
    /// phase uniform in `[0, 2 pi)`.
    pub fn draw<R: Rng + ?Sized>(num_buses: usize, tve_bound: f64, bias_max: f64, u_n: f64, rng: &mut R) -> Self {
        let bias = (0..num_buses)
            .map(|_| {
                let m = rng.random::<f64>() * bias_max * u_n;
                let phi = rng.random::<f64>() * TAU;
                Complex64::from_polar(m, phi)
            })
            .collect();
        Self::new(tve_bound, bias)
    }

    pub fn tve_bound(&self) -> f64 {
        self.tve_bound
    }

    pub fn bias(&self) -> &[Complex64] {
        &self.bias
    }

    /// Per-axis noise standard deviation for a phasor of `magnitude`, so
    /// that the TVE bound is the three-sigma radius of the error.
    pub fn axis_sd(&self, magnitude: f64) -> f64 {
        self.tve_bound * magnitude / radial_three_sigma()
    }

    /// Measures every bus: `y = u + e + b`. Two normal draws per bus, always.
    pub fn measure_all<R: Rng + ?Sized>(&self, u: &CVector, rng: &mut R) -> Vec<Complex64> {
        u.iter()
            .zip(&self.bias)
            .map(|(u, b)| {
                let sd = self.axis_sd(u.norm());
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                u + Complex64::new(sd * re, sd * im) + b
            })
            .collect()
    }
}

/// `y = I_P (u + e + b)`.
pub fn measure<R: Rng + ?Sized>(
    u: &CVector,
    placement: &Placement,
    model: &MeasurementModel,
    rng: &mut R,
) -> Vec<Complex64> {
    placement.select(&model.measure_all(u, rng))
}
