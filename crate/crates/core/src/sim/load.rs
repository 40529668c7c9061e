use rand::Rng;
use rand_distr::StandardNormal;

use crate::grid::Grid;
use crate::linalg::CVector;
use num_complex::Complex64;

/// Random-walk active loads at constant power factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadModel {
    /// Active power per bus (kW), internal bus order; slack entry unused.
    p: Vec<f64>,
    /// `q / p` per bus.
    gamma: Vec<f64>,
    /// Increment standard deviation per bus (kW).
    sd: Vec<f64>,
    clamp: bool,
    s_base_kva: f64,
}

impl LoadModel {
    /// Nominal loads of `grid`; each bus's increment SD is `relative_sd`
    /// times its nominal active power.
    pub fn nominal(grid: &Grid, relative_sd: f64) -> Self {
        let buses = grid.buses();
        let p: Vec<f64> = buses.iter().map(|b| if b.is_slack { 0.0 } else { b.p_kw }).collect();
        let gamma = buses
            .iter()
            .map(|b| {
                if b.is_slack || b.p_kw == 0.0 {
                    0.0
                } else {
                    b.q_kvar / b.p_kw
                }
            })
            .collect();
        let sd = p.iter().map(|p| relative_sd.max(0.0) * p.abs()).collect();
        LoadModel {
            p,
            gamma,
            sd,
            clamp: false,
            s_base_kva: grid.base().power_kva(),
        }
    }

    /// Clamp active powers at zero after each step.
    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> Vec<f64> {
        self.p.iter().zip(&self.gamma).map(|(p, g)| p * g).collect()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn increment_sd(&self) -> &[f64] {
        &self.sd
    }

    /// `p(t+1) = p(t) + n_p(t)`; one standard normal draw per bus, always.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (p, sd) in self.p.iter_mut().zip(&self.sd) {
            let z: f64 = rng.sample(StandardNormal);
            *p += sd * z;
            if self.clamp && *p < 0.0 {
                *p = 0.0;
            }
        }
    }

    /// Per-unit injections (loads negative).
    pub fn injection(&self) -> CVector {
        CVector::from_iterator(
            self.p.len(),
            self.p
                .iter()
                .zip(&self.gamma)
                .map(|(p, g)| -Complex64::new(*p, p * g) / self.s_base_kva),
        )
    }
}

/// One step of the load random walk: returns `(p(t+1), q(t+1))`.
pub fn load_step<R: Rng + ?Sized>(model: &mut LoadModel, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    model.step(rng);
    (model.p().to_vec(), model.q())
}
