//! Risk weighting from the alignment of velocity with the distance gradient.
//!
//! `β` is the cosine between the velocity `v` and the ESDF gradient `∇c`.
//! Flying toward an obstacle gives `β < 0`; the sigmoid `η(β) = 2 / (1 + e^{αβ})`
//! then exceeds 1 and scales up the speed penalty near obstacles.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EasaParams {
    /// Change-rate coefficient of the sigmoid.
    pub alpha: f64,
    /// Below this speed `β` is undefined and taken as 0.
    pub speed_epsilon: f64,
    /// Below this gradient norm `β` is undefined and taken as 0.
    pub gradient_epsilon: f64,
}

impl Default for EasaParams {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            speed_epsilon: 1e-3,
            gradient_epsilon: 1e-6,
        }
    }
}

impl EasaParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0) {
            return Err(format!("easa.alpha must be positive, got {}", self.alpha));
        }
        if !(self.speed_epsilon > 0.0) || !(self.gradient_epsilon > 0.0) {
            return Err("easa epsilons must be positive".into());
        }
        Ok(())
    }

    fn degenerate(&self, v: &Vec3, grad: &Vec3) -> bool {
        v.norm() <= self.speed_epsilon || grad.norm() <= self.gradient_epsilon
    }
}

/// Cosine of the angle between `v` and `grad`, or 0 for degenerate inputs.
pub fn beta(v: &Vec3, grad: &Vec3, params: &EasaParams) -> f64 {
    if params.degenerate(v, grad) {
        return 0.0;
    }
    (v.dot(grad) / (v.norm() * grad.norm())).clamp(-1.0, 1.0)
}

pub fn eta(beta: f64, params: &EasaParams) -> f64 {
    2.0 / (1.0 + (params.alpha * beta).exp())
}

/// `dη/dβ = −2α e^{αβ} / (1 + e^{αβ})²`.
pub fn eta_derivative_wrt_beta(beta: f64, params: &EasaParams) -> f64 {
    let e = (params.alpha * beta).exp();
    -2.0 * params.alpha * e / ((1.0 + e) * (1.0 + e))
}

/// `β` together with its partial derivatives with respect to `v` and `∇c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPartials {
    pub beta: f64,
    pub wrt_velocity: Vec3,
    pub wrt_gradient: Vec3,
}

/// Partials of the unclamped cosine. Degenerate inputs give `β = 0` with zero
/// partials.
pub fn beta_partials(v: &Vec3, grad: &Vec3, params: &EasaParams) -> BetaPartials {
    if params.degenerate(v, grad) {
        return BetaPartials {
            beta: 0.0,
            wrt_velocity: Vec3::zeros(),
            wrt_gradient: Vec3::zeros(),
        };
    }
    let vn = v.norm();
    let gn = grad.norm();
    let dot = v.dot(grad);
    BetaPartials {
        beta: (dot / (vn * gn)).clamp(-1.0, 1.0),
        // (∇c ‖v‖² − v ⟨v, ∇c⟩) / (‖v‖³ ‖∇c‖)
        wrt_velocity: (grad * (vn * vn) - v * dot) / (vn * vn * vn * gn),
        // (v ‖∇c‖² − ∇c ⟨v, ∇c⟩) / (‖v‖ ‖∇c‖³)
        wrt_gradient: (v * (gn * gn) - grad * dot) / (vn * gn * gn * gn),
    }
}

/// Gradient of `β_i` over each axis' input sequence.
///
/// `velocity_rows[μ]` and `position_rows[μ]` are the rows of the batch input
/// map giving `∂v_{i,μ}/∂U_μ` and `∂p_{i,μ}/∂U_μ`. The position term goes
/// through the Hessian of the distance field, since `∇c` moves with `p_i`.
pub fn beta_gradient(
    v: &Vec3,
    grad: &Vec3,
    hessian: &Matrix3<f64>,
    velocity_rows: [&[f64]; 3],
    position_rows: [&[f64]; 3],
    params: &EasaParams,
) -> [Vec<f64>; 3] {
    let partials = beta_partials(v, grad, params);
    // ∂β/∂p = Hᵀ ∂β/∂(∇c); H is symmetric.
    let wrt_position = hessian.transpose() * partials.wrt_gradient;
    std::array::from_fn(|axis| {
        velocity_rows[axis]
            .iter()
            .zip(position_rows[axis])
            .map(|(&rv, &rp)| partials.wrt_velocity[axis] * rv + wrt_position[axis] * rp)
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> EasaParams {
        EasaParams::default()
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta(&Vec3::x(), &Vec3::x(), &p()), 1.0);
        assert_eq!(beta(&Vec3::x(), &Vec3::y(), &p()), 0.0);
        let b = beta(&Vec3::new(1.0, 1.0, 0.0), &Vec3::new(-1.0, 0.0, 0.0), &p());
        assert!((b + 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs_are_neutral() {
        assert_eq!(beta(&Vec3::new(1e-4, 0.0, 0.0), &Vec3::x(), &p()), 0.0);
        assert_eq!(beta(&Vec3::x(), &Vec3::zeros(), &p()), 0.0);
        let bp = beta_partials(&Vec3::zeros(), &Vec3::x(), &p());
        assert_eq!(bp.wrt_velocity, Vec3::zeros());
        assert_eq!(eta(0.0, &p()), 1.0);
    }

    #[test]
    fn eta_examples() {
        let one = EasaParams { alpha: 1.0, ..p() };
        assert_eq!(eta(0.0, &EasaParams { alpha: 7.3, ..p() }), 1.0);
        assert!((eta(1.0, &one) - 2.0 / (1.0 + std::f64::consts::E)).abs() < 1e-15);
        assert!((eta(1.0, &one) - 0.53788).abs() < 1e-5);
        assert!((eta(-1.0, &one) - 1.46212).abs() < 1e-5);
        assert!((eta_derivative_wrt_beta(0.0, &one) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn eta_derivative_matches_finite_difference() {
        let params = EasaParams { alpha: 2.7, ..p() };
        for k in 0..100 {
            let b = -1.0 + 2.0 * (k as f64 + 0.5) / 100.0;
            let h = 1e-6;
            let fd = (eta(b + h, &params) - eta(b - h, &params)) / (2.0 * h);
            let an = eta_derivative_wrt_beta(b, &params);
            assert!(an < 0.0);
            assert!((fd - an).abs() < 1e-8);
        }
    }

    #[test]
    fn velocity_term_vanishes_when_aligned() {
        let bp = beta_partials(&Vec3::new(2.0, 0.0, 0.0), &Vec3::new(0.5, 0.0, 0.0), &p());
        assert!(bp.wrt_velocity.norm() < 1e-15);
    }

    #[test]
    fn orthogonal_slope_is_inverse_speed() {
        let v = Vec3::new(0.0, 2.0, 0.0);
        let g = Vec3::new(3.0, 0.0, 0.0);
        let bp = beta_partials(&v, &g, &p());
        // Perturbing v along ∇c/‖∇c‖ raises β at rate 1/‖v‖.
        let slope = bp.wrt_velocity.dot(&(g / g.norm()));
        assert!((slope - 0.5).abs() < 1e-15);
    }
}
