//! Discrete integrator chains with piecewise-constant input.
//!
//! One model describes a single scalar axis: order 1 has state `[p]` and input
//! `v`; order 3 has state `[p, v, a]` and input `j`. All spatial axes and the
//! progress dimension are independent copies of the same model.

use nalgebra::{DMatrix, DVector};

use crate::error::{PlannerError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorModel {
    order: usize,
    dt: f64,
    horizon: usize,
    step: [[f64; 3]; 3],
    input: [f64; 3],
}

/// States `s_0 … s_H` of one axis, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence {
    order: usize,
    data: Vec<f64>,
}

impl StateSequence {
    pub fn zeros(order: usize, horizon: usize) -> Self {
        Self {
            order,
            data: vec![0.0; order * (horizon + 1)],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored states, `H + 1`.
    pub fn len(&self) -> usize {
        self.data.len() / self.order
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    pub fn state_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.order..(i + 1) * self.order]
    }

    #[inline]
    pub fn component(&self, i: usize, level: usize) -> f64 {
        self.data[i * self.order + level]
    }

    #[inline]
    pub fn component_mut(&mut self, i: usize, level: usize) -> &mut f64 {
        &mut self.data[i * self.order + level]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl IntegratorModel {
    pub fn new(order: usize, dt: f64, horizon: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(PlannerError::Config(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if horizon == 0 {
            return Err(PlannerError::Config("horizon must be at least 1".into()));
        }
        let (step, input) = match order {
            1 => ([[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]], [dt, 0.0, 0.0]),
            3 => (
                [[1.0, dt, dt * dt / 2.0], [0.0, 1.0, dt], [0.0, 0.0, 1.0]],
                [dt * dt * dt / 6.0, dt * dt / 2.0, dt],
            ),
            other => return Err(PlannerError::UnsupportedOrder(other)),
        };
        Ok(Self {
            order,
            dt,
            horizon,
            step,
            input,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `A_d`.
    pub fn step_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.order, self.order, |r, c| self.step[r][c])
    }

    /// `B_d`.
    pub fn input_vector(&self) -> DVector<f64> {
        DVector::from_fn(self.order, |r, _| self.input[r])
    }

    /// `out = A_d s + B_d u`.
    #[inline]
    pub fn step(&self, s: &[f64], u: f64, out: &mut [f64]) {
        let d = self.order;
        for r in 0..d {
            let mut acc = self.input[r] * u;
            for c in r..d {
                acc += self.step[r][c] * s[c];
            }
            out[r] = acc;
        }
    }

    fn check_inputs(&self, s0: &[f64], inputs: &[f64]) -> Result<()> {
        if inputs.len() != self.horizon {
            return Err(PlannerError::LengthMismatch {
                expected: self.horizon,
                got: inputs.len(),
            });
        }
        if s0.len() != self.order {
            return Err(PlannerError::LengthMismatch {
                expected: self.order,
                got: s0.len(),
            });
        }
        Ok(())
    }

    /// Iterates the step equation from `s0` over `inputs`.
    pub fn rollout(&self, s0: &[f64], inputs: &[f64]) -> Result<StateSequence> {
        self.check_inputs(s0, inputs)?;
        let d = self.order;
        let mut seq = StateSequence::zeros(d, self.horizon);
        seq.state_mut(0).copy_from_slice(s0);
        let mut next = [0.0; 3];
        for (i, &u) in inputs.iter().enumerate() {
            self.step(seq.state(i), u, &mut next[..d]);
            seq.state_mut(i + 1).copy_from_slice(&next[..d]);
        }
        Ok(seq)
    }

    /// Vector-Jacobian product through the rollout: given `∂L/∂s_i` for
    /// `i = 0..=H` (entry 0 is ignored), returns `∂L/∂u_j` for every input.
    pub fn input_gradient(&self, state_grads: &StateSequence) -> Vec<f64> {
        let d = self.order;
        let h = self.horizon;
        debug_assert_eq!(state_grads.len(), h + 1);
        let mut out = vec![0.0; h];
        let mut adj = [0.0; 3];
        adj[..d].copy_from_slice(state_grads.state(h));
        for j in (0..h).rev() {
            out[j] = (0..d).map(|r| self.input[r] * adj[r]).sum();
            if j == 0 {
                break;
            }
            // λ_j = g_j + A_dᵀ λ_{j+1}
            let mut prev = [0.0; 3];
            let g = state_grads.state(j);
            for c in 0..d {
                let mut acc = g[c];
                for r in 0..=c {
                    acc += self.step[r][c] * adj[r];
                }
                prev[c] = acc;
            }
            adj = prev;
        }
        out
    }
}

/// Block form of the rollout: `S = A U + B s_0` with `S = [s_0; …; s_H]`.
///
/// Only the distinct blocks are stored: `A_d^k B_d` for `k < H` and `A_d^i` for
/// `i ≤ H`.
#[derive(Debug, Clone)]
pub struct BatchMaps {
    order: usize,
    horizon: usize,
    input_blocks: Vec<[f64; 3]>,
    state_powers: Vec<[[f64; 3]; 3]>,
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn mat_vec(a: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for r in 0..3 {
        out[r] = (0..3).map(|k| a[r][k] * v[k]).sum();
    }
    out
}

pub fn batch_map(model: &IntegratorModel) -> BatchMaps {
    let h = model.horizon;
    let mut powers = Vec::with_capacity(h + 1);
    let mut identity = [[0.0; 3]; 3];
    for (k, row) in identity.iter_mut().enumerate().take(model.order) {
        row[k] = 1.0;
    }
    powers.push(identity);
    for i in 0..h {
        powers.push(mat_mul(&model.step, &powers[i]));
    }
    let input_blocks = (0..h).map(|k| mat_vec(&powers[k], &model.input)).collect();
    BatchMaps {
        order: model.order,
        horizon: h,
        input_blocks,
        state_powers: powers,
    }
}

impl BatchMaps {
    /// Dense `A`, shape `((H+1)·d) × H`; the `s_0` block row is zero.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        let d = self.order;
        let mut m = DMatrix::zeros((self.horizon + 1) * d, self.horizon);
        for i in 1..=self.horizon {
            for j in 0..i {
                let block = &self.input_blocks[i - j - 1];
                for r in 0..d {
                    m[(i * d + r, j)] = block[r];
                }
            }
        }
        m
    }

    /// Dense `B = (I, A_d, …, A_d^H)ᵀ`, shape `((H+1)·d) × d`.
    pub fn initial_state_matrix(&self) -> DMatrix<f64> {
        let d = self.order;
        let mut m = DMatrix::zeros((self.horizon + 1) * d, d);
        for (i, p) in self.state_powers.iter().enumerate() {
            for r in 0..d {
                for c in 0..d {
                    m[(i * d + r, c)] = p[r][c];
                }
            }
        }
        m
    }

    /// Evaluates `A U + B s_0` block by block.
    pub fn apply(&self, s0: &[f64], inputs: &[f64]) -> Result<StateSequence> {
        let d = self.order;
        if inputs.len() != self.horizon {
            return Err(PlannerError::LengthMismatch {
                expected: self.horizon,
                got: inputs.len(),
            });
        }
        if s0.len() != d {
            return Err(PlannerError::LengthMismatch {
                expected: d,
                got: s0.len(),
            });
        }
        let mut seq = StateSequence::zeros(d, self.horizon);
        for i in 0..=self.horizon {
            let p = &self.state_powers[i];
            let out = seq.state_mut(i);
            for r in 0..d {
                out[r] = (0..d).map(|c| p[r][c] * s0[c]).sum();
            }
            for (j, &u) in inputs.iter().enumerate().take(i) {
                let block = &self.input_blocks[i - j - 1];
                for r in 0..d {
                    out[r] += block[r] * u;
                }
            }
        }
        Ok(seq)
    }

    /// Row of `A` giving `∂(state component `level` at step i)/∂U`.
    pub fn state_jacobian_row(&self, step: usize, level: usize) -> Result<Vec<f64>> {
        if level >= self.order {
            return Err(PlannerError::DerivativeLevel {
                level,
                order: self.order,
            });
        }
        if step == 0 || step > self.horizon {
            return Err(PlannerError::LengthMismatch {
                expected: self.horizon,
                got: step,
            });
        }
        Ok((0..self.horizon)
            .map(|j| {
                if j < step {
                    self.input_blocks[step - j - 1][level]
                } else {
                    0.0
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_order_single_step() {
        let m = IntegratorModel::new(3, 1.0, 1).unwrap();
        let s = m.rollout(&[0.0, 0.0, 0.0], &[6.0]).unwrap();
        assert_eq!(s.state(1), &[1.0, 3.0, 6.0]);
    }

    #[test]
    fn fine_step_integration_agrees_with_closed_form() {
        // Constant jerk 6 over one second, integrated with 1e5 explicit sub-steps.
        let n = 100_000;
        let h = 1.0 / n as f64;
        let (mut p, mut v, mut a) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..n {
            p += v * h + 0.5 * a * h * h + h * h * h;
            v += a * h + 3.0 * h * h;
            a += 6.0 * h;
        }
        assert!((p - 1.0).abs() < 1e-9 && (v - 3.0).abs() < 1e-9 && (a - 6.0).abs() < 1e-9);
    }

    #[test]
    fn zero_input_first_order_holds_state() {
        let m = IntegratorModel::new(1, 0.3, 5).unwrap();
        let s = m.rollout(&[2.5], &[0.0; 5]).unwrap();
        assert!((0..=5).all(|i| s.component(i, 0) == 2.5));
    }

    #[test]
    fn two_step_hand_rollout() {
        let dt = 0.05;
        let m = IntegratorModel::new(3, dt, 2).unwrap();
        let s = m.rollout(&[0.0; 3], &[1.0, 1.0]).unwrap();
        let expected = 8.0 * dt.powi(3) / 6.0;
        assert!((s.component(2, 0) - expected).abs() < 1e-18);
        assert!((s.component(2, 0) - 1.667e-4).abs() < 1e-7);
    }

    #[test]
    fn rejects_wrong_lengths_and_orders() {
        let m = IntegratorModel::new(3, 0.1, 4).unwrap();
        assert!(matches!(
            m.rollout(&[0.0; 3], &[0.0; 3]),
            Err(PlannerError::LengthMismatch { expected: 4, got: 3 })
        ));
        assert!(matches!(
            IntegratorModel::new(2, 0.1, 4),
            Err(PlannerError::UnsupportedOrder(2))
        ));
        let maps = batch_map(&m);
        assert!(matches!(
            maps.state_jacobian_row(1, 3),
            Err(PlannerError::DerivativeLevel { level: 3, order: 3 })
        ));
    }

    #[test]
    fn horizon_one_blocks() {
        let m = IntegratorModel::new(3, 0.2, 1).unwrap();
        let maps = batch_map(&m);
        let a = maps.input_matrix();
        assert_eq!(a.shape(), (6, 1));
        assert_eq!(a.rows(3, 3), m.input_vector());
        let b = maps.initial_state_matrix();
        assert_eq!(b.rows(0, 3), DMatrix::identity(3, 3));
        assert_eq!(b.rows(3, 3), m.step_matrix());
    }

    #[test]
    fn first_order_lower_triangle() {
        let m = IntegratorModel::new(1, 0.1, 3).unwrap();
        let a = batch_map(&m).input_matrix();
        let expected = DMatrix::from_row_slice(
            4,
            3,
            &[0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 0.1, 0.0, 0.1, 0.1, 0.1],
        );
        assert_eq!(a, expected);
    }

    #[test]
    fn jacobian_rows() {
        let dt = 0.05;
        let m = IntegratorModel::new(3, dt, 6).unwrap();
        let maps = batch_map(&m);
        let row = maps.state_jacobian_row(1, 2).unwrap();
        assert_eq!(row[0], dt);
        assert!(row[1..].iter().all(|&x| x == 0.0));
        let last = maps.state_jacobian_row(6, 0).unwrap();
        assert!((last[5] - dt.powi(3) / 6.0).abs() < 1e-18);
        for i in 1..=6 {
            let r = maps.state_jacobian_row(i, 0).unwrap();
            assert_eq!(r.iter().filter(|&&x| x != 0.0).count(), i);
        }
    }

    #[test]
    fn adjoint_matches_jacobian_rows() {
        let m = IntegratorModel::new(3, 0.05, 8).unwrap();
        let maps = batch_map(&m);
        let mut g = StateSequence::zeros(3, 8);
        for i in 1..=8 {
            for l in 0..3 {
                *g.component_mut(i, l) = ((i * 7 + l * 3) % 5) as f64 - 2.0;
            }
        }
        let adj = m.input_gradient(&g);
        let mut expected = [0.0; 8];
        for i in 1..=8 {
            for l in 0..3 {
                let row = maps.state_jacobian_row(i, l).unwrap();
                for j in 0..8 {
                    expected[j] += row[j] * g.component(i, l);
                }
            }
        }
        for j in 0..8 {
            assert!((adj[j] - expected[j]).abs() < 1e-14);
        }
    }
}
