use crate::Vec3;

/// Point on the reference curve with derivatives taken with respect to `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

/// C¹ cubic Hermite curve through knots `p_0 … p_M` placed at `θ = i·dt`.
///
/// Interior tangents are the Catmull-Rom central differences; the end
/// tangents are one-sided. Outside `[0, M·dt]` the curve holds its end point
/// with zero derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    knots: Vec<Vec3>,
    tangents: Vec<Vec3>,
    dt: f64,
}

impl ReferenceTrajectory {
    /// # Panics
    /// If `knots` is empty or `dt` is not positive.
    pub fn new(knots: Vec<Vec3>, dt: f64) -> Self {
        assert!(!knots.is_empty(), "reference needs at least one knot");
        assert!(dt > 0.0, "reference knot spacing must be positive");
        let m = knots.len() - 1;
        let tangents = (0..=m)
            .map(|i| {
                if m == 0 {
                    Vec3::zeros()
                } else if i == 0 {
                    (knots[1] - knots[0]) / dt
                } else if i == m {
                    (knots[m] - knots[m - 1]) / dt
                } else {
                    (knots[i + 1] - knots[i - 1]) / (2.0 * dt)
                }
            })
            .collect();
        Self { knots, tangents, dt }
    }

    pub fn knots(&self) -> &[Vec3] {
        &self.knots
    }

    pub fn knot_spacing(&self) -> f64 {
        self.dt
    }

    /// `M·dt`.
    pub fn duration(&self) -> f64 {
        (self.knots.len() - 1) as f64 * self.dt
    }

    pub fn start(&self) -> Vec3 {
        self.knots[0]
    }

    pub fn end(&self) -> Vec3 {
        *self.knots.last().unwrap()
    }

    pub fn eval(&self, theta: f64) -> ReferencePoint {
        let m = self.knots.len() - 1;
        let hold = |p: Vec3| ReferencePoint {
            position: p,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
        };
        if m == 0 || theta < 0.0 || theta.is_nan() {
            return hold(self.knots[0]);
        }
        if theta > self.duration() {
            return hold(self.knots[m]);
        }
        let mut u = theta / self.dt;
        if (u - u.round()).abs() < 1e-12 {
            u = u.round();
        }
        let seg = (u.floor() as usize).min(m - 1);
        let s = u - seg as f64;
        let (p0, p1) = (self.knots[seg], self.knots[seg + 1]);
        let (m0, m1) = (self.tangents[seg] * self.dt, self.tangents[seg + 1] * self.dt);
        let s2 = s * s;
        let s3 = s2 * s;
        let position = p0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + m0 * (s3 - 2.0 * s2 + s)
            + p1 * (-2.0 * s3 + 3.0 * s2)
            + m1 * (s3 - s2);
        let velocity = (p0 * (6.0 * s2 - 6.0 * s)
            + m0 * (3.0 * s2 - 4.0 * s + 1.0)
            + p1 * (-6.0 * s2 + 6.0 * s)
            + m1 * (3.0 * s2 - 2.0 * s))
            / self.dt;
        let acceleration =
            (p0 * (12.0 * s - 6.0) + m0 * (6.0 * s - 4.0) + p1 * (-12.0 * s + 6.0) + m1 * (6.0 * s - 2.0))
                / (self.dt * self.dt);
        ReferencePoint {
            position,
            velocity,
            acceleration,
        }
    }

    /// Positions every `step` in `θ` from `from` to the end, inclusive of the end.
    pub fn sample_from(&self, from: f64, step: f64) -> Vec<Vec3> {
        let end = self.duration();
        let mut out = Vec::new();
        let mut theta = from.clamp(0.0, end);
        while theta < end {
            out.push(self.eval(theta).position);
            theta += step;
        }
        out.push(self.end());
        out
    }

    /// Approximate curve length over `θ ∈ [from, end]`.
    pub fn arc_length_from(&self, from: f64) -> f64 {
        let pts = self.sample_from(from, self.dt / 8.0);
        pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}
