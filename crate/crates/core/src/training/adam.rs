use crate::neural::Param;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction. Moment buffers follow the order of the
/// parameter list passed to [`Adam::step`]; non-trainable entries are
/// skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adam {
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&mut self, params: Vec<&mut Param>, lr: f64) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.value[i] -= lr * mh / (vh.sqrt() + EPSILON);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Param::new("w", &[3], vec![1.0, -2.0, 0.5]);
        let mut opt = Adam::new();
        for _ in 0..5 {
            opt.step(vec![&mut p], 0.1);
        }
        assert_eq!(p.value, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Param::new("w", &[3], vec![0.0; 3]);
        p.grad = vec![3.0, -0.02, 1e3];
        Adam::new().step(vec![&mut p], 0.01);
        for (v, g) in p.value.iter().zip([3.0, -0.02, 1e3f64]) {
            assert!((v + 0.01 * g.signum()).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut p = Param::buffer("running", &[2], 1.0);
        p.grad = vec![5.0, 5.0];
        Adam::new().step(vec![&mut p], 0.1);
        assert_eq!(p.value, vec![1.0, 1.0]);
    }

    /// Scalar recurrence on f(θ) = θ²/2 run by hand as the oracle.
    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::new("w", &[1], vec![5.0]);
        let mut opt = Adam::new();
        let (mut th, mut m, mut v) = (5.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            p.grad[0] = p.value[0];
            opt.step(vec![&mut p], 0.1);
            m = 0.9 * m + 0.1 * th;
            v = 0.999 * v + 0.001 * th * th;
            th -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        assert!((p.value[0] - th).abs() < 1e-12);
        assert!(p.value[0].abs() < 0.5, "{}", p.value[0]);
    }
}
