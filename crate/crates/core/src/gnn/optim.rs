/// Adam with bias correction. State is allocated lazily on the first step
/// to match the parameter shapes.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient lists differ");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "tensor {k} shape changed");
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-3, 0.5, -7.0] {
            let mut x = [1.0];
            let mut opt = Adam::new(0.01);
            opt.step(vec![&mut x], vec![&[g]]);
            assert!(((1.0 - x[0]).abs() - 0.01).abs() < 1e-6, "g={g}");
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut x = [0.3, -2.0];
        let mut opt = Adam::new(0.1);
        for _ in 0..50 {
            opt.step(vec![&mut x], vec![&[0.0, 0.0]]);
        }
        assert_eq!(x, [0.3, -2.0]);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut x = [1.0];
        let mut opt = Adam::new(0.05);
        for _ in 0..500 {
            let g = [2.0 * x[0]];
            opt.step(vec![&mut x], vec![&g]);
        }
        assert!(x[0].abs() < 1e-3, "x = {}", x[0]);
    }
}
