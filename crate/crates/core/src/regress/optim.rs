//! First-order optimizers over flat parameter slices.
//!
//! Each optimizer keeps one state buffer per parameter tensor, addressed by a
//! caller-chosen slot index that must be stable across steps.

#[derive(Debug, Clone)]
pub struct Rmsprop {
    pub learning_rate: f64,
    pub decay: f64,
    pub eps: f64,
    square_avg: Vec<Vec<f64>>,
}

impl Rmsprop {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            decay: 0.9,
            eps: 1e-8,
            square_avg: Vec::new(),
        }
    }

    pub fn step(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        if self.square_avg.len() <= slot {
            self.square_avg.resize(slot + 1, Vec::new());
        }
        let sq = &mut self.square_avg[slot];
        if sq.len() != params.len() {
            *sq = vec![0.0; params.len()];
        }
        for ((p, &g), s) in params.iter_mut().zip(grads).zip(sq.iter_mut()) {
            *s = self.decay * *s + (1.0 - self.decay) * g * g;
            *p -= self.learning_rate * g / (s.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Advance the shared time step; call once per update before `step`.
    pub fn tick(&mut self) {
        self.t += 1;
    }

    pub fn step(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        if self.m.len() <= slot {
            self.m.resize(slot + 1, Vec::new());
            self.v.resize(slot + 1, Vec::new());
        }
        if self.m[slot].len() != params.len() {
            self.m[slot] = vec![0.0; params.len()];
            self.v[slot] = vec![0.0; params.len()];
        }
        let bc1 = 1.0 - self.beta1.powi(self.t.max(1));
        let bc2 = 1.0 - self.beta2.powi(self.t.max(1));
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
