use serde::{Deserialize, Serialize};

use super::{Matrix, NeuralError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators mirroring a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected update. Rejects non-finite gradients before
    /// touching any parameter.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix]) -> Result<(), NeuralError> {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        for id in params.ids() {
            let g = &grads[id.index()];
            if g.shape() != params.get(id).shape() {
                return Err(NeuralError::Shape(format!(
                    "gradient for {} is {:?}, parameter is {:?}",
                    params.name(id),
                    g.shape(),
                    params.get(id).shape()
                )));
            }
            if !g.is_finite() {
                return Err(NeuralError::NonFinite(params.name(id).to_string()));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for id in params.ids() {
            let i = id.index();
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let w = params.get_mut(id).data_mut();
            for k in 0..g.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                w[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(w: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.add("w", Matrix::filled(1, 1, w));
        p
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [0.3, -7.0] {
            let mut p = store(1.0);
            let mut s = AdamState::new(&p, AdamConfig::default());
            s.step(&mut p, &[Matrix::filled(1, 1, g)]).unwrap();
            let moved = p.values()[0].get(0, 0) - 1.0;
            assert!((moved + 1e-3 * g.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = store(0.42);
        let mut s = AdamState::new(&p, AdamConfig::default());
        for _ in 0..5 {
            s.step(&mut p, &[Matrix::zeros(1, 1)]).unwrap();
        }
        assert_eq!(p.values()[0].get(0, 0), 0.42);
        assert_eq!(s.t, 5);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = store(1.0);
        let mut s = AdamState::new(&p, AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..200 {
            let w = p.values()[0].get(0, 0);
            s.step(&mut p, &[Matrix::filled(1, 1, 2.0 * w)]).unwrap();
        }
        assert!(p.values()[0].get(0, 0).abs() < 1e-2);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = store(1.0);
        let mut s = AdamState::new(&p, AdamConfig::default());
        let err = s.step(&mut p, &[Matrix::filled(1, 1, f64::NAN)]).unwrap_err();
        assert_eq!(err, NeuralError::NonFinite("w".into()));
        assert_eq!(p.values()[0].get(0, 0), 1.0);
    }
}
