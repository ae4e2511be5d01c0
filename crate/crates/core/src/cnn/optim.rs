use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stochastic gradient descent with heavy-ball momentum:
/// `v <- m*v + g`, `p <- p - lr*v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Length {
                expected: params.len(),
                found: grads.len(),
            });
        }
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        }
        let lr = T::cast(self.learning_rate);
        let m = T::cast(self.momentum);
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            if p.shape() != g.shape() || v.shape() != g.shape() {
                return Err(Error::arg(format!(
                    "parameter shape {:?} does not match gradient shape {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = m * *vv + gv;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(1.5);
        let mut opt = Sgd::new(0.1, 0.9);
        opt.step(vec![&mut p], &[scalar(0.0)]).unwrap();
        assert_eq!(p.data()[0], 1.5);
    }

    #[test]
    fn plain_and_momentum_steps() {
        let mut p = scalar(1.0);
        let mut opt = Sgd::new(0.1, 0.0);
        opt.step(vec![&mut p], &[scalar(2.0)]).unwrap();
        assert!((p.data()[0] - 0.8).abs() < 1e-15);

        // v1 = 2, p1 = 1 - 0.2 = 0.8; v2 = 0.9*2 + 1 = 2.8, p2 = 0.8 - 0.28 = 0.52
        let mut p = scalar(1.0);
        let mut opt = Sgd::new(0.1, 0.9);
        opt.step(vec![&mut p], &[scalar(2.0)]).unwrap();
        opt.step(vec![&mut p], &[scalar(1.0)]).unwrap();
        assert!((p.data()[0] - 0.52).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar(1.0);
        let mut opt = Sgd::new(0.1, 0.9);
        assert!(opt.step(vec![&mut p], &[Tensor::zeros(&[2])]).is_err());
    }
}
