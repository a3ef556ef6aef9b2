//! Adam with bias correction and a step-decay learning-rate schedule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::network::{Gradients, Network};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr0: f64,
    pub factor: f64,
    pub period: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            lr0: 3e-5,
            factor: 0.5,
            period: 30,
        }
    }
}

impl LrSchedule {
    /// `lr0 * factor^floor(epoch / period)`.
    pub fn lr_at(&self, epoch: u64) -> f64 {
        let steps = (epoch / self.period.max(1)).min(i32::MAX as u64) as i32;
        self.lr0 * self.factor.powi(steps)
    }
}

/// Learning rate of the default schedule (3e-5 halved every 30 epochs).
pub fn lr_at(epoch: u64) -> f64 {
    LrSchedule::default().lr_at(epoch)
}

/// Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(sizes: impl IntoIterator<Item = usize>, lr: f64) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Zeroed state mirroring a network's parameter registry.
    pub fn for_network(net: &Network<T>, lr: f64) -> Self {
        AdamState::new(net.params().iter().map(|p| p.data.len()), lr)
    }

    /// One update over all tensors; `params` and `grads` are paired in order.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut [T]>,
        grads: impl IntoIterator<Item = &'a [T]>,
    ) -> Result<()> {
        let params: Vec<&mut [T]> = params.into_iter().collect();
        let grads: Vec<&[T]> = grads.into_iter().collect();
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidConfig(format!(
                "adam state tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::InvalidConfig(format!(
                    "tensor {i}: state has {} elements, parameter {} and gradient {}",
                    self.m[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.t += 1;
        let t = self.t.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let (inv_bc1, inv_bc2) = (T::from_f64(1.0 / bc1), T::from_f64(1.0 / bc2));
        let (lr, eps) = (T::from_f64(self.lr), T::from_f64(self.eps));
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + one_b1 * gj;
                v[j] = b2 * v[j] + one_b2 * gj * gj;
                let m_hat = m[j] * inv_bc1;
                let v_hat = v[j] * inv_bc2;
                p[j] = p[j] - lr * m_hat / (Float::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}

/// Apply one Adam step to every network parameter.
pub fn adam_step<T: Scalar>(net: &mut Network<T>, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
    let convs = net.convs_mut();
    if convs.len() != grads.0.len() {
        return Err(Error::InvalidConfig(format!(
            "{} gradient groups for {} convolutions",
            grads.0.len(),
            convs.len()
        )));
    }
    let params = convs.into_iter().flat_map(|k| [k.w.data_mut(), k.b.as_mut_slice()]);
    state.step(params, grads.tensors())
}
