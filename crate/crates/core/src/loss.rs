//! Multi-class soft dice loss over softmax probabilities.
//!
//! The default form keeps the factor 2 outside the per-class ratio:
//!
//! ```text
//! loss = -(2/D) * sum_d (sum_j P[j,d] T[j,d] + r) / (sum_j P[j,d] + sum_j T[j,d] + r)
//! ```
//!
//! where `D` is the number of classes in the class set. The conventional
//! soft dice, `-(1/D) * sum_d (2 sum PT + r) / (sum P + sum T + r)`, is
//! available as [`DiceForm::Conventional`] for comparison.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Tensor5};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiceForm {
    #[default]
    Outer,
    Conventional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiceConfig {
    /// Smoothing constant added to numerator and denominator.
    pub r: f64,
    /// Channel indices the loss sums over.
    pub class_set: Vec<usize>,
    pub form: DiceForm,
}

impl DiceConfig {
    /// Every class, background included.
    pub fn all_classes(num_classes: usize, r: f64) -> Self {
        DiceConfig {
            r,
            class_set: (0..num_classes).collect(),
            form: DiceForm::Outer,
        }
    }

    /// Every class except channel 0.
    pub fn foreground(num_classes: usize, r: f64) -> Self {
        DiceConfig {
            r,
            class_set: (1..num_classes).collect(),
            form: DiceForm::Outer,
        }
    }

    fn validate(&self, channels: usize) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dice smoothing r must be positive, got {}",
                self.r
            )));
        }
        if self.class_set.is_empty() {
            return Err(Error::InvalidConfig("dice class set is empty".into()));
        }
        if let Some(&d) = self.class_set.iter().find(|&&d| d >= channels) {
            return Err(Error::InvalidConfig(format!(
                "dice class {d} out of range for {channels} channels"
            )));
        }
        Ok(())
    }
}

/// Per-class sums (sum PT, sum P, sum T), accumulated in f64.
fn class_sums<T: Scalar>(p: &Tensor5<T>, t: &Tensor5<T>, cfg: &DiceConfig) -> Result<Vec<(f64, f64, f64)>> {
    p.ensure_same_shape(t, "dice_loss")?;
    let s = p.shape();
    cfg.validate(s.c)?;
    if !p.is_finite() || !t.is_finite() {
        return Err(Error::InvalidValue("dice loss inputs must be finite".into()));
    }
    let plane = s.spatial();
    Ok(cfg
        .class_set
        .iter()
        .map(|&d| {
            let (mut pt, mut sp, mut st) = (0.0, 0.0, 0.0);
            for n in 0..s.n {
                let pc = p.channel(n, d);
                let tc = t.channel(n, d);
                for j in 0..plane {
                    let (pv, tv) = (pc[j].to_f64(), tc[j].to_f64());
                    pt += pv * tv;
                    sp += pv;
                    st += tv;
                }
            }
            (pt, sp, st)
        })
        .collect())
}

pub fn dice_loss<T: Scalar>(p: &Tensor5<T>, t: &Tensor5<T>, cfg: &DiceConfig) -> Result<f64> {
    let sums = class_sums(p, t, cfg)?;
    let d = cfg.class_set.len() as f64;
    let r = cfg.r;
    let total: f64 = sums
        .iter()
        .map(|&(pt, sp, st)| match cfg.form {
            DiceForm::Outer => (pt + r) / (sp + st + r),
            DiceForm::Conventional => (2.0 * pt + r) / (sp + st + r),
        })
        .sum();
    Ok(match cfg.form {
        DiceForm::Outer => -(2.0 / d) * total,
        DiceForm::Conventional => -total / d,
    })
}

/// Gradient of [`dice_loss`] with respect to `p`. Channels outside the
/// class set receive zero.
pub fn dice_loss_grad<T: Scalar>(p: &Tensor5<T>, t: &Tensor5<T>, cfg: &DiceConfig) -> Result<Tensor5<T>> {
    let sums = class_sums(p, t, cfg)?;
    let s = p.shape();
    let d = cfg.class_set.len() as f64;
    let r = cfg.r;
    let plane = s.spatial();
    let mut grad = Tensor5::zeros(s);
    for (&class, &(pt, sp, st)) in cfg.class_set.iter().zip(&sums) {
        let den = sp + st + r;
        let (num, t_scale, coef) = match cfg.form {
            DiceForm::Outer => (pt + r, 1.0, -2.0 / d),
            DiceForm::Conventional => (2.0 * pt + r, 2.0, -1.0 / d),
        };
        let scale = coef / (den * den);
        for n in 0..s.n {
            let base = (n * s.c + class) * plane;
            let tc = t.channel(n, class);
            let g = &mut grad.data_mut()[base..base + plane];
            for (gv, &tv) in g.iter_mut().zip(tc) {
                *gv = T::from_f64(scale * (t_scale * tv.to_f64() * den - num));
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Shape5;
    use alloc::vec;

    fn one_hot(labels: &[usize], classes: usize) -> Tensor5<f64> {
        let s = Shape5::new(1, classes, 1, 1, labels.len());
        Tensor5::from_fn(s, |[_, c, _, _, x]| if labels[x] == c { 1.0 } else { 0.0 })
    }

    #[test]
    fn hand_case_d2_r1() {
        let t = one_hot(&[0, 0, 0, 1], 2);
        let loss = dice_loss(&t, &t, &DiceConfig::all_classes(2, 1.0)).unwrap();
        assert!((loss - (-26.0 / 21.0)).abs() < 1e-12);
    }

    #[test]
    fn perfect_match_limit() {
        let t = one_hot(&[0, 1, 2, 2, 3, 3, 3, 1], 4);
        let loss = dice_loss(&t, &t, &DiceConfig::all_classes(4, 1e-12)).unwrap();
        assert!((loss + 1.0).abs() < 1e-6);
    }

    #[test]
    fn disjoint_limit() {
        let labels: Vec<usize> = (0..400).map(|i| i % 2).collect();
        let flipped: Vec<usize> = labels.iter().map(|&l| 1 - l).collect();
        let loss = dice_loss(
            &one_hot(&flipped, 2),
            &one_hot(&labels, 2),
            &DiceConfig::all_classes(2, 1e-12),
        )
        .unwrap();
        assert!(loss.abs() < 1e-9);
    }

    #[test]
    fn empty_class_gradient_is_positive() {
        let t = one_hot(&[0, 0, 0, 0], 2);
        let p = Tensor5::full(t.shape(), 0.5);
        let g = dice_loss_grad(&p, &t, &DiceConfig::all_classes(2, 1.0)).unwrap();
        assert!(g.channel(0, 1).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn excluded_classes_get_zero_gradient() {
        let t = one_hot(&[0, 1, 2, 1], 3);
        let p = Tensor5::full(t.shape(), 1.0 / 3.0);
        let g = dice_loss_grad(&p, &t, &DiceConfig::foreground(3, 1.0)).unwrap();
        assert!(g.channel(0, 0).iter().all(|&v| v == 0.0));
        assert!(g.channel(0, 1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = one_hot(&[0, 1], 2);
        let cfg = DiceConfig::all_classes(2, 1.0);
        assert!(dice_loss(&t, &one_hot(&[0, 1, 1], 2), &cfg).is_err());
        let mut nan = t.clone();
        nan.data_mut()[0] = f64::NAN;
        assert!(dice_loss(&nan, &t, &cfg).is_err());
        assert!(dice_loss(&t, &t, &DiceConfig { r: 0.0, ..cfg.clone() }).is_err());
        assert!(dice_loss(
            &t,
            &t,
            &DiceConfig {
                class_set: vec![],
                ..cfg.clone()
            }
        )
        .is_err());
        assert!(dice_loss(
            &t,
            &t,
            &DiceConfig {
                class_set: vec![2],
                ..cfg
            }
        )
        .is_err());
    }

    #[test]
    fn conventional_form_perfect_match() {
        let t = one_hot(&[0, 1, 1, 0, 1], 2);
        let cfg = DiceConfig {
            form: DiceForm::Conventional,
            ..DiceConfig::all_classes(2, 1e-12)
        };
        assert!((dice_loss(&t, &t, &cfg).unwrap() + 1.0).abs() < 1e-9);
    }
}
