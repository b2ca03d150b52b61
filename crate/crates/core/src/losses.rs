//! Training objectives: L1 reconstruction, adversarial (BCE or least
//! squares), cycle consistency and identity, and their weighted
//! combinations for Pix2Pix and CycleGAN.
//!
//! Expectations are realised as the arithmetic mean over the minibatch and
//! every pixel (or every patch of a discriminator map). Each loss returns its
//! value together with the gradient with respect to its network-output
//! argument(s).

use serde::{Deserialize, Serialize};

use crate::compute::tensor::Tensor4;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Pix2Pix L1 weight.
    pub lambda_l1: f64,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_l1: 100.0,
            lambda_cyc: 10.0,
            lambda_id: 5.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_l1", self.lambda_l1),
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_id", self.lambda_id),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which adversarial formulation to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum GanMode {
    /// BCE on logits, generator minimizes `-log D(G(x))`.
    #[default]
    NonSaturating,
    /// BCE on logits, generator minimizes `log(1 - D(G(x)))` as written in the
    /// original minimax objective. Its value is non-positive.
    Literal,
    /// Least squares: real target 1, fake target 0.
    LeastSquares,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Generator,
    Discriminator,
}

/// A scalar loss and the gradient with respect to one input.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Tensor4,
}

fn same_shape(op: &'static str, a: &Tensor4, b: &Tensor4) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean absolute difference; gradient is `sign(generated - target) / count`.
pub fn l1_loss(generated: &Tensor4, target: &Tensor4) -> Result<LossGrad> {
    same_shape("l1_loss", generated, target)?;
    let count = generated.len() as f64;
    let mut sum = 0.0f64;
    let inv = (1.0 / count) as f32;
    let grad = generated
        .data()
        .iter()
        .zip(target.data())
        .map(|(&g, &t)| {
            let d = g - t;
            sum += (d as f64).abs();
            if d > 0.0 {
                inv
            } else if d < 0.0 {
                -inv
            } else {
                0.0
            }
        })
        .collect();
    Ok(LossGrad {
        value: sum / count,
        grad: Tensor4::from_vec(generated.shape(), grad)?,
    })
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_finite(name: &str, t: &Tensor4) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// Mean over a logit map of a per-element loss `f(l) -> (value, dvalue/dl)`.
fn mean_map(logits: &Tensor4, f: impl Fn(f64) -> (f64, f64)) -> LossGrad {
    let count = logits.len() as f64;
    let mut sum = 0.0;
    let grad = logits
        .data()
        .iter()
        .map(|&l| {
            let (v, d) = f(l as f64);
            sum += v;
            (d / count) as f32
        })
        .collect();
    LossGrad {
        value: sum / count,
        grad: Tensor4::from_parts(logits.shape(), grad),
    }
}

/// Per-element loss for a logit labelled real (`true`) or fake.
fn element_loss(mode: GanMode, real_label: bool) -> impl Fn(f64) -> (f64, f64) {
    move |l| match (mode, real_label) {
        // -log sigmoid(l)
        (GanMode::NonSaturating | GanMode::Literal, true) => (softplus(-l), sigmoid(l) - 1.0),
        // -log(1 - sigmoid(l))
        (GanMode::NonSaturating | GanMode::Literal, false) => (softplus(l), sigmoid(l)),
        (GanMode::LeastSquares, true) => ((l - 1.0) * (l - 1.0), 2.0 * (l - 1.0)),
        (GanMode::LeastSquares, false) => (l * l, 2.0 * l),
    }
}

/// Gradients of an adversarial loss with respect to the real and fake logit maps.
#[derive(Clone, Debug)]
pub struct AdversarialLoss {
    pub value: f64,
    pub grad_real: Option<Tensor4>,
    pub grad_fake: Tensor4,
}

/// Adversarial loss on raw discriminator logits.
///
/// Discriminator side: real logits labelled 1, fake labelled 0, terms summed.
/// Generator side: only the fake logits matter (`real_logits` is ignored);
/// the non-saturating and least-squares forms label them 1, the literal form
/// minimizes `log(1 - D)`.
pub fn adversarial_loss(
    real_logits: Option<&Tensor4>,
    fake_logits: &Tensor4,
    side: Side,
    mode: GanMode,
) -> Result<AdversarialLoss> {
    check_finite("fake logits", fake_logits)?;
    match side {
        Side::Discriminator => {
            let real = real_logits.ok_or_else(|| {
                Error::InvalidArgument("discriminator loss needs real logits".into())
            })?;
            check_finite("real logits", real)?;
            let r = mean_map(real, element_loss(mode, true));
            let f = mean_map(fake_logits, element_loss(mode, false));
            Ok(AdversarialLoss {
                value: r.value + f.value,
                grad_real: Some(r.grad),
                grad_fake: f.grad,
            })
        }
        Side::Generator => {
            let f = match mode {
                GanMode::Literal => {
                    let fake = element_loss(mode, false);
                    mean_map(fake_logits, move |l| {
                        let (v, d) = fake(l);
                        (-v, -d)
                    })
                }
                _ => mean_map(fake_logits, element_loss(mode, true)),
            };
            Ok(AdversarialLoss {
                value: f.value,
                grad_real: None,
                grad_fake: f.grad,
            })
        }
    }
}

/// Two L1 terms and their gradients.
#[derive(Clone, Debug)]
pub struct PairLoss {
    pub value: f64,
    pub grad_first: Tensor4,
    pub grad_second: Tensor4,
}

/// `mean|F(G(x)) - x| + mean|G(F(y)) - y|`; gradients are with respect to the
/// reconstructions.
pub fn cycle_loss(x: &Tensor4, f_of_g_x: &Tensor4, y: &Tensor4, g_of_f_y: &Tensor4) -> Result<PairLoss> {
    let a = l1_loss(f_of_g_x, x)?;
    let b = l1_loss(g_of_f_y, y)?;
    Ok(PairLoss {
        value: a.value + b.value,
        grad_first: a.grad,
        grad_second: b.grad,
    })
}

/// `mean|G(y) - y| + mean|F(x) - x|`; gradients are with respect to `G(y)` and `F(x)`.
pub fn identity_loss(g_of_y: &Tensor4, y: &Tensor4, f_of_x: &Tensor4, x: &Tensor4) -> Result<PairLoss> {
    let a = l1_loss(g_of_y, y)?;
    let b = l1_loss(f_of_x, x)?;
    Ok(PairLoss {
        value: a.value + b.value,
        grad_first: a.grad,
        grad_second: b.grad,
    })
}

/// Raw loss components of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub adversarial_g: f64,
    pub adversarial_d: f64,
    pub l1: f64,
    pub cycle: f64,
    pub identity: f64,
}

/// Loss components with the weights that combine them.
///
/// `total` is the generator objective; discriminators are optimized on
/// `adversarial_d` alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adversarial_g: f64,
    pub adversarial_d: f64,
    pub l1: f64,
    pub cycle: f64,
    pub identity: f64,
    pub total: f64,
    pub weights: Option<LossWeights>,
}

impl LossBreakdown {
    /// Generator total recomputed from components and weights.
    pub fn weighted_sum(&self) -> f64 {
        let w = self.weights.unwrap_or(LossWeights {
            lambda_l1: 0.0,
            lambda_cyc: 0.0,
            lambda_id: 0.0,
        });
        self.adversarial_g + w.lambda_l1 * self.l1 + w.lambda_cyc * self.cycle + w.lambda_id * self.identity
    }

    /// Whether `total` agrees with the weighted component sum to `rel` relative tolerance.
    pub fn is_consistent(&self, rel: f64) -> bool {
        let expected = self.weighted_sum();
        (self.total - expected).abs() <= rel * expected.abs().max(self.total.abs()).max(1e-12)
    }

    /// Element-wise mean of several breakdowns (same weights assumed).
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        if items.is_empty() {
            return LossBreakdown::default();
        }
        let n = items.len() as f64;
        let sum = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        LossBreakdown {
            adversarial_g: sum(|b| b.adversarial_g),
            adversarial_d: sum(|b| b.adversarial_d),
            l1: sum(|b| b.l1),
            cycle: sum(|b| b.cycle),
            identity: sum(|b| b.identity),
            total: sum(|b| b.total),
            weights: items[0].weights,
        }
    }
}

/// Pix2Pix: generator total = adversarial + lambda * L1.
pub fn pix2pix_objective(c: &LossComponents, weights: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        adversarial_g: c.adversarial_g,
        adversarial_d: c.adversarial_d,
        l1: c.l1,
        cycle: 0.0,
        identity: 0.0,
        total: c.adversarial_g + weights.lambda_l1 * c.l1,
        weights: Some(LossWeights {
            lambda_cyc: 0.0,
            lambda_id: 0.0,
            ..*weights
        }),
    }
}

/// CycleGAN: generator total = both adversarial terms (already summed into
/// `adversarial_g`) + lambda_cyc * cycle + lambda_id * identity.
pub fn cyclegan_objective(c: &LossComponents, weights: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        adversarial_g: c.adversarial_g,
        adversarial_d: c.adversarial_d,
        l1: 0.0,
        cycle: c.cycle,
        identity: c.identity,
        total: c.adversarial_g + weights.lambda_cyc * c.cycle + weights.lambda_id * c.identity,
        weights: Some(LossWeights {
            lambda_l1: 0.0,
            ..*weights
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::tensor::Shape4;

    fn filled(v: f32) -> Tensor4 {
        Tensor4::filled(Shape4::new(1, 1, 2, 2), v).unwrap()
    }

    #[test]
    fn l1_values() {
        let y = filled(0.3);
        assert_eq!(l1_loss(&y, &y).unwrap().value, 0.0);
        let r = l1_loss(&filled(0.8), &filled(0.3)).unwrap();
        assert!((r.value - 0.5).abs() < 1e-7);
        assert!(r.grad.data().iter().all(|&g| g == 0.25));
        assert!(l1_loss(&y, &Tensor4::filled(Shape4::new(1, 1, 2, 3), 0.0).unwrap()).is_err());
    }

    #[test]
    fn generator_loss_at_zero_logits_is_ln2() {
        let r = adversarial_loss(None, &filled(0.0), Side::Generator, GanMode::NonSaturating).unwrap();
        assert!((r.value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_discrimination_has_vanishing_loss() {
        let r = adversarial_loss(Some(&filled(60.0)), &filled(-60.0), Side::Discriminator, GanMode::NonSaturating).unwrap();
        assert!(r.value < 1e-20, "{}", r.value);
    }

    #[test]
    fn swapping_labels_swaps_terms() {
        let a = filled(0.7);
        let b = filled(-1.3);
        let ab = adversarial_loss(Some(&a), &b, Side::Discriminator, GanMode::NonSaturating).unwrap();
        // real term of a + fake term of b, versus -a treated as fake and -b as real
        let na = a.map(|v: f32| -v);
        let nb = b.map(|v: f32| -v);
        let swapped = adversarial_loss(Some(&nb), &na, Side::Discriminator, GanMode::NonSaturating).unwrap();
        assert!((ab.value - swapped.value).abs() < 1e-12);
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(adversarial_loss(None, &filled(f32::NAN), Side::Generator, GanMode::NonSaturating).is_err());
    }

    #[test]
    fn literal_generator_loss_is_non_positive() {
        let r = adversarial_loss(None, &filled(0.0), Side::Generator, GanMode::Literal).unwrap();
        assert!((r.value + std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cycle_and_identity_arithmetic() {
        let x = filled(0.2);
        let y = filled(-0.4);
        assert_eq!(cycle_loss(&x, &x, &y, &y).unwrap().value, 0.0);
        let shifted = x.map(|v: f32| v + 0.1);
        let c = cycle_loss(&x, &shifted, &y, &y).unwrap();
        assert!((c.value - 0.1).abs() < 1e-6);
        let ones = filled(1.0);
        let neg = filled(-1.0);
        let id = identity_loss(&neg, &ones, &x, &x).unwrap();
        assert!((id.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pix2pix_total() {
        let c = LossComponents {
            adversarial_g: 0.7,
            l1: 0.02,
            ..Default::default()
        };
        let b = pix2pix_objective(&c, &LossWeights::default());
        assert!((b.total - 2.7).abs() < 1e-12);
        assert!(b.is_consistent(1e-6));
        let b0 = pix2pix_objective(&c, &LossWeights { lambda_l1: 0.0, ..Default::default() });
        assert_eq!(b0.total, 0.7);
    }

    #[test]
    fn cyclegan_weights_enter_linearly() {
        let c = LossComponents {
            adversarial_g: 1.0,
            cycle: 0.3,
            identity: 0.2,
            ..Default::default()
        };
        let w = LossWeights::default();
        let b1 = cyclegan_objective(&c, &w);
        let b2 = cyclegan_objective(&c, &LossWeights { lambda_cyc: 2.0 * w.lambda_cyc, ..w });
        assert!((b2.total - b1.total - w.lambda_cyc * 0.3).abs() < 1e-12);
        assert!(b1.is_consistent(1e-6) && b2.is_consistent(1e-6));
    }
}
