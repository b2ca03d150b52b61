//! Central finite-difference verification of analytic gradients.
//!
//! Checks run in `f64` through the same generic kernels the `f32` networks
//! use. The scalar loss is a weighted sum of the fragment's outputs; with
//! unit weights it is the plain sum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compute::layers::Differentiable;
use crate::compute::params::ParamSet;
use crate::compute::tensor::Tensor4;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Weights of the output sum. `None` means all ones.
    pub projection_seed: Option<u64>,
    /// Skip coordinates whose one-sided difference quotients disagree,
    /// i.e. where a perturbation crosses an activation kink.
    pub skip_kinks: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            projection_seed: None,
            skip_kinks: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Coordinate with the largest error, e.g. `input[12]` or `conv.weight[3]`.
    pub worst: String,
    pub checked: usize,
    pub skipped: usize,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn weighted_sum(out: &Tensor4<f64>, weights: &Option<Vec<f64>>) -> f64 {
    match weights {
        None => out.data().iter().sum(),
        Some(w) => out.data().iter().zip(w).map(|(a, b)| a * b).sum(),
    }
}

/// Compare analytic gradients of `net` against central differences for every
/// input coordinate and every parameter value.
pub fn grad_check<N: Differentiable>(
    net: &N,
    params: &ParamSet<f64>,
    input: &Tensor4<f64>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut params = params.clone();
    params.zero_grad();
    let (out, trace) = net.forward_traced(&params, input)?;
    let weights = opts.projection_seed.map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()
    });
    let grad_out = match &weights {
        None => Tensor4::filled(out.shape(), 1.0)?,
        Some(w) => Tensor4::from_vec(out.shape(), w.clone())?,
    };
    let grad_in = net.backward(&mut params, &trace, &grad_out)?;
    if grad_in.shape() != input.shape() {
        return Err(Error::shape("grad_check", "input gradient shape differs from input"));
    }

    let h = opts.step;
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: String::new(),
        checked: 0,
        skipped: 0,
    };
    let base = weighted_sum(&out, &weights);

    let record = |report: &mut GradCheckReport, label: String, analytic: f64, plus: f64, minus: f64| {
        let numeric = (plus - minus) / (2.0 * h);
        if opts.skip_kinks {
            let fwd = (plus - base) / h;
            let bwd = (base - minus) / h;
            if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-2) {
                report.skipped += 1;
                return;
            }
        }
        report.checked += 1;
        let err = relative_error(analytic, numeric);
        if err > report.max_relative_error || report.worst.is_empty() {
            report.max_relative_error = err;
            report.worst = label;
        }
    };

    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let plus = weighted_sum(&net.forward(&params, &x)?, &weights);
        x.data_mut()[i] = orig - h;
        let minus = weighted_sum(&net.forward(&params, &x)?, &weights);
        x.data_mut()[i] = orig;
        record(&mut report, format!("input[{i}]"), grad_in.data()[i], plus, minus);
    }

    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let len = params.get(&name)?.len();
        for i in 0..len {
            let analytic = params.get(&name)?.grad[i];
            let orig = params.get(&name)?.value[i];
            params.get_mut(&name)?.value[i] = orig + h;
            let plus = weighted_sum(&net.forward(&params, input)?, &weights);
            params.get_mut(&name)?.value[i] = orig - h;
            let minus = weighted_sum(&net.forward(&params, input)?, &weights);
            params.get_mut(&name)?.value[i] = orig;
            record(&mut report, format!("{name}[{i}]"), analytic, plus, minus);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::layers::{Layer, Sequential};
    use crate::compute::ops::Activation;
    use crate::compute::tensor::Shape4;

    fn random_input(shape: Shape4, seed: u64) -> Tensor4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn identity_fragment_is_exact() {
        let net = Sequential::new(vec![]);
        let params = ParamSet::<f64>::new();
        let x = random_input(Shape4::new(1, 2, 4, 4), 1);
        let r = grad_check(&net, &params, &x, &GradCheckOptions::default()).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
        assert_eq!(r.checked, 32);
    }

    /// Squares its input but reports twice the true derivative.
    struct WrongSquare;

    impl Differentiable for WrongSquare {
        type Trace<T: crate::compute::scalar::Scalar> = Tensor4<T>;

        fn forward_traced<T: crate::compute::scalar::Scalar>(
            &self,
            _: &ParamSet<T>,
            input: &Tensor4<T>,
        ) -> Result<(Tensor4<T>, Tensor4<T>)> {
            Ok((input.map(|v| v * v), input.clone()))
        }

        fn backward<T: crate::compute::scalar::Scalar>(
            &self,
            _: &mut ParamSet<T>,
            trace: &Tensor4<T>,
            grad_out: &Tensor4<T>,
        ) -> Result<Tensor4<T>> {
            let four = T::of(4.0);
            let data = trace.data().iter().zip(grad_out.data()).map(|(&x, &g)| four * x * g).collect();
            Tensor4::from_vec(trace.shape(), data)
        }

        fn forward<T: crate::compute::scalar::Scalar>(&self, p: &ParamSet<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
            Ok(self.forward_traced(p, input)?.0)
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let x = random_input(Shape4::new(1, 1, 3, 3), 2);
        let r = grad_check(&WrongSquare, &ParamSet::new(), &x, &GradCheckOptions::default()).unwrap();
        assert!((r.max_relative_error - 0.5).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn conv_relu_fragment_passes() {
        let net = Sequential::new(vec![
            Layer::Conv {
                name: "c".into(),
                cin: 2,
                cout: 3,
                k: 3,
                stride: 1,
                padding: 1,
                bias: true,
            },
            Layer::Act(Activation::Relu),
        ]);
        let params = net.init_params(3).unwrap().cast::<f64>();
        let x = random_input(Shape4::new(1, 2, 5, 5), 4);
        let r = grad_check(&net, &params, &x, &GradCheckOptions::default()).unwrap();
        assert!(r.max_relative_error < 1e-3, "{r:?}");
    }
}
