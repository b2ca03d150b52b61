use crate::compute::ops::{self, Activation, Filter, NormCache, DEFAULT_NORM_EPS};
use crate::compute::params::{Init, Initializer, ParamSet};
use crate::compute::scalar::Scalar;
use crate::compute::tensor::Tensor4;
use crate::error::Result;

/// A network that can run forward with a recorded trace and propagate
/// gradients back through it.
pub trait Differentiable {
    type Trace<T: Scalar>;

    fn forward_traced<T: Scalar>(&self, params: &ParamSet<T>, input: &Tensor4<T>) -> Result<(Tensor4<T>, Self::Trace<T>)>;

    /// Accumulates parameter gradients into `params` and returns the input gradient.
    fn backward<T: Scalar>(
        &self,
        params: &mut ParamSet<T>,
        trace: &Self::Trace<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>>;

    /// Inference-only forward pass.
    fn forward<T: Scalar>(&self, params: &ParamSet<T>, input: &Tensor4<T>) -> Result<Tensor4<T>>;
}

/// A parameter declared by a layer: name, shape and initializer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv {
        name: String,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    /// Nearest x2 upsampling followed by a "same" convolution.
    UpConv {
        name: String,
        cin: usize,
        cout: usize,
        k: usize,
        bias: bool,
    },
    InstanceNorm {
        name: String,
        channels: usize,
    },
    Act(Activation),
}

#[derive(Clone, Debug)]
pub enum LayerTrace<T> {
    Conv { input: Tensor4<T> },
    Norm(NormCache<T>),
    Act { input: Tensor4<T>, output: Tensor4<T> },
}

pub(crate) const WEIGHT_INIT: Init = Init::Normal { mean: 0.0, std: 0.02 };

impl Layer {
    pub fn params(&self) -> Vec<ParamSpec> {
        let spec = |name: &str, suffix: &str, shape: Vec<usize>, init| ParamSpec {
            name: format!("{name}.{suffix}"),
            shape,
            init,
        };
        match self {
            Layer::Conv {
                name, cin, cout, k, bias, ..
            }
            | Layer::UpConv {
                name, cin, cout, k, bias, ..
            } => {
                let mut v = vec![spec(name, "weight", vec![*cout, *cin, *k, *k], WEIGHT_INIT)];
                if *bias {
                    v.push(spec(name, "bias", vec![*cout], Init::Constant(0.0)));
                }
                v
            }
            Layer::InstanceNorm { name, channels } => vec![
                spec(name, "gain", vec![*channels], Init::Constant(1.0)),
                spec(name, "offset", vec![*channels], Init::Constant(0.0)),
            ],
            Layer::Act(_) => Vec::new(),
        }
    }

    fn filter<'a, T: Scalar>(&self, params: &'a ParamSet<T>) -> Result<Filter<'a, T>> {
        match self {
            Layer::Conv {
                name, cin, cout, k, bias, ..
            }
            | Layer::UpConv {
                name, cin, cout, k, bias, ..
            } => {
                let weight = params.value(&format!("{name}.weight"))?;
                let b = if *bias {
                    Some(params.value(&format!("{name}.bias"))?)
                } else {
                    None
                };
                Ok(Filter::new(weight, [*cout, *cin, *k, *k], b))
            }
            _ => unreachable!("filter requested for a parameter-free layer"),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        params: &ParamSet<T>,
        x: &Tensor4<T>,
        record: bool,
    ) -> Result<(Tensor4<T>, Option<LayerTrace<T>>)> {
        match self {
            Layer::Conv { stride, padding, .. } => {
                let y = ops::conv2d(x, self.filter(params)?, *stride, *padding)?;
                let trace = record.then(|| LayerTrace::Conv { input: x.clone() });
                Ok((y, trace))
            }
            Layer::UpConv { .. } => {
                let y = ops::upsample_conv(x, self.filter(params)?, 2)?;
                let trace = record.then(|| LayerTrace::Conv { input: x.clone() });
                Ok((y, trace))
            }
            Layer::InstanceNorm { name, .. } => {
                let gain = params.value(&format!("{name}.gain"))?;
                let offset = params.value(&format!("{name}.offset"))?;
                let (y, cache) = ops::instance_norm(x, gain, offset, T::of(DEFAULT_NORM_EPS))?;
                Ok((y, record.then_some(LayerTrace::Norm(cache))))
            }
            Layer::Act(kind) => {
                let y = ops::activation(x, *kind);
                let trace = record.then(|| LayerTrace::Act {
                    input: x.clone(),
                    output: y.clone(),
                });
                Ok((y, trace))
            }
        }
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &mut ParamSet<T>,
        trace: &LayerTrace<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        match (self, trace) {
            (
                Layer::Conv {
                    name,
                    cin,
                    cout,
                    k,
                    stride,
                    padding,
                    bias,
                },
                LayerTrace::Conv { input },
            ) => {
                let p = params.get_mut(&format!("{name}.weight"))?;
                let grad_in = ops::conv2d_backward(
                    input,
                    &p.value,
                    [*cout, *cin, *k, *k],
                    *stride,
                    *padding,
                    grad_out,
                    &mut p.grad,
                )?;
                if *bias {
                    ops::conv2d_bias_backward(grad_out, &mut params.get_mut(&format!("{name}.bias"))?.grad)?;
                }
                Ok(grad_in)
            }
            (
                Layer::UpConv {
                    name,
                    cin,
                    cout,
                    k,
                    bias,
                },
                LayerTrace::Conv { input },
            ) => {
                let p = params.get_mut(&format!("{name}.weight"))?;
                let grad_in = ops::upsample_conv_backward(input, &p.value, [*cout, *cin, *k, *k], 2, grad_out, &mut p.grad)?;
                if *bias {
                    ops::conv2d_bias_backward(grad_out, &mut params.get_mut(&format!("{name}.bias"))?.grad)?;
                }
                Ok(grad_in)
            }
            (Layer::InstanceNorm { name, channels }, LayerTrace::Norm(cache)) => {
                let gain = params.value(&format!("{name}.gain"))?.to_vec();
                let mut grad_gain = vec![T::zero(); *channels];
                let mut grad_offset = vec![T::zero(); *channels];
                let grad_in = ops::instance_norm_backward(cache, &gain, grad_out, &mut grad_gain, &mut grad_offset)?;
                for (g, d) in params.get_mut(&format!("{name}.gain"))?.grad.iter_mut().zip(grad_gain) {
                    *g += d;
                }
                for (g, d) in params.get_mut(&format!("{name}.offset"))?.grad.iter_mut().zip(grad_offset) {
                    *g += d;
                }
                Ok(grad_in)
            }
            (Layer::Act(kind), LayerTrace::Act { input, output }) => ops::activation_backward(input, output, *kind, grad_out),
            (layer, _) => Err(crate::error::Error::InvalidArgument(format!(
                "trace does not belong to layer {layer:?}"
            ))),
        }
    }
}

/// Layers applied in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn params(&self) -> Vec<ParamSpec> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    /// Allocate and initialize this network's parameters.
    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        init_params(&self.params(), seed)
    }
}

/// Allocate parameters in declaration order from one seeded stream.
pub fn init_params(specs: &[ParamSpec], seed: u64) -> Result<ParamSet> {
    let mut init = Initializer::new(seed);
    let mut ps = ParamSet::new();
    for spec in specs {
        let values = init.fill(spec.init, spec.len());
        ps.insert(spec.name.clone(), spec.shape.clone(), values)?;
    }
    Ok(ps)
}

impl Differentiable for Sequential {
    type Trace<T: Scalar> = Vec<LayerTrace<T>>;

    fn forward_traced<T: Scalar>(&self, params: &ParamSet<T>, input: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<LayerTrace<T>>)> {
        let mut x = input.clone();
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, t) = layer.forward(params, &x, true)?;
            traces.push(t.expect("recording requested"));
            x = y;
        }
        Ok((x, traces))
    }

    fn backward<T: Scalar>(&self, params: &mut ParamSet<T>, trace: &Vec<LayerTrace<T>>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut g = grad_out.clone();
        for (layer, t) in self.layers.iter().zip(trace).rev() {
            g = layer.backward(params, t, &g)?;
        }
        Ok(g)
    }

    fn forward<T: Scalar>(&self, params: &ParamSet<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(params, &x, false)?.0;
        }
        Ok(x)
    }
}
