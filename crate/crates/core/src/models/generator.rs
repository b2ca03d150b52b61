use crate::compute::layers::{init_params, Differentiable, Layer, LayerTrace, ParamSpec, Sequential};
use crate::compute::ops::{concat_channels, split_channels, Activation};
use crate::compute::params::ParamSet;
use crate::compute::scalar::Scalar;
use crate::compute::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::models::spec::{GeneratorSpec, NormKind};

/// U-Net generator: a full-resolution stem, stride-2 encoder convolutions,
/// a decoder of upsample-convolutions with skip concatenation at every
/// level, and a tanh head.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    spec: GeneratorSpec,
    stem: Sequential,
    /// `downs[l - 1]` produces level `l`.
    downs: Vec<Sequential>,
    /// `ups[l]` produces the decoder features at level `l`.
    ups: Vec<Sequential>,
    head: Sequential,
}

pub struct GeneratorTrace<T> {
    stem: Vec<LayerTrace<T>>,
    downs: Vec<Vec<LayerTrace<T>>>,
    ups: Vec<Vec<LayerTrace<T>>>,
    head: Vec<LayerTrace<T>>,
}

const LEAKY: Activation = Activation::LeakyRelu(Activation::DEFAULT_LEAKY_SLOPE);

impl Generator {
    pub fn new(spec: GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let levels = spec.levels;
        let normed = spec.norm == NormKind::Instance;
        let k = spec.kernel;

        let stem = Sequential::new(vec![
            Layer::Conv {
                name: "stem.conv".into(),
                cin: spec.in_channels,
                cout: spec.channels(0),
                k,
                stride: 1,
                padding: k / 2,
                bias: true,
            },
            Layer::Act(LEAKY),
        ]);

        let mut downs = Vec::with_capacity(levels - 1);
        for l in 1..levels {
            // Instance statistics over a single pixel are degenerate.
            let norm_here = normed && spec.size_at(l) > 1;
            let mut layers = vec![Layer::Conv {
                name: format!("down{l}.conv"),
                cin: spec.channels(l - 1),
                cout: spec.channels(l),
                k: spec.down_kernel,
                stride: 2,
                padding: spec.down_padding(),
                bias: !norm_here,
            }];
            if norm_here {
                layers.push(Layer::InstanceNorm {
                    name: format!("down{l}.norm"),
                    channels: spec.channels(l),
                });
            }
            layers.push(Layer::Act(LEAKY));
            downs.push(Sequential::new(layers));
        }

        let mut ups = Vec::with_capacity(levels - 1);
        for l in 0..levels - 1 {
            let cin = if l == levels - 2 {
                spec.channels(levels - 1)
            } else {
                2 * spec.channels(l + 1)
            };
            let mut layers = vec![Layer::UpConv {
                name: format!("up{l}.conv"),
                cin,
                cout: spec.channels(l),
                k,
                bias: !normed,
            }];
            if normed {
                layers.push(Layer::InstanceNorm {
                    name: format!("up{l}.norm"),
                    channels: spec.channels(l),
                });
            }
            layers.push(Layer::Act(Activation::Relu));
            ups.push(Sequential::new(layers));
        }

        let head = Sequential::new(vec![
            Layer::Conv {
                name: "head.conv".into(),
                cin: 2 * spec.channels(0),
                cout: spec.out_channels,
                k,
                stride: 1,
                padding: k / 2,
                bias: true,
            },
            Layer::Act(Activation::Tanh),
        ]);

        Ok(Generator {
            spec,
            stem,
            downs,
            ups,
            head,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Every parameter this network declares, in initialization order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut v = self.stem.params();
        v.extend(self.downs.iter().flat_map(Sequential::params));
        v.extend(self.ups.iter().rev().flat_map(Sequential::params));
        v.extend(self.head.params());
        v
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        init_params(&self.param_specs(), seed)
    }

    fn check_input<T: Scalar>(&self, x: &Tensor4<T>) -> Result<()> {
        let s = x.shape();
        if s.c != self.spec.in_channels || s.h != self.spec.input_size || s.w != self.spec.input_size {
            return Err(Error::shape(
                "generator",
                format!(
                    "expected (N, {}, {}, {}), got {s}",
                    self.spec.in_channels, self.spec.input_size, self.spec.input_size
                ),
            ));
        }
        Ok(())
    }

    fn run<T: Scalar>(&self, params: &ParamSet<T>, x: &Tensor4<T>, mut trace: Option<&mut GeneratorTrace<T>>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let run_block = |block: &Sequential, input: &Tensor4<T>, sink: Option<&mut Vec<Vec<LayerTrace<T>>>>| -> Result<Tensor4<T>> {
            match sink {
                Some(s) => {
                    let (y, t) = block.forward_traced(params, input)?;
                    s.push(t);
                    Ok(y)
                }
                None => block.forward(params, input),
            }
        };

        let mut stem_sink = Vec::new();
        let mut encoder = Vec::with_capacity(self.spec.levels);
        encoder.push(run_block(&self.stem, x, trace.is_some().then_some(&mut stem_sink))?);
        let mut down_sink = Vec::new();
        for down in &self.downs {
            let next = run_block(down, encoder.last().expect("stem output"), trace.is_some().then_some(&mut down_sink))?;
            encoder.push(next);
        }

        let mut up_sink = Vec::new();
        let mut d = encoder.pop().expect("bottleneck");
        for l in (0..self.spec.levels - 1).rev() {
            let u = run_block(&self.ups[l], &d, trace.is_some().then_some(&mut up_sink))?;
            d = concat_channels(&u, &encoder[l])?;
        }
        let mut head_sink = Vec::new();
        let out = run_block(&self.head, &d, trace.is_some().then_some(&mut head_sink))?;

        if let Some(t) = trace.as_deref_mut() {
            t.stem = stem_sink.pop().unwrap_or_default();
            t.downs = down_sink;
            // Decoder blocks ran deepest first; store them indexed by level.
            up_sink.reverse();
            t.ups = up_sink;
            t.head = head_sink.pop().unwrap_or_default();
        }
        Ok(out)
    }
}

impl Differentiable for Generator {
    type Trace<T: Scalar> = GeneratorTrace<T>;

    fn forward_traced<T: Scalar>(&self, params: &ParamSet<T>, input: &Tensor4<T>) -> Result<(Tensor4<T>, GeneratorTrace<T>)> {
        let mut trace = GeneratorTrace {
            stem: Vec::new(),
            downs: Vec::new(),
            ups: Vec::new(),
            head: Vec::new(),
        };
        let out = self.run(params, input, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn backward<T: Scalar>(&self, params: &mut ParamSet<T>, trace: &GeneratorTrace<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let levels = self.spec.levels;
        let mut grad_enc: Vec<Option<Tensor4<T>>> = vec![None; levels];
        let accumulate = |slot: &mut Option<Tensor4<T>>, g: Tensor4<T>| -> Result<()> {
            match slot {
                Some(acc) => acc.add_assign(&g),
                None => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        };

        let mut gd = self.head.backward(params, &trace.head, grad_out)?;
        for l in 0..levels - 1 {
            let (gu, ge) = split_channels(&gd, self.spec.channels(l))?;
            accumulate(&mut grad_enc[l], ge)?;
            gd = self.ups[l].backward(params, &trace.ups[l], &gu)?;
        }
        accumulate(&mut grad_enc[levels - 1], gd)?;

        for l in (1..levels).rev() {
            let g = grad_enc[l].take().expect("every encoder level receives a gradient");
            let prev = self.downs[l - 1].backward(params, &trace.downs[l - 1], &g)?;
            accumulate(&mut grad_enc[l - 1], prev)?;
        }
        let g0 = grad_enc[0].take().expect("stem gradient");
        self.stem.backward(params, &trace.stem, &g0)
    }

    fn forward<T: Scalar>(&self, params: &ParamSet<T>, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.run(params, input, None)
    }
}

/// Build a generator and its freshly initialized parameters.
pub fn build_generator(spec: GeneratorSpec, seed: u64) -> Result<(Generator, ParamSet)> {
    let g = Generator::new(spec)?;
    let params = g.init_params(seed)?;
    Ok((g, params))
}
