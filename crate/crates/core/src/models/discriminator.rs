use crate::compute::layers::{Layer, Sequential};
use crate::compute::ops::{conv_output_size, Activation};
use crate::compute::params::ParamSet;
use crate::error::Result;
use crate::models::spec::{DiscriminatorSpec, NormKind};

const LEAKY: Activation = Activation::LeakyRelu(Activation::DEFAULT_LEAKY_SLOPE);

/// PatchGAN discriminator producing a map of raw logits, one per receptive
/// field patch. The sigmoid lives in the loss.
pub fn discriminator_network(spec: &DiscriminatorSpec) -> Result<Sequential> {
    spec.validate()?;
    let normed = spec.norm == NormKind::Instance;
    let k = spec.kernel;
    let mut layers = Vec::new();
    let mut cin = spec.in_channels;
    for i in 0..=spec.layers {
        let cout = spec.channels(i);
        let stride = if i < spec.layers { 2 } else { 1 };
        let norm_here = normed && i > 0;
        layers.push(Layer::Conv {
            name: format!("layer{i}.conv"),
            cin,
            cout,
            k,
            stride,
            padding: 1,
            bias: !norm_here,
        });
        if norm_here {
            layers.push(Layer::InstanceNorm {
                name: format!("layer{i}.norm"),
                channels: cout,
            });
        }
        layers.push(Layer::Act(LEAKY));
        cin = cout;
    }
    layers.push(Layer::Conv {
        name: "head.conv".into(),
        cin,
        cout: 1,
        k,
        stride: 1,
        padding: 1,
        bias: true,
    });
    Ok(Sequential::new(layers))
}

/// Build a discriminator and its freshly initialized parameters.
pub fn build_discriminator(spec: &DiscriminatorSpec, seed: u64) -> Result<(Sequential, ParamSet)> {
    let net = discriminator_network(spec)?;
    let params = net.init_params(seed)?;
    Ok((net, params))
}

/// Spatial size of the patch map for a square input of side `input`.
pub fn patch_map_size(spec: &DiscriminatorSpec, input: usize) -> Option<usize> {
    let mut size = input;
    for _ in 0..spec.layers {
        size = conv_output_size(size, spec.kernel, 2, 1)?;
    }
    size = conv_output_size(size, spec.kernel, 1, 1)?;
    conv_output_size(size, spec.kernel, 1, 1)
}
