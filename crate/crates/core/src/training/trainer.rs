use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compute::layers::{Differentiable, Sequential};
use crate::compute::ops::{concat_channels, split_channels};
use crate::compute::params::{adam_step, AdamConfig, OptimState, ParamSet};
use crate::compute::tensor::Tensor4;
use crate::datapipe::preprocess::{augment, Dihedral};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_loss, cycle_loss, cyclegan_objective, identity_loss, l1_loss, pix2pix_objective, GanMode, LossBreakdown,
    LossComponents, Side,
};
use crate::metrics::MetricReport;
use crate::models::discriminator::discriminator_network;
use crate::models::generator::Generator;
use crate::models::storage::TrainerKind;
use crate::training::checkpoint::{checkpoint_file_name, Checkpoint, Manifest, NetworkState, FORMAT_VERSION};
use crate::training::config::TrainConfig;
use crate::training::context::RunContext;
use crate::training::pool::ImagePool;
use crate::training::runlog::{LogRecord, RunLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub g_steps: usize,
    pub d_steps: usize,
    pub seconds: f64,
    /// Mean over the epoch's steps.
    pub losses: LossBreakdown,
    #[serde(skip)]
    pub step_losses: Vec<LossBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub seed: u64,
    pub fold: Option<usize>,
    pub epochs: Vec<EpochRecord>,
    pub checkpoints: Vec<PathBuf>,
    pub validation: Option<MetricReport>,
    pub seconds: f64,
}

impl RunRecord {
    pub fn epoch_losses(&self) -> Vec<LossBreakdown> {
        self.epochs.iter().map(|e| e.losses).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("run record serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// A finished run and the network state after its last epoch.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub record: RunRecord,
    pub state: Checkpoint,
}

struct Slot<N> {
    net: N,
    params: ParamSet,
    optim: OptimState,
}

impl<N: Differentiable> Slot<N> {
    fn new(net: N, params: ParamSet) -> Self {
        let optim = OptimState::for_params(&params);
        Slot { net, params, optim }
    }

    fn update(&mut self, adam: &AdamConfig) -> Result<()> {
        adam_step(&mut self.params, &mut self.optim, adam)
    }

    fn state(&self) -> NetworkState {
        let mut params = self.params.clone();
        params.zero_grad();
        NetworkState {
            params,
            optim: self.optim.clone(),
        }
    }
}

fn generator_slot(cfg: &TrainConfig, ctx: &RunContext, name: &str) -> Result<Slot<Generator>> {
    let g = Generator::new(cfg.generator())?;
    let p = g.init_params(ctx.init_seed(name))?;
    Ok(Slot::new(g, p))
}

fn discriminator_slot(cfg: &TrainConfig, ctx: &RunContext, name: &str) -> Result<Slot<Sequential>> {
    let d = discriminator_network(&cfg.discriminator())?;
    let p = d.init_params(ctx.init_seed(name))?;
    Ok(Slot::new(d, p))
}

/// One discriminator update on real and (detached) fake inputs. Returns the loss.
fn discriminator_update(d: &mut Slot<Sequential>, real: &Tensor4, fake: &Tensor4, mode: GanMode, adam: &AdamConfig) -> Result<f64> {
    d.params.zero_grad();
    let (lr, tr) = d.net.forward_traced(&d.params, real)?;
    let (lf, tf) = d.net.forward_traced(&d.params, fake)?;
    let loss = adversarial_loss(Some(&lr), &lf, Side::Discriminator, mode)?;
    d.net.backward(&mut d.params, &tr, loss.grad_real.as_ref().expect("discriminator side"))?;
    d.net.backward(&mut d.params, &tf, &loss.grad_fake)?;
    d.update(adam)?;
    Ok(loss.value)
}

/// Generator-side adversarial loss and its gradient with respect to the
/// discriminator input. The discriminator's own gradients are discarded.
fn generator_adversarial(d: &mut Slot<Sequential>, fake: &Tensor4, mode: GanMode) -> Result<(f64, Tensor4)> {
    let (logits, trace) = d.net.forward_traced(&d.params, fake)?;
    let loss = adversarial_loss(None, &logits, Side::Generator, mode)?;
    let grad = d.net.backward(&mut d.params, &trace, &loss.grad_fake)?;
    d.params.zero_grad();
    Ok((loss.value, grad))
}

fn scaled(t: &Tensor4, factor: f64) -> Tensor4 {
    let mut t = t.clone();
    t.scale(factor as f32);
    t
}

trait Loop {
    fn steps_per_epoch(&self) -> usize;
    fn begin_epoch(&mut self);
    fn step(&mut self, step: usize, adam: &AdamConfig) -> Result<LossBreakdown>;
    fn networks(&self) -> BTreeMap<String, NetworkState>;
    /// Discriminator updates per step.
    fn d_updates(&self) -> usize;
}

fn check_data(cfg: &TrainConfig, t: &Tensor4, channels: usize) -> Result<()> {
    let s = t.shape();
    let g = cfg.generator();
    if s.n != 1 || s.c != channels || s.h != g.input_size || s.w != g.input_size {
        return Err(Error::shape(
            "training data",
            format!("expected (1, {channels}, {n}, {n}), got {s}", n = g.input_size),
        ));
    }
    Ok(())
}

fn batch_indices(step: usize, batch: usize, total: usize) -> std::ops::Range<usize> {
    step * batch..((step + 1) * batch).min(total)
}

struct Pix2Pix<'a> {
    cfg: &'a TrainConfig,
    data: &'a [(Tensor4, Tensor4)],
    order: Vec<usize>,
    rng: ChaCha8Rng,
    g: Slot<Generator>,
    d: Slot<Sequential>,
}

impl Loop for Pix2Pix<'_> {
    fn steps_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.cfg.batch_size)
    }

    fn begin_epoch(&mut self) {
        self.order.shuffle(&mut self.rng);
    }

    fn step(&mut self, step: usize, adam: &AdamConfig) -> Result<LossBreakdown> {
        let mode = self.cfg.gan_mode();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for j in batch_indices(step, self.cfg.batch_size, self.data.len()) {
            let (x, y) = &self.data[self.order[j]];
            let (x, y) = if self.cfg.augment {
                augment(x, y, &mut self.rng)?
            } else {
                (x.clone(), y.clone())
            };
            xs.push(x);
            ys.push(y);
        }
        let (x, y) = (Tensor4::stack(&xs)?, Tensor4::stack(&ys)?);

        let (fake, trace) = self.g.net.forward_traced(&self.g.params, &x)?;
        let fake_pair = concat_channels(&x, &fake)?;
        let adversarial_d = discriminator_update(&mut self.d, &concat_channels(&x, &y)?, &fake_pair, mode, adam)?;

        let (adversarial_g, grad_pair) = generator_adversarial(&mut self.d, &fake_pair, mode)?;
        let (_, mut grad_fake) = split_channels(&grad_pair, x.shape().c)?;
        let l1 = l1_loss(&fake, &y)?;
        grad_fake.add_assign(&scaled(&l1.grad, self.cfg.weights.lambda_l1))?;
        self.g.params.zero_grad();
        self.g.net.backward(&mut self.g.params, &trace, &grad_fake)?;
        self.g.update(adam)?;

        let c = LossComponents {
            adversarial_g,
            adversarial_d,
            l1: l1.value,
            ..Default::default()
        };
        Ok(pix2pix_objective(&c, &self.cfg.weights))
    }

    fn networks(&self) -> BTreeMap<String, NetworkState> {
        BTreeMap::from([("G".to_string(), self.g.state()), ("D".to_string(), self.d.state())])
    }

    fn d_updates(&self) -> usize {
        1
    }
}

/// Domain X is the source (`a`), Y the target (`b`). G maps X to Y, F maps
/// Y to X, DX judges X and DY judges Y.
struct CycleGan<'a> {
    cfg: &'a TrainConfig,
    a: &'a [Tensor4],
    b: &'a [Tensor4],
    order_a: Vec<usize>,
    order_b: Vec<usize>,
    rng: ChaCha8Rng,
    pool_x: ImagePool,
    pool_y: ImagePool,
    g: Slot<Generator>,
    f: Slot<Generator>,
    dx: Slot<Sequential>,
    dy: Slot<Sequential>,
}

impl CycleGan<'_> {
    fn draw(&mut self, domain: &[Tensor4], index: usize) -> Result<Tensor4> {
        let t = &domain[index];
        if self.cfg.augment {
            Dihedral::sample(&mut self.rng).apply(t)
        } else {
            Ok(t.clone())
        }
    }
}

impl Loop for CycleGan<'_> {
    fn steps_per_epoch(&self) -> usize {
        self.a.len().max(self.b.len()).div_ceil(self.cfg.batch_size)
    }

    fn begin_epoch(&mut self) {
        self.order_a.shuffle(&mut self.rng);
        self.order_b.shuffle(&mut self.rng);
    }

    fn step(&mut self, step: usize, adam: &AdamConfig) -> Result<LossBreakdown> {
        let mode = self.cfg.gan_mode();
        let w = self.cfg.weights;
        let total = self.a.len().max(self.b.len());
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for j in batch_indices(step, self.cfg.batch_size, total) {
            let ia = self.order_a[j % self.a.len()];
            let ib = self.order_b[j % self.b.len()];
            xs.push(self.draw(self.a, ia)?);
            ys.push(self.draw(self.b, ib)?);
        }
        let (x, y) = (Tensor4::stack(&xs)?, Tensor4::stack(&ys)?);

        let (fake_y, t_gx) = self.g.net.forward_traced(&self.g.params, &x)?;
        let (rec_x, t_fgx) = self.f.net.forward_traced(&self.f.params, &fake_y)?;
        let (fake_x, t_fy) = self.f.net.forward_traced(&self.f.params, &y)?;
        let (rec_y, t_gfy) = self.g.net.forward_traced(&self.g.params, &fake_x)?;

        let pooled_y = self.pool_y.query(&fake_y)?;
        let pooled_x = self.pool_x.query(&fake_x)?;
        let d_y = discriminator_update(&mut self.dy, &y, &pooled_y, mode, adam)?;
        let d_x = discriminator_update(&mut self.dx, &x, &pooled_x, mode, adam)?;

        let (adv_y, mut grad_fake_y) = generator_adversarial(&mut self.dy, &fake_y, mode)?;
        let (adv_x, mut grad_fake_x) = generator_adversarial(&mut self.dx, &fake_x, mode)?;
        let cyc = cycle_loss(&x, &rec_x, &y, &rec_y)?;

        self.g.params.zero_grad();
        self.f.params.zero_grad();
        grad_fake_y.add_assign(&self.f.net.backward(&mut self.f.params, &t_fgx, &scaled(&cyc.grad_first, w.lambda_cyc))?)?;
        grad_fake_x.add_assign(&self.g.net.backward(&mut self.g.params, &t_gfy, &scaled(&cyc.grad_second, w.lambda_cyc))?)?;
        self.g.net.backward(&mut self.g.params, &t_gx, &grad_fake_y)?;
        self.f.net.backward(&mut self.f.params, &t_fy, &grad_fake_x)?;

        let mut identity = 0.0;
        if w.lambda_id > 0.0 {
            let (g_y, t_gy) = self.g.net.forward_traced(&self.g.params, &y)?;
            let (f_x, t_fx) = self.f.net.forward_traced(&self.f.params, &x)?;
            let id = identity_loss(&g_y, &y, &f_x, &x)?;
            self.g.net.backward(&mut self.g.params, &t_gy, &scaled(&id.grad_first, w.lambda_id))?;
            self.f.net.backward(&mut self.f.params, &t_fx, &scaled(&id.grad_second, w.lambda_id))?;
            identity = id.value;
        }
        self.g.update(adam)?;
        self.f.update(adam)?;

        let c = LossComponents {
            adversarial_g: adv_x + adv_y,
            adversarial_d: d_x + d_y,
            cycle: cyc.value,
            identity,
            ..Default::default()
        };
        Ok(cyclegan_objective(&c, &w))
    }

    fn networks(&self) -> BTreeMap<String, NetworkState> {
        BTreeMap::from([
            ("G".to_string(), self.g.state()),
            ("F".to_string(), self.f.state()),
            ("DX".to_string(), self.dx.state()),
            ("DY".to_string(), self.dy.state()),
        ])
    }

    fn d_updates(&self) -> usize {
        2
    }
}

fn drive(cfg: &TrainConfig, ctx: &RunContext, mut lp: impl Loop) -> Result<TrainOutcome> {
    let started = Instant::now();
    let mut log = match ctx.log_path() {
        Some(p) => RunLog::open(&p)?,
        None => RunLog::disabled(),
    };
    let ckpt_dir = ctx.checkpoint_dir();
    if let Some(d) = &ckpt_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut record = RunRecord {
        config: cfg.clone(),
        seed: ctx.seed,
        fold: None,
        epochs: Vec::with_capacity(cfg.epochs),
        checkpoints: Vec::new(),
        validation: None,
        seconds: 0.0,
    };
    let mut last = None;
    let steps = lp.steps_per_epoch();

    for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        let adam = AdamConfig {
            lr: cfg.lr_at(epoch),
            ..cfg.adam()
        };
        lp.begin_epoch();
        let mut step_losses = Vec::with_capacity(steps);
        for step in 0..steps {
            let abort = |detail: String| Error::Training { epoch, step, detail };
            let losses = lp.step(step, &adam).map_err(|e| abort(e.to_string()))?;
            if !losses.total.is_finite() || !losses.adversarial_d.is_finite() {
                return Err(abort("non-finite loss".into()));
            }
            log.append(&LogRecord::Step { epoch, step, losses })?;
            step_losses.push(losses);
        }
        let losses = LossBreakdown::mean(&step_losses);
        let seconds = epoch_start.elapsed().as_secs_f64();
        log.append(&LogRecord::Epoch {
            epoch,
            steps,
            seconds,
            losses,
        })?;
        record.epochs.push(EpochRecord {
            epoch,
            steps,
            g_steps: steps,
            d_steps: steps * lp.d_updates(),
            seconds,
            losses,
            step_losses,
        });

        if epoch % cfg.checkpoint_interval == 0 {
            let networks = lp.networks();
            let state = Checkpoint {
                manifest: Manifest {
                    format_version: FORMAT_VERSION,
                    trainer: cfg.trainer,
                    epoch,
                    seed: ctx.seed,
                    generator: cfg.generator(),
                    discriminator: cfg.discriminator(),
                    optimizer_steps: networks.iter().map(|(k, s)| (k.clone(), s.optim.step)).collect(),
                    losses: Some(losses),
                },
                networks,
            };
            if let Some(d) = &ckpt_dir {
                let path = d.join(checkpoint_file_name(epoch));
                state.save(&path)?;
                log.append(&LogRecord::Checkpoint {
                    epoch,
                    path: path.clone(),
                })?;
                record.checkpoints.push(path);
            }
            last = Some(state);
        }
        log.flush()?;
    }
    record.seconds = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        record,
        state: last.expect("checkpoint_interval divides epochs"),
    })
}

/// Train a Pix2Pix pair (G, D) on paired `(source, target)` tensors of
/// shape `(1, 1, S, S)`.
pub fn train_pix2pix(pairs: &[(Tensor4, Tensor4)], cfg: &TrainConfig, ctx: &RunContext) -> Result<TrainOutcome> {
    if cfg.trainer != TrainerKind::Pix2pix {
        return Err(Error::Config("train_pix2pix needs trainer = pix2pix".into()));
    }
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Dataset("no training pairs".into()));
    }
    let g_in = cfg.generator().in_channels;
    for (x, y) in pairs {
        check_data(cfg, x, g_in)?;
        check_data(cfg, y, cfg.generator().out_channels)?;
    }
    let lp = Pix2Pix {
        cfg,
        data: pairs,
        order: (0..pairs.len()).collect(),
        rng: ctx.stream("data"),
        g: generator_slot(cfg, ctx, "G")?,
        d: discriminator_slot(cfg, ctx, "D")?,
    };
    drive(cfg, ctx, lp)
}

/// Train CycleGAN networks (G, F, DX, DY) on unpaired domains.
pub fn train_cyclegan(domain_a: &[Tensor4], domain_b: &[Tensor4], cfg: &TrainConfig, ctx: &RunContext) -> Result<TrainOutcome> {
    if cfg.trainer != TrainerKind::Cyclegan {
        return Err(Error::Config("train_cyclegan needs trainer = cyclegan".into()));
    }
    cfg.validate()?;
    if domain_a.is_empty() || domain_b.is_empty() {
        return Err(Error::Dataset("both domains need at least one image".into()));
    }
    let gs = cfg.generator();
    if gs.in_channels != gs.out_channels {
        return Err(Error::Config("cycle training needs equal in/out channels".into()));
    }
    for t in domain_a.iter().chain(domain_b) {
        check_data(cfg, t, gs.in_channels)?;
    }
    let lp = CycleGan {
        cfg,
        a: domain_a,
        b: domain_b,
        order_a: (0..domain_a.len()).collect(),
        order_b: (0..domain_b.len()).collect(),
        rng: ctx.stream("data"),
        pool_x: ImagePool::new(cfg.pool_size, ctx.stream("pool/x")),
        pool_y: ImagePool::new(cfg.pool_size, ctx.stream("pool/y")),
        g: generator_slot(cfg, ctx, "G")?,
        f: generator_slot(cfg, ctx, "F")?,
        dx: discriminator_slot(cfg, ctx, "DX")?,
        dy: discriminator_slot(cfg, ctx, "DY")?,
    };
    drive(cfg, ctx, lp)
}

/// Freshly initialized networks for `cfg` under `ctx`, as training would build them.
pub fn initial_networks(cfg: &TrainConfig, ctx: &RunContext) -> Result<BTreeMap<String, ParamSet>> {
    let mut out = BTreeMap::new();
    for &name in crate::training::checkpoint::network_names(cfg.trainer) {
        let params = if crate::training::checkpoint::is_generator(name) {
            generator_slot(cfg, ctx, name)?.params
        } else {
            discriminator_slot(cfg, ctx, name)?.params
        };
        out.insert(name.to_string(), params);
    }
    Ok(out)
}
