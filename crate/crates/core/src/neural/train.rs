//! Adam-driven WGAN-GP training loop.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psycho::{bark_partition, tonality, PsychoConfig, PsychoModel};
use crate::MdctTensor;

use super::checkpoint::Checkpoint;
use super::graph::{Graph, Var};
use super::loss::{noise_input, wgan_gp_losses, GanLossConfig};
use super::model::{discriminator, generator, ModelConfig, Params};
use super::tensor::Tensor4;

pub const LOSS_CSV_HEADER: &str = "iteration,loss_D,loss_G,wasserstein_estimate,gen_tonality";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub gp_lambda: f64,
    pub drift_epsilon: f64,
    pub batch_size: usize,
    /// Psychoacoustic noise scale `c` applied to real and fake inputs.
    pub noise_scale: f64,
    pub rng_seed: u64,
    pub iterations: usize,
    /// Write an intermediate checkpoint every this many iterations (0: final only).
    pub checkpoint_every: usize,
    /// Model-block depths whose parameters are not updated.
    pub frozen_blocks: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            adam_epsilon: 1e-8,
            n_critic: 2,
            gp_lambda: 10.0,
            drift_epsilon: 0.001,
            batch_size: 8,
            noise_scale: 1.0,
            rng_seed: 0,
            iterations: 2000,
            checkpoint_every: 0,
            frozen_blocks: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        for (name, v) in [
            ("gp_lambda", self.gp_lambda),
            ("drift_epsilon", self.drift_epsilon),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.n_critic == 0 || self.batch_size == 0 {
            return Err(Error::Config("n_critic and batch_size must be >= 1".into()));
        }
        Ok(())
    }

    fn loss(&self) -> GanLossConfig {
        GanLossConfig {
            gp_lambda: self.gp_lambda,
            drift_epsilon: self.drift_epsilon,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &Params, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .entries()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update; entries with `frozen[i]` set are left alone.
    pub fn step(&mut self, params: &mut Params, grads: &[Tensor4], frozen: &[bool]) {
        self.t = self.t.saturating_add(1);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, ((_, p), g)) in params.entries_mut().iter_mut().zip(grads).enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                *w -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Per-iteration log row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub iteration: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub wasserstein: f64,
    pub gen_tonality: f64,
}

impl StepStats {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.loss_d, self.loss_g, self.wasserstein, self.gen_tonality
        )
    }
}

pub fn loss_csv(log: &[StepStats]) -> String {
    let mut s = String::from(LOSS_CSV_HEADER);
    s.push('\n');
    for r in log {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

/// Mean per-block tonality over every item and channel of a batch.
pub fn batch_tonality(x: &Tensor4) -> f64 {
    let [b, m, n, c] = x.shape();
    let mut sum = 0.0;
    let mut block = vec![0.0; n];
    for bi in 0..b {
        for mi in 0..m {
            for ci in 0..c {
                for (k, v) in block.iter_mut().enumerate() {
                    *v = x.at(bi, mi, k, ci);
                }
                sum += tonality(&block);
            }
        }
    }
    sum / (b * m * c) as f64
}

fn grads_of(
    g: &mut Graph,
    loss: Var,
    wrt: &[Var],
    iteration: usize,
    what: &str,
) -> Result<Vec<Tensor4>> {
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Divergence {
            iteration,
            what: format!("{what} = {value}"),
        });
    }
    let grads = g.grad(loss, wrt)?;
    let out: Vec<Tensor4> = grads.iter().map(|&v| g.value(v).clone()).collect();
    if out.iter().any(|t| !t.is_finite()) {
        return Err(Error::Divergence {
            iteration,
            what: format!("non-finite gradient of {what}"),
        });
    }
    Ok(out)
}

/// Training state: both networks, optimizers and the single RNG stream.
pub struct Trainer {
    model: ModelConfig,
    config: TrainConfig,
    psycho: PsychoModel,
    data: Vec<Tensor4>,
    sample_rate_hz: u32,
    generator: Params,
    discriminator: Params,
    adam_g: Adam,
    adam_d: Adam,
    rng: ChaCha8Rng,
    iteration: usize,
    frozen_g: Vec<bool>,
    frozen_d: Vec<bool>,
}

fn frozen_mask(params: &Params, blocks: &[usize]) -> Vec<bool> {
    params
        .entries()
        .iter()
        .map(|(n, _)| blocks.iter().any(|d| n.starts_with(&format!("block{d}."))))
        .collect()
}

impl Trainer {
    pub fn new(
        dataset: &[MdctTensor],
        model: ModelConfig,
        config: TrainConfig,
        psycho: PsychoConfig,
    ) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        let first = dataset
            .first()
            .ok_or_else(|| Error::Config("training dataset is empty".into()))?;
        let (m, n, c) = model.output_shape();
        let sample_rate_hz = first.sample_rate_hz();
        let mut data = Vec::with_capacity(dataset.len());
        for (i, t) in dataset.iter().enumerate() {
            if (t.blocks(), t.bands(), t.channels()) != (m, n, c) {
                return Err(Error::shape(format!(
                    "dataset item {i} is {}x{}x{}, model output is {m}x{n}x{c}",
                    t.blocks(),
                    t.bands(),
                    t.channels()
                )));
            }
            data.push(Tensor4::new([1, m, n, c], t.amplitudes().to_vec())?);
        }
        let psycho = PsychoModel::new(bark_partition(sample_rate_hz, n)?, psycho);
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let generator = Params::init(&model.generator_params(), &mut rng);
        let discriminator = Params::init(&model.discriminator_params(), &mut rng);
        let adam = |p: &Params| {
            Adam::new(
                p,
                config.learning_rate,
                config.adam_beta1,
                config.adam_beta2,
                config.adam_epsilon,
            )
        };
        Ok(Self {
            frozen_g: frozen_mask(&generator, &config.frozen_blocks),
            frozen_d: frozen_mask(&discriminator, &config.frozen_blocks),
            adam_g: adam(&generator),
            adam_d: adam(&discriminator),
            model,
            config,
            psycho,
            data,
            sample_rate_hz,
            generator,
            discriminator,
            rng,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn generator_params(&self) -> &Params {
        &self.generator
    }

    pub fn discriminator_params(&self) -> &Params {
        &self.discriminator
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            sample_rate_hz: self.sample_rate_hz,
            iteration: self.iteration as u64,
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
        }
    }

    fn real_batch(&mut self) -> Result<Tensor4> {
        let items: Vec<Tensor4> = (0..self.config.batch_size)
            .map(|_| self.data[self.rng.random_range(0..self.data.len())].clone())
            .collect();
        Tensor4::stack(&items)
    }

    fn latent(&mut self) -> Tensor4 {
        Tensor4::randn(
            [self.config.batch_size, 1, 1, self.model.latent_dim],
            1.0,
            &mut self.rng,
        )
    }

    fn generate(&self, z: Tensor4) -> Result<Tensor4> {
        let mut g = Graph::new();
        let p = self.generator.bind(&mut g);
        let z = g.leaf(z);
        let y = generator(&mut g, &self.model, &p, z)?;
        Ok(g.value(y).clone())
    }

    /// `n_critic` critic updates followed by one generator update.
    pub fn step(&mut self) -> Result<StepStats> {
        let it = self.iteration;
        let (mut loss_d, mut wasserstein) = (0.0, 0.0);
        for _ in 0..self.config.n_critic {
            let real = self.real_batch()?;
            let z = self.latent();
            let fake = self.generate(z)?;
            let mut g = Graph::new();
            let dp = self.discriminator.bind(&mut g);
            let real = g.leaf(real);
            let fake = g.leaf(fake);
            let real = noise_input(
                &mut g,
                real,
                &self.psycho,
                self.config.noise_scale,
                &mut self.rng,
            )?;
            let fake = noise_input(
                &mut g,
                fake,
                &self.psycho,
                self.config.noise_scale,
                &mut self.rng,
            )?;
            let model = &self.model;
            let losses = wgan_gp_losses(
                &mut g,
                real,
                fake,
                |g, x| discriminator(g, model, &dp, x),
                &self.config.loss(),
                &mut self.rng,
            )?;
            let grads = grads_of(&mut g, losses.loss_d, dp.vars(), it, "loss_D")?;
            loss_d = g.value(losses.loss_d).item();
            wasserstein = g.value(losses.wasserstein).item();
            self.adam_d
                .step(&mut self.discriminator, &grads, &self.frozen_d);
        }

        let z = self.latent();
        let mut g = Graph::new();
        let gp = self.generator.bind(&mut g);
        let dp = self.discriminator.bind(&mut g);
        let z = g.leaf(z);
        let fake = generator(&mut g, &self.model, &gp, z)?;
        let gen_tonality = batch_tonality(g.value(fake));
        let noisy = noise_input(
            &mut g,
            fake,
            &self.psycho,
            self.config.noise_scale,
            &mut self.rng,
        )?;
        let score = discriminator(&mut g, &self.model, &dp, noisy)?;
        let mean = g.mean_all(score);
        let loss_g = g.scale(mean, -1.0);
        let grads = grads_of(&mut g, loss_g, gp.vars(), it, "loss_G")?;
        let loss_g = g.value(loss_g).item();
        self.adam_g
            .step(&mut self.generator, &grads, &self.frozen_g);

        self.iteration += 1;
        Ok(StepStats {
            iteration: it,
            loss_d,
            loss_g,
            wasserstein,
            gen_tonality,
        })
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepStats>,
}

/// Runs `config.iterations` steps. When `out_dir` is given, writes
/// `losses.csv`, `checkpoint.mp3n` and any periodic `checkpoint_<iter>.mp3n`.
pub fn train(
    dataset: &[MdctTensor],
    model: ModelConfig,
    config: TrainConfig,
    psycho: PsychoConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    train_with_progress(dataset, model, config, psycho, out_dir, |_| {})
}

/// [`train`] with a callback after every iteration.
pub fn train_with_progress(
    dataset: &[MdctTensor],
    model: ModelConfig,
    config: TrainConfig,
    psycho: PsychoConfig,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&StepStats),
) -> Result<TrainOutcome> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let every = config.checkpoint_every;
    let iterations = config.iterations;
    let mut trainer = Trainer::new(dataset, model, config, psycho)?;
    let mut log = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let stats = trainer.step()?;
        progress(&stats);
        log.push(stats);
        if let Some(dir) = out_dir {
            let done = trainer.iteration();
            if every > 0 && done % every == 0 && done < iterations {
                trainer
                    .checkpoint()
                    .write(dir.join(format!("checkpoint_{done:06}.mp3n")))?;
            }
        }
    }
    let checkpoint = trainer.checkpoint();
    if let Some(dir) = out_dir {
        fs::write(dir.join("losses.csv"), loss_csv(&log))?;
        checkpoint.write(dir.join("checkpoint.mp3n"))?;
    }
    Ok(TrainOutcome { checkpoint, log })
}
