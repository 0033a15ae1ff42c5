//! Pretraining, the Adam fine-tuning baseline, and SGLD robust training.
//!
//! Robust training samples weights from the Gibbs posterior
//! `p(w|s,z) ∝ exp(-U(w)/β)` with energy
//!
//! ```text
//! U(w) = L_{s,z}(w) - β log p(w|z),   p(w|z) = N(θ_z, Σ_z)
//! ```
//!
//! using the Langevin recursion `w ← w - η g + sqrt(2ηβ) ε`. Only the
//! quadratic part of `-log p(w|z)` depends on `w`, so the prior contributes
//! `β Σ_z^{-1} (w - θ_z)` to the gradient and the log-determinant drops out.
//! The likelihood term is the mean clipped loss of the mini-batch evaluated
//! through the wireless link.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::mi::{estimate_mi, fisher_covariance, GradientLog, MeanKind, MovingAverage};
use crate::nn::{gradient, CleanLink, FeatureLink, NetworkSpec, ParameterVector, DEFAULT_CLIP};
use crate::phy::{ChannelConfig, LinkMode, SurrogateLink, WirelessLink};
use crate::risk::{evaluate, standard_risk};

/// Independent random streams derived from one training seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Channel = 3,
    Langevin = 4,
    Evaluation = 5,
    Surrogate = 6,
}

pub fn rng_stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Mini-batch index order for one epoch.
pub fn epoch_order<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleKind {
    Constant,
    /// `η_k = η₀ (1 + k/k₀)^-0.55`, `β_k = β₀ (1 + k/k₀)^-1`.
    Polynomial { k0: f64 },
}

impl Default for ScheduleKind {
    fn default() -> Self {
        ScheduleKind::Polynomial { k0: 100.0 }
    }
}

pub const ETA_DECAY_EXPONENT: f64 = 0.55;
pub const BETA_DECAY_EXPONENT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub eta0: f64,
    pub beta0: f64,
    pub kind: ScheduleKind,
}

/// Step size and temperature at iteration `k`.
pub fn decay_step(schedule: &Schedule, k: usize) -> (f64, f64) {
    match schedule.kind {
        ScheduleKind::Constant => (schedule.eta0, schedule.beta0),
        ScheduleKind::Polynomial { k0 } => {
            let base = 1.0 + k as f64 / k0;
            (
                schedule.eta0 * base.powf(-ETA_DECAY_EXPONENT),
                schedule.beta0 * base.powf(-BETA_DECAY_EXPONENT),
            )
        }
    }
}

/// `w ← w - η g + sqrt(2ηβ) ε`; the noise is skipped entirely when `β = 0`.
pub fn sgld_step<R: Rng + ?Sized>(w: &mut [f64], g: &[f64], eta: f64, beta: f64, rng: &mut R) {
    let noise_scale = (2.0 * eta * beta).sqrt();
    for (wi, gi) in w.iter_mut().zip(g) {
        *wi -= eta * gi;
        if noise_scale > 0.0 {
            let e: f64 = rng.sample(StandardNormal);
            *wi += e * noise_scale;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    /// `Σ_z = s² I`.
    Isotropic { variance: f64 },
    /// Diagonal `Σ_z = F⁻¹/n` from per-sample clean gradients at `θ_z`.
    Fisher,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Isotropic { variance: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PriorCovariance {
    Isotropic(f64),
    Diagonal(Vec<f64>),
}

/// Gaussian weight prior `N(θ_z, Σ_z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prior {
    pub mean: Vec<f64>,
    pub covariance: PriorCovariance,
}

impl Prior {
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::config(format!("prior variance must be positive, got {variance}")));
        }
        Ok(Self {
            mean,
            covariance: PriorCovariance::Isotropic(variance),
        })
    }

    /// Gradient of `-β log p(w|z)` with respect to `w`.
    pub fn gradient(&self, w: &[f64], beta: f64) -> Vec<f64> {
        match &self.covariance {
            PriorCovariance::Isotropic(s2) => w
                .iter()
                .zip(&self.mean)
                .map(|(wi, mi)| beta * (wi - mi) / s2)
                .collect(),
            PriorCovariance::Diagonal(vars) => w
                .iter()
                .zip(&self.mean)
                .zip(vars)
                .map(|((wi, mi), v)| beta * (wi - mi) / v)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGradient {
    pub mean_loss: f64,
    /// Mean clipped-loss gradient over the batch; this is what the MI estimator logs.
    pub likelihood: Vec<f64>,
    /// Likelihood plus prior contribution.
    pub total: Vec<f64>,
}

/// Mini-batch gradient of the energy `U(w)` with features sent through `link`.
pub fn energy_gradient<L: FeatureLink + ?Sized>(
    spec: &NetworkSpec,
    w: &ParameterVector,
    batch: &[&Sample],
    link: &mut L,
    prior: Option<&Prior>,
    beta: f64,
    clip: f64,
) -> Result<EnergyGradient> {
    if batch.is_empty() {
        return Err(Error::input("empty mini-batch"));
    }
    if let Some(p) = prior {
        if p.mean.len() != w.len() {
            return Err(Error::config("prior mean dimension differs from the weights"));
        }
    }
    let mut likelihood = vec![0.0; w.len()];
    let mut loss = 0.0;
    for sample in batch {
        let lg = gradient(spec, w, &sample.x, sample.label, link, clip)?;
        loss += lg.loss;
        for (acc, g) in likelihood.iter_mut().zip(&lg.gradient) {
            *acc += g;
        }
    }
    let scale = batch.len() as f64;
    likelihood.iter_mut().for_each(|g| *g /= scale);
    let total = match prior {
        Some(p) if beta != 0.0 => likelihood
            .iter()
            .zip(p.gradient(w, beta))
            .map(|(l, q)| l + q)
            .collect(),
        _ => likelihood.clone(),
    };
    Ok(EnergyGradient {
        mean_loss: loss / scale,
        likelihood,
        total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "AdamConfig::default_beta1")]
    pub beta1: f64,
    #[serde(default = "AdamConfig::default_beta2")]
    pub beta2: f64,
    #[serde(default = "AdamConfig::default_epsilon")]
    pub epsilon: f64,
}

impl AdamConfig {
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_epsilon() -> f64 {
        1e-8
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, dim: usize) -> Self {
        Self {
            config,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, w: &mut [f64], g: &[f64]) {
        let c = self.config;
        self.t += 1;
        let bias1 = 1.0 - c.beta1.powi(self.t);
        let bias2 = 1.0 - c.beta2.powi(self.t);
        for ((wi, gi), (mi, vi)) in w.iter_mut().zip(g).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
            *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
            *wi -= c.learning_rate * (*mi / bias1) / ((*vi / bias2).sqrt() + c.epsilon);
        }
    }
}

/// Hyperparameters shared by pretraining and both fine-tuning arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// SGLD step size `η₀`.
    #[serde(default = "TrainConfig::default_learning_rate")]
    pub learning_rate: f64,
    /// SGLD temperature `β₀`.
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub prior: PriorSpec,
    /// Optimizer for pretraining and the vanilla arm.
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "TrainConfig::default_clip")]
    pub clip: f64,
    #[serde(default)]
    pub seed: u64,
    /// Channel distribution sampled once per mini-batch; empty means no channel.
    #[serde(default)]
    pub channels: Vec<ChannelConfig>,
    #[serde(default)]
    pub link_mode: LinkMode,
    /// Uniform-noise quantization surrogate applied during pretraining (0 disables it).
    #[serde(default)]
    pub surrogate_step: f64,
    #[serde(default = "TrainConfig::default_log_capacity")]
    pub log_capacity: usize,
    #[serde(default = "TrainConfig::default_rho")]
    pub rho: f64,
    #[serde(default = "TrainConfig::default_window")]
    pub average_window: usize,
    #[serde(default)]
    pub mean_kind: MeanKind,
}

impl TrainConfig {
    fn default_learning_rate() -> f64 {
        1e-2
    }
    fn default_clip() -> f64 {
        DEFAULT_CLIP
    }
    fn default_log_capacity() -> usize {
        crate::mi::DEFAULT_LOG_CAPACITY
    }
    fn default_rho() -> f64 {
        crate::mi::DEFAULT_RHO
    }
    fn default_window() -> usize {
        crate::mi::DEFAULT_WINDOW
    }

    pub fn new(epochs: usize, batch_size: usize) -> Self {
        Self {
            epochs,
            batch_size,
            learning_rate: Self::default_learning_rate(),
            temperature: 0.0,
            schedule: ScheduleKind::default(),
            prior: PriorSpec::default(),
            adam: AdamConfig::default(),
            clip: DEFAULT_CLIP,
            seed: 0,
            channels: Vec::new(),
            link_mode: LinkMode::Digital,
            surrogate_step: 0.0,
            log_capacity: Self::default_log_capacity(),
            rho: Self::default_rho(),
            average_window: Self::default_window(),
            mean_kind: MeanKind::Quadratic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::config("temperature must be non-negative"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::config("Adam learning rate must be positive"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::config("clip must be positive"));
        }
        if let ScheduleKind::Polynomial { k0 } = self.schedule {
            if !(k0 > 0.0) {
                return Err(Error::config("schedule k0 must be positive"));
            }
        }
        if let PriorSpec::Isotropic { variance } = self.prior {
            if !(variance > 0.0) {
                return Err(Error::config("prior variance must be positive"));
            }
        }
        if !(self.surrogate_step >= 0.0) {
            return Err(Error::config("surrogate step must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.rho) || self.average_window == 0 {
            return Err(Error::config("moving average needs rho in [0, 1) and a window of at least 1"));
        }
        for c in &self.channels {
            c.validate()?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            eta0: self.learning_rate,
            beta0: self.temperature,
            kind: self.schedule,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pretrained {
    pub params: ParameterVector,
    pub standard_risk: f64,
}

/// Minibatch Adam on the standard (channel-free) risk from a Glorot initialization.
pub fn pretrain_standard(spec: &NetworkSpec, train: &[Sample], config: &TrainConfig) -> Result<Pretrained> {
    config.validate()?;
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    let mut params = ParameterVector::glorot(spec, &mut rng_stream(config.seed, Stream::Init));
    let mut shuffle = rng_stream(config.seed, Stream::Shuffle);
    let mut surrogate = SurrogateLink {
        step: config.surrogate_step,
        rng: rng_stream(config.seed, Stream::Surrogate),
    };
    let mut adam = Adam::new(config.adam, params.len());
    for epoch in 0..config.epochs {
        let order = epoch_order(train.len(), &mut shuffle);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let eg = if config.surrogate_step > 0.0 {
                energy_gradient(spec, &params, &batch, &mut surrogate, None, 0.0, config.clip)?
            } else {
                energy_gradient(spec, &params, &batch, &mut CleanLink, None, 0.0, config.clip)?
            };
            if !eg.mean_loss.is_finite() || eg.likelihood.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    last_good: Box::new(params),
                });
            }
            adam.step(&mut params, &eg.likelihood);
        }
    }
    let risk = standard_risk(spec, &params, train, config.clip)?;
    if config.epochs > 0 && risk >= config.clip {
        return Err(Error::TrainingFailure(
            "every training sample sits in the clipped region; gradients vanished".into(),
        ));
    }
    Ok(Pretrained {
        params,
        standard_risk: risk,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Robust,
    Vanilla,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Robust => "robust",
            Method::Vanilla => "vanilla",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub snapshot: String,
    pub mi_estimate: f64,
    pub test_accuracy: f64,
    pub eta: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    pub method: Method,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub gradient_log: GradientLog,
    /// Moving-average weights at the end of training.
    pub averaged_weights: Vec<f64>,
}

impl TrainTrace {
    pub fn final_mi(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mi_estimate)
    }

    pub fn max_mi(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.mi_estimate).reduce(f64::max)
    }
}

fn build_prior(
    spec: &NetworkSpec,
    train: &[Sample],
    config: &TrainConfig,
    theta_z: &ParameterVector,
) -> Result<Prior> {
    match config.prior {
        PriorSpec::Isotropic { variance } => Prior::isotropic(theta_z.to_vec(), variance),
        PriorSpec::Fisher => {
            let mut log = GradientLog::new(theta_z.len(), train.len());
            for s in train {
                log.push(gradient(spec, theta_z, &s.x, s.label, &mut CleanLink, config.clip)?.gradient)?;
            }
            let cov = fisher_covariance(&log, train.len())?;
            Ok(Prior {
                mean: theta_z.to_vec(),
                covariance: PriorCovariance::Diagonal(cov.variances),
            })
        }
    }
}

fn test_accuracy(
    spec: &NetworkSpec,
    params: &ParameterVector,
    test: &[Sample],
    config: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    if test.is_empty() {
        return Ok(f64::NAN);
    }
    let eval = match config.channels.first() {
        None => evaluate(spec, params, test, &mut CleanLink, config.clip)?,
        Some(channel) => {
            let epoch_seed = config.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = rng_stream(epoch_seed, Stream::Evaluation);
            let mut link = WirelessLink::new(*channel, config.link_mode, &mut rng);
            evaluate(spec, params, test, &mut link, config.clip)?
        }
    };
    Ok(eval.accuracy)
}

fn fine_tune(
    method: Method,
    spec: &NetworkSpec,
    train: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
    theta_z: &ParameterVector,
) -> Result<(ParameterVector, TrainTrace)> {
    config.validate()?;
    theta_z.check(spec)?;
    if train.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    let prior = match method {
        Method::Robust => Some(build_prior(spec, train, config, theta_z)?),
        Method::Vanilla => None,
    };
    let schedule = config.schedule();
    let mut w = theta_z.clone();
    let mut last_good = w.clone();
    let mut shuffle = rng_stream(config.seed, Stream::Shuffle);
    let mut channel_rng = rng_stream(config.seed, Stream::Channel);
    let mut langevin = rng_stream(config.seed, Stream::Langevin);
    let mut adam = Adam::new(config.adam, w.len());
    let mut log = GradientLog::new(w.len(), config.log_capacity);
    let mut average = MovingAverage::new(theta_z, config.rho, config.average_window, config.mean_kind)?;
    let mut records = Vec::with_capacity(config.epochs);
    let mut k = 0usize;

    for epoch in 0..config.epochs {
        let order = epoch_order(train.len(), &mut shuffle);
        let (mut eta, mut beta) = (schedule.eta0, schedule.beta0);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            (eta, beta) = decay_step(&schedule, k);
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let beta_used = if method == Method::Robust { beta } else { 0.0 };
            let eg = if config.channels.is_empty() {
                energy_gradient(spec, &w, &batch, &mut CleanLink, prior.as_ref(), beta_used, config.clip)?
            } else {
                let pick = channel_rng.random_range(0..config.channels.len());
                let mut link = WirelessLink::new(config.channels[pick], config.link_mode, &mut channel_rng);
                energy_gradient(spec, &w, &batch, &mut link, prior.as_ref(), beta_used, config.clip)?
            };
            if !eg.mean_loss.is_finite() || eg.total.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    last_good: Box::new(last_good),
                });
            }
            match method {
                Method::Robust => sgld_step(&mut w, &eg.total, eta, beta, &mut langevin),
                Method::Vanilla => adam.step(&mut w, &eg.total),
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    last_good: Box::new(last_good),
                });
            }
            last_good.as_mut_slice().copy_from_slice(&w);
            log.push(eg.likelihood)?;
            average.update(&w)?;
            k += 1;
        }
        let delta: Vec<f64> = average
            .current()
            .iter()
            .zip(theta_z.iter())
            .map(|(a, z)| a - z)
            .collect();
        let mi = estimate_mi(&delta, &log, train.len())?;
        let (eta_rec, beta_rec) = match method {
            Method::Robust => (eta, beta),
            Method::Vanilla => (config.adam.learning_rate, 0.0),
        };
        records.push(EpochRecord {
            epoch,
            snapshot: w.digest(),
            mi_estimate: mi.value,
            test_accuracy: test_accuracy(spec, &w, test, config, epoch)?,
            eta: eta_rec,
            beta: beta_rec,
        });
    }
    let averaged_weights = average.current().to_vec();
    Ok((
        w,
        TrainTrace {
            method,
            seed: config.seed,
            epochs: records,
            gradient_log: log,
            averaged_weights,
        },
    ))
}

/// SGLD fine-tuning from `θ_z` through the configured channel distribution.
pub fn train_robust(
    spec: &NetworkSpec,
    train: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
    theta_z: &ParameterVector,
) -> Result<(ParameterVector, TrainTrace)> {
    fine_tune(Method::Robust, spec, train, test, config, theta_z)
}

/// Adam fine-tuning through the same channel pipeline, with no prior and no noise.
pub fn train_vanilla(
    spec: &NetworkSpec,
    train: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
    theta_z: &ParameterVector,
) -> Result<(ParameterVector, TrainTrace)> {
    fine_tune(Method::Vanilla, spec, train, test, config, theta_z)
}
