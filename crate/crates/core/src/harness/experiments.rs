use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, ExperimentConfig, ExperimentKind, RateGrid};
use super::emit::{emit_results, Metadata, OutputFormat, ResultRow};
use crate::data::{make_dataset, Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, ParameterVector};
use crate::outage::{
    achievable_boundary, epsilon_capacity, outage_indicator, outage_probability_from_flags, Boundary,
    OutageEstimate, OutageMode,
};
use crate::phy::{
    analytic_ber, apply_channel, count_bit_errors, demodulate, modulate, shannon_capacity, BitVector,
    ChannelConfig, ChannelKind, LinkMode, Scheme,
};
use crate::risk::{sigma_from_clip, standard_risk, subgaussian_bound, wireless_evaluation, RiskReport};
use crate::trainer::{pretrain_standard, rng_stream, train_robust, train_vanilla, Method, Stream, TrainConfig, TrainTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub channel: String,
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub scheme: Scheme,
    pub rate_bits_per_symbol: f64,
    pub standard_risk: f64,
    pub wireless_risk: f64,
    pub g_hat: f64,
    pub g_signed: f64,
    pub sigma: f64,
    pub mi_estimate: f64,
    pub bound: f64,
    pub outage_probability: f64,
    pub outage_std_error: f64,
    pub accuracy: f64,
    pub ber: f64,
    pub bound_holds: u8,
    pub seed: u64,
}

impl ResultRow for BoundRow {
    const COLUMNS: &'static [&'static str] = &[
        "channel",
        "kind",
        "snr_db",
        "scheme",
        "rate_bits_per_symbol",
        "standard_risk",
        "wireless_risk",
        "g_hat",
        "g_signed",
        "sigma",
        "mi_estimate",
        "bound",
        "outage_probability",
        "outage_std_error",
        "accuracy",
        "ber",
        "bound_holds",
        "seed",
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub rate_bits_per_symbol: f64,
    pub scheme: Scheme,
    pub mean_wireless_loss: f64,
    pub loss_std: f64,
    pub in_region: u8,
    #[serde(rename = "L_hat")]
    pub l_hat: f64,
    #[serde(rename = "G_hat")]
    pub g_hat: f64,
    pub outage_probability: f64,
    #[serde(rename = "capacity_C")]
    pub capacity_c: f64,
    pub capacity_eps: f64,
    pub seed: u64,
}

impl ResultRow for RateRow {
    const COLUMNS: &'static [&'static str] = &[
        "rate_bits_per_symbol",
        "scheme",
        "mean_wireless_loss",
        "loss_std",
        "in_region",
        "L_hat",
        "G_hat",
        "outage_probability",
        "capacity_C",
        "capacity_eps",
        "seed",
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub boundary_found: u8,
    /// Largest sampled in-region rate, or NaN when the region is empty.
    pub boundary_rate: f64,
    pub refined_rate: f64,
    /// Smallest `|L(s) - L|` on the grid when the region is empty, else NaN.
    pub smallest_gap: f64,
    pub epsilon: f64,
    #[serde(rename = "capacity_C")]
    pub capacity_c: f64,
    pub capacity_eps: f64,
    pub consistent: u8,
}

impl ResultRow for RateSummary {
    const COLUMNS: &'static [&'static str] = &[
        "boundary_found",
        "boundary_rate",
        "refined_rate",
        "smallest_gap",
        "epsilon",
        "capacity_C",
        "capacity_eps",
        "consistent",
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub replicate: usize,
    pub epoch: usize,
    pub method: Method,
    pub mi_estimate: f64,
    pub test_accuracy: f64,
    pub eta: f64,
    pub beta: f64,
    pub seed: u64,
}

impl ResultRow for TraceRow {
    const COLUMNS: &'static [&'static str] = &[
        "replicate",
        "epoch",
        "method",
        "mi_estimate",
        "test_accuracy",
        "eta",
        "beta",
        "seed",
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub replicate: usize,
    pub method: Method,
    pub scheme: Scheme,
    pub rate_bits_per_symbol: f64,
    pub snr_db: f64,
    pub accuracy: f64,
    pub mean_loss: f64,
    pub seed: u64,
}

impl ResultRow for AccuracyRow {
    const COLUMNS: &'static [&'static str] = &[
        "replicate",
        "method",
        "scheme",
        "rate_bits_per_symbol",
        "snr_db",
        "accuracy",
        "mean_loss",
        "seed",
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub scheme: Scheme,
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub bits_sent: usize,
    pub bit_errors: usize,
    pub ber: f64,
    pub analytic_ber: f64,
    pub seed: u64,
}

impl ResultRow for BerRow {
    const COLUMNS: &'static [&'static str] = &[
        "scheme",
        "kind",
        "snr_db",
        "bits_sent",
        "bit_errors",
        "ber",
        "analytic_ber",
        "seed",
    ];
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentOutput {
    BoundTable(Vec<BoundRow>),
    RateSweep { rows: Vec<RateRow>, summary: RateSummary },
    TrainCompare { trace: Vec<TraceRow>, accuracy: Vec<AccuracyRow> },
    Ber(Vec<BerRow>),
}

impl ExperimentOutput {
    /// Human-readable descriptions of checks that failed.
    pub fn violations(&self) -> Vec<String> {
        match self {
            ExperimentOutput::BoundTable(rows) => rows
                .iter()
                .filter(|r| r.bound_holds == 0)
                .map(|r| {
                    format!(
                        "{}: discrepancy {:.6} exceeds bound {:.6}",
                        r.channel, r.g_hat, r.bound
                    )
                })
                .collect(),
            ExperimentOutput::RateSweep { summary, .. } if summary.consistent == 0 => vec![format!(
                "boundary rate {} exceeds epsilon-capacity {}",
                summary.boundary_rate, summary.capacity_eps
            )],
            _ => Vec::new(),
        }
    }

    /// Writes every table as `<name>.csv` and `<name>.json` under `dir`.
    pub fn write(&self, dir: &Path, metadata: &Metadata) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut both = |name: &str, f: &dyn Fn(&Path, OutputFormat) -> Result<()>| -> Result<()> {
            for (ext, format) in [("csv", OutputFormat::Csv), ("json", OutputFormat::Json)] {
                let path = dir.join(format!("{name}.{ext}"));
                f(&path, format)?;
                written.push(path);
            }
            Ok(())
        };
        match self {
            ExperimentOutput::BoundTable(rows) => {
                both("bound_table", &|p, f| emit_results(rows, p, f, metadata))?
            }
            ExperimentOutput::RateSweep { rows, summary } => {
                both("rate_sweep", &|p, f| emit_results(rows, p, f, metadata))?;
                both("rate_sweep_summary", &|p, f| {
                    emit_results(std::slice::from_ref(summary), p, f, metadata)
                })?;
            }
            ExperimentOutput::TrainCompare { trace, accuracy } => {
                both("train_trace", &|p, f| emit_results(trace, p, f, metadata))?;
                both("accuracy_vs_rate", &|p, f| emit_results(accuracy, p, f, metadata))?;
            }
            ExperimentOutput::Ber(rows) => both("ber", &|p, f| emit_results(rows, p, f, metadata))?,
        }
        Ok(written)
    }
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::BoundTable => run_bound_table(config).map(ExperimentOutput::BoundTable),
        ExperimentKind::RateSweep => {
            run_rate_sweep(config).map(|(rows, summary)| ExperimentOutput::RateSweep { rows, summary })
        }
        ExperimentKind::TrainCompare => run_train_compare(config)
            .map(|(trace, accuracy)| ExperimentOutput::TrainCompare { trace, accuracy }),
        ExperimentKind::Ber => run_ber(config).map(ExperimentOutput::Ber),
    }
}

struct Model<'a> {
    spec: &'a NetworkSpec,
    data: Dataset,
    theta_z: ParameterVector,
}

fn sections(config: &ExperimentConfig) -> Result<(&NetworkSpec, &TrainConfig, &TrainConfig)> {
    let missing = |s: &str| Error::config(format!("missing [{s}] section"));
    Ok((
        config.network.as_ref().ok_or_else(|| missing("network"))?,
        config.pretrain.as_ref().ok_or_else(|| missing("pretrain"))?,
        config.finetune.as_ref().ok_or_else(|| missing("finetune"))?,
    ))
}

fn pretrained_model(config: &ExperimentConfig, seed: u64) -> Result<Model<'_>> {
    let (spec, pretrain, _) = sections(config)?;
    let dataset = config
        .dataset
        .as_ref()
        .ok_or_else(|| Error::config("missing [dataset] section"))?;
    let data = make_dataset(dataset)?;
    let mut pre = pretrain.clone();
    pre.seed = seed;
    let theta_z = pretrain_standard(spec, &data.train, &pre)?.params;
    Ok(Model { spec, data, theta_z })
}

fn fine_tune(
    method: Method,
    model: &Model<'_>,
    base: &TrainConfig,
    channel: ChannelConfig,
    link_mode: LinkMode,
    seed: u64,
) -> Result<(ParameterVector, TrainTrace)> {
    let mut cfg = base.clone();
    cfg.channels = vec![channel];
    cfg.link_mode = link_mode;
    cfg.seed = seed;
    let train = match method {
        Method::Robust => train_robust,
        Method::Vanilla => train_vanilla,
    };
    train(model.spec, &model.data.train, &model.data.test, &cfg, &model.theta_z)
}

/// Losses from `draws` independent passes of the test set through one channel configuration.
struct CellMeasurement {
    draw_risks: Vec<f64>,
    sample_losses: Vec<f64>,
    accuracy: f64,
    ber: f64,
}

#[allow(clippy::too_many_arguments)]
fn measure_cell(
    spec: &NetworkSpec,
    params: &ParameterVector,
    data: &[Sample],
    channel: &ChannelConfig,
    mode: LinkMode,
    clip: f64,
    draws: usize,
    seed: u64,
) -> Result<CellMeasurement> {
    let mut draw_risks = Vec::with_capacity(draws);
    let mut sample_losses = Vec::with_capacity(draws * data.len());
    let (mut accuracy, mut bits, mut errors) = (0.0, 0usize, 0usize);
    for d in 0..draws {
        let rng = rng_stream(derive_seed(seed, "draw", d as u64), Stream::Evaluation);
        let w = wireless_evaluation(spec, params, data, channel, mode, clip, rng)?;
        draw_risks.push(w.evaluation.mean_loss);
        sample_losses.extend_from_slice(&w.evaluation.losses);
        accuracy += w.evaluation.accuracy;
        bits += w.link.bits_sent;
        errors += w.link.bit_errors;
    }
    Ok(CellMeasurement {
        draw_risks,
        sample_losses,
        accuracy: accuracy / draws as f64,
        ber: if bits == 0 { 0.0 } else { errors as f64 / bits as f64 },
    })
}

fn outage(m: &CellMeasurement, mode: OutageMode, standard: f64, bound: f64) -> Result<OutageEstimate> {
    let losses = match mode {
        OutageMode::PerSample => &m.sample_losses,
        OutageMode::BatchMean => &m.draw_risks,
    };
    outage_probability_from_flags(losses.iter().map(|&l| outage_indicator(l, standard, bound)))
}

/// One row per channel cell: fine-tune through the cell, estimate `I`, and
/// compare the measured discrepancy with `sigma * sqrt(2 I)`.
pub fn run_bound_table(config: &ExperimentConfig) -> Result<Vec<BoundRow>> {
    let (_, _, finetune) = sections(config)?;
    let model = pretrained_model(config, derive_seed(config.master_seed, "pretrain", 0))?;
    let sigma = sigma_from_clip(finetune.clip)?;
    let mut rows = Vec::with_capacity(config.channels.len());
    for (i, channel) in config.channels.iter().enumerate() {
        let seed = derive_seed(config.master_seed, "cell", i as u64);
        let (params, trace) = fine_tune(config.finetune_method, &model, finetune, *channel, config.link_mode, seed)?;
        let mi = trace.final_mi().unwrap_or(0.0);
        let test = &model.data.test;
        let standard = standard_risk(model.spec, &params, test, finetune.clip)?;
        let m = measure_cell(model.spec, &params, test, channel, config.link_mode, finetune.clip, config.draws, seed)?;
        let report = RiskReport::new(standard, &m.draw_risks, sigma, mi, None, m.accuracy, m.ber)?;
        let p = outage(&m, config.outage_mode, standard, report.bound)?;
        rows.push(BoundRow {
            channel: channel.label(),
            kind: channel.kind,
            snr_db: channel.snr_db,
            scheme: channel.scheme,
            rate_bits_per_symbol: channel.scheme.bits_per_symbol() as f64,
            standard_risk: standard,
            wireless_risk: mean(&m.draw_risks),
            g_hat: report.discrepancy,
            g_signed: report.signed_discrepancy,
            sigma,
            mi_estimate: mi,
            bound: report.bound,
            outage_probability: p.probability,
            outage_std_error: p.std_error,
            accuracy: m.accuracy,
            ber: m.ber,
            bound_holds: u8::from(report.bound_holds()),
            seed,
        });
    }
    Ok(rows)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn grid_channels(grid: &RateGrid) -> impl Iterator<Item = ChannelConfig> + '_ {
    grid.schemes
        .iter()
        .map(move |&s| ChannelConfig::new(grid.kind, grid.snr_db, s))
}

/// `C / (1 - p)`, infinite when every record is in outage.
fn capacity_at(capacity: f64, p: f64) -> Result<f64> {
    if p >= 1.0 {
        Ok(f64::INFINITY)
    } else {
        epsilon_capacity(capacity, p)
    }
}

/// Fine-tunes once, then measures the wireless loss at every modulation rate
/// of the grid and locates the boundary of the achievable region.
pub fn run_rate_sweep(config: &ExperimentConfig) -> Result<(Vec<RateRow>, RateSummary)> {
    let (_, _, finetune) = sections(config)?;
    let grid = config
        .rate_grid
        .as_ref()
        .ok_or_else(|| Error::config("missing [rate_grid] section"))?;
    let model = pretrained_model(config, derive_seed(config.master_seed, "pretrain", 0))?;
    let seed = derive_seed(config.master_seed, "finetune", 0);
    let (params, trace) = fine_tune(config.finetune_method, &model, finetune, grid.train_channel, config.link_mode, seed)?;
    let sigma = sigma_from_clip(finetune.clip)?;
    let g_hat = subgaussian_bound(sigma, trace.final_mi().unwrap_or(0.0))?;
    let test = &model.data.test;
    let l_hat = standard_risk(model.spec, &params, test, finetune.clip)?;
    let capacity = shannon_capacity(grid.snr_db);

    let mut rows = Vec::with_capacity(grid.schemes.len());
    for (j, channel) in grid_channels(grid).enumerate() {
        let cell_seed = derive_seed(config.master_seed, "rate", j as u64);
        let m = measure_cell(model.spec, &params, test, &channel, config.link_mode, finetune.clip, config.draws, cell_seed)?;
        let mean_loss = mean(&m.draw_risks);
        let p = outage(&m, config.outage_mode, l_hat, g_hat)?.probability;
        rows.push(RateRow {
            rate_bits_per_symbol: channel.scheme.bits_per_symbol() as f64,
            scheme: channel.scheme,
            mean_wireless_loss: mean_loss,
            loss_std: std_dev(&m.draw_risks),
            in_region: u8::from((mean_loss - l_hat).abs() < g_hat),
            l_hat,
            g_hat,
            outage_probability: p,
            capacity_c: capacity,
            capacity_eps: capacity_at(capacity, p)?,
            seed: cell_seed,
        });
    }

    let summary = if rows.len() < 2 {
        // A single rate has no neighbour to interpolate towards.
        let r = &rows[0];
        summarize(
            if r.in_region == 1 {
                Boundary::Found { rate: r.rate_bits_per_symbol, refined: r.rate_bits_per_symbol }
            } else {
                Boundary::Empty { smallest_gap: (r.mean_wireless_loss - l_hat).abs() }
            },
            &rows,
            capacity,
        )?
    } else {
        let curve: Vec<(f64, f64)> = rows.iter().map(|r| (r.rate_bits_per_symbol, r.mean_wireless_loss)).collect();
        summarize(achievable_boundary(&curve, l_hat, g_hat)?, &rows, capacity)?
    };
    Ok((rows, summary))
}

fn summarize(boundary: Boundary, rows: &[RateRow], capacity: f64) -> Result<RateSummary> {
    Ok(match boundary {
        Boundary::Found { rate, refined } => {
            let row = rows
                .iter()
                .find(|r| r.rate_bits_per_symbol == rate)
                .expect("boundary rate is on the grid");
            let eps = row.outage_probability;
            let cap_eps = capacity_at(capacity, eps)?;
            RateSummary {
                boundary_found: 1,
                boundary_rate: rate,
                refined_rate: refined,
                smallest_gap: f64::NAN,
                epsilon: eps,
                capacity_c: capacity,
                capacity_eps: cap_eps,
                consistent: u8::from(rate <= cap_eps),
            }
        }
        Boundary::Empty { smallest_gap } => RateSummary {
            boundary_found: 0,
            boundary_rate: f64::NAN,
            refined_rate: f64::NAN,
            smallest_gap,
            epsilon: f64::NAN,
            capacity_c: capacity,
            capacity_eps: f64::NAN,
            consistent: 1,
        },
    })
}

/// Robust and vanilla fine-tuning from the same pretrained model, repeated
/// over independent replicate seeds.
pub fn run_train_compare(config: &ExperimentConfig) -> Result<(Vec<TraceRow>, Vec<AccuracyRow>)> {
    let (_, _, finetune) = sections(config)?;
    let compare = config
        .compare
        .as_ref()
        .ok_or_else(|| Error::config("missing [compare] section"))?;
    let grid = &compare.evaluation;
    let mut trace_rows = Vec::new();
    let mut accuracy_rows = Vec::new();
    for r in 0..compare.replicates {
        let seed = derive_seed(config.master_seed, "replicate", r as u64);
        let model = pretrained_model(config, derive_seed(seed, "pretrain", 0))?;
        for method in [Method::Robust, Method::Vanilla] {
            let (params, trace) = fine_tune(method, &model, finetune, grid.train_channel, config.link_mode, seed)?;
            trace_rows.extend(trace.epochs.iter().map(|e| TraceRow {
                replicate: r,
                epoch: e.epoch,
                method,
                mi_estimate: e.mi_estimate,
                test_accuracy: e.test_accuracy,
                eta: e.eta,
                beta: e.beta,
                seed,
            }));
            for (j, channel) in grid_channels(grid).enumerate() {
                // Both methods see identical channel realizations.
                let eval_seed = derive_seed(seed, "eval", j as u64);
                let m = measure_cell(
                    model.spec,
                    &params,
                    &model.data.test,
                    &channel,
                    config.link_mode,
                    finetune.clip,
                    config.draws,
                    eval_seed,
                )?;
                accuracy_rows.push(AccuracyRow {
                    replicate: r,
                    method,
                    scheme: channel.scheme,
                    rate_bits_per_symbol: channel.scheme.bits_per_symbol() as f64,
                    snr_db: channel.snr_db,
                    accuracy: m.accuracy,
                    mean_loss: mean(&m.draw_risks),
                    seed: eval_seed,
                });
            }
        }
    }
    Ok((trace_rows, accuracy_rows))
}

/// Monte-Carlo bit error rate of the modulation chain with a fresh fading
/// draw per frame.
pub fn run_ber(config: &ExperimentConfig) -> Result<Vec<BerRow>> {
    let sweep = config
        .ber
        .as_ref()
        .ok_or_else(|| Error::config("missing [ber] section"))?;
    let mut rows = Vec::new();
    let mut index = 0u64;
    for &scheme in &sweep.schemes {
        let constellation = scheme.constellation();
        for &snr_db in &sweep.snr_db {
            let channel = ChannelConfig::new(sweep.kind, snr_db, scheme);
            channel.validate()?;
            let seed = derive_seed(config.master_seed, "ber", index);
            index += 1;
            let mut rng = rng_stream(seed, Stream::Channel);
            let (mut sent, mut errors) = (0usize, 0usize);
            while sent < sweep.bits_per_point {
                let len = sweep.frame_bits.min(sweep.bits_per_point - sent);
                let bits = BitVector((0..len).map(|_| rng.random_range(0..2u8)).collect());
                let state = channel.draw(&mut rng);
                let frame = modulate(&bits, &constellation);
                let rx = apply_channel(&frame.symbols, &state, &mut rng);
                let back = demodulate(&rx, &state, &constellation, frame.bit_len)?;
                errors += count_bit_errors(&bits, &back)?;
                sent += len;
            }
            rows.push(BerRow {
                scheme,
                kind: sweep.kind,
                snr_db,
                bits_sent: sent,
                bit_errors: errors,
                ber: errors as f64 / sent as f64,
                analytic_ber: analytic_ber(scheme, sweep.kind, snr_db),
                seed,
            });
        }
    }
    Ok(rows)
}
