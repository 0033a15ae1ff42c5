//! Independent oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use wdl_core::harness::{self, ExperimentConfig, ExperimentOutput};
use wdl_core::mi::{estimate_mi, gaussian_kl, influence_shift, Gaussian, GradientLog, SpdMatrix};
use wdl_core::nn::{clipped_cross_entropy, forward, gradient, Activation, CleanLink, NetworkSpec, ParameterVector};
use wdl_core::outage::epsilon_capacity;
use wdl_core::phy::{
    apply_channel, demodulate, modulate, q_function, shannon_capacity, BitVector, ChannelConfig, ChannelKind,
    Scheme,
};
use wdl_core::trainer::sgld_step;

#[derive(Debug)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }

    pub fn assert(self) {
        assert!(self.passed, "{}", self.detail);
    }
}

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn reference_config(name: &str) -> ExperimentConfig {
    let path = repo_root().join("configs").join(format!("{name}.toml"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    ExperimentConfig::from_toml_str(&text).expect("reference config parses")
}

// ---------------------------------------------------------------- forward oracle

/// Error-free product: `a * b = p + e` exactly.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Error-free sum: `a + b = s + e` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Dot product plus bias in doubled working precision (Ogita, Rump, Oishi).
fn compensated_affine(w: &[f64], x: &[f64], bias: f64) -> f64 {
    let (mut s, mut c) = (bias, 0.0);
    for (&a, &b) in w.iter().zip(x) {
        let (p, ep) = two_prod(a, b);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    s + c
}

/// Pre-activations and logits computed independently of the library's forward pass.
pub fn reference_forward(spec: &NetworkSpec, params: &[f64], x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut offset = 0;
    let mut act = x.to_vec();
    let mut pres = Vec::new();
    let layers = spec.layer_sizes.len() - 1;
    for l in 0..layers {
        let (fan_in, fan_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let weights = &params[offset..offset + fan_in * fan_out];
        let biases = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let z: Vec<f64> = (0..fan_out)
            .map(|j| compensated_affine(&weights[j * fan_in..(j + 1) * fan_in], &act, biases[j]))
            .collect();
        act = if l + 1 == layers {
            z.clone()
        } else {
            z.iter()
                .map(|&v| match spec.activations[l] {
                    Activation::Relu => v.max(0.0),
                    Activation::Tanh => v.tanh(),
                    Activation::Identity => v,
                })
                .collect()
        };
        pres.push(z);
    }
    (pres, act)
}

// ---------------------------------------------------------------- gradient check

pub fn random_network(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let depth = rng.random_range(1..=4usize);
    let mut sizes = vec![rng.random_range(1..=4usize)];
    for _ in 1..depth {
        sizes.push(rng.random_range(1..=6usize));
    }
    sizes.push(rng.random_range(2..=4usize));
    let acts = (0..depth - 1)
        .map(|_| [Activation::Relu, Activation::Tanh, Activation::Identity][rng.random_range(0..3)])
        .collect();
    let split = rng.random_range(0..=depth);
    NetworkSpec::new(sizes, acts, split).expect("random spec is valid")
}

fn central_difference(spec: &NetworkSpec, params: &ParameterVector, x: &[f64], label: usize, clip: f64) -> Vec<f64> {
    let h = 1e-6;
    let loss = |p: &ParameterVector| clipped_cross_entropy(&forward(spec, p, x).unwrap(), label, clip).unwrap();
    (0..params.len())
        .map(|i| {
            let mut plus = params.clone();
            plus[i] += h;
            let mut minus = params.clone();
            minus[i] -= h;
            (loss(&plus) - loss(&minus)) / (2.0 * h)
        })
        .collect()
}

fn near_kink(spec: &NetworkSpec, params: &ParameterVector, x: &[f64]) -> bool {
    let (pres, _) = reference_forward(spec, params, x);
    pres.iter()
        .take(pres.len() - 1)
        .enumerate()
        .any(|(l, z)| spec.activations[l] == Activation::Relu && z.iter().any(|v| v.abs() < 1e-3))
}

/// Worst relative error between backprop and central differences over `configs` random draws.
pub fn gradient_check(configs: usize, seed: u64) -> Check {
    let clip = 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut tested) = (0.0f64, 0);
    while tested < configs {
        let spec = random_network(&mut rng);
        let mut params = ParameterVector::glorot(&spec, &mut rng);
        for p in params.iter_mut() {
            *p += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        let x: Vec<f64> = (0..spec.input_width()).map(|_| rng.sample(StandardNormal)).collect();
        let label = rng.random_range(0..spec.output_width());
        let loss = clipped_cross_entropy(&forward(&spec, &params, &x).unwrap(), label, clip).unwrap();
        // Kinks and the flat clipped region make central differences meaningless.
        if near_kink(&spec, &params, &x) || loss > clip - 0.05 {
            continue;
        }
        let analytic = gradient(&spec, &params, &x, label, &mut CleanLink, clip).unwrap().gradient;
        let numeric = central_difference(&spec, &params, &x, label, clip);
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-8);
        worst = worst.max(diff / scale);
        tested += 1;
    }
    Check::new(worst <= 1e-5, format!("{tested} configs, worst relative error {worst:.2e} (limit 1e-5)"))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- physical layer

/// Runs the `ber` experiment for QPSK over Eb/N0 = 0..=10 dB and compares each
/// point with `Q(sqrt(2 Eb/N0))` at three binomial standard errors.
pub fn qpsk_ber_check(bits_per_point: usize, seed: u64) -> Check {
    let ebn0: Vec<f64> = (0..=10).map(f64::from).collect();
    let per_symbol = 10.0 * 2f64.log10();
    let config = ExperimentConfig::from_toml_str(&format!(
        "experiment = \"ber\"\nmaster_seed = {seed}\n[ber]\nkind = \"awgn\"\nschemes = [\"QPSK\"]\n\
         snr_db = {:?}\nbits_per_point = {bits_per_point}\n",
        ebn0.iter().map(|e| e + per_symbol).collect::<Vec<_>>()
    ))
    .unwrap();
    let rows = harness::run_ber(&config).unwrap();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (row, e) in rows.iter().zip(&ebn0) {
        let p = q_function((2.0 * 10f64.powf(e / 10.0)).sqrt());
        let se = (p * (1.0 - p) / row.bits_sent as f64).sqrt();
        let z = (row.ber - p).abs() / se;
        worst = worst.max(z);
        if z > 3.0 || row.bits_sent < bits_per_point {
            failures.push(format!("Eb/N0 {e} dB: measured {:.3e}, theory {p:.3e}", row.ber));
        }
    }
    let monotone = rows.windows(2).all(|w| w[1].ber <= w[0].ber);
    Check::new(
        failures.is_empty() && monotone,
        format!(
            "{} points x {bits_per_point} bits, worst |z| {worst:.2}, monotone {monotone} {failures:?}",
            rows.len()
        ),
    )
}

pub fn noiseless_round_trip(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for scheme in Scheme::ALL {
        let c = scheme.constellation();
        for kind in [ChannelKind::Awgn, ChannelKind::Rayleigh] {
            for len in [1usize, 5, 64, 1001] {
                let bits = BitVector((0..len).map(|_| rng.random_range(0..2u8)).collect());
                let frame = modulate(&bits, &c);
                let state = ChannelConfig::noiseless(kind, scheme).draw(&mut rng);
                let rx = apply_channel(&frame.symbols, &state, &mut rng);
                if demodulate(&rx, &state, &c, frame.bit_len).unwrap() != bits {
                    failures.push(format!("{scheme} {kind:?} {len}"));
                }
            }
        }
    }
    Check::new(failures.is_empty(), format!("7 schemes x 2 channels, failures {failures:?}"))
}

pub fn capacity_check() -> Check {
    let c = shannon_capacity(10.0);
    Check::new((c - 3.4594).abs() <= 1e-3, format!("C(10 dB) = {c:.6}"))
}

pub fn epsilon_capacity_check() -> Check {
    let a = epsilon_capacity(2.0574, 0.2881).unwrap();
    let b = epsilon_capacity(3.4594, 0.2697).unwrap();
    let zero = epsilon_capacity(3.4594, 0.0).unwrap();
    Check::new(
        (a - 2.8900).abs() <= 5e-4 && (b - 4.7369).abs() <= 5e-4 && zero == 3.4594,
        format!("{a:.5}, {b:.5}, eps=0 gives {zero}"),
    )
}

// ---------------------------------------------------------------- SGLD

/// Chain on `U(x) = x^2/2`; the Gibbs distribution is `N(0, beta)`.
pub fn sgld_chain_variance(eta: f64, beta: f64, burn_in: usize, steps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = [0.0f64];
    for _ in 0..burn_in {
        let g = [x[0]];
        sgld_step(&mut x, &g, eta, beta, &mut rng);
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..steps {
        let g = [x[0]];
        sgld_step(&mut x, &g, eta, beta, &mut rng);
        sum += x[0];
        sum_sq += x[0] * x[0];
    }
    let mean = sum / steps as f64;
    sum_sq / steps as f64 - mean * mean
}

pub fn sgld_check() -> Check {
    // Autocorrelation time is about 1/eta steps, so a long chain is needed
    // for the sample variance to settle well inside the window.
    let var = sgld_chain_variance(1e-3, 0.5, 10_000, 4_000_000, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut gd_equal = true;
    for _ in 0..100 {
        let w: Vec<f64> = (0..7).map(|_| rng.sample(StandardNormal)).collect();
        let g: Vec<f64> = (0..7).map(|_| rng.sample(StandardNormal)).collect();
        let eta: f64 = rng.random_range(1e-4..1.0);
        let mut stepped = w.clone();
        sgld_step(&mut stepped, &g, eta, 0.0, &mut rng);
        gd_equal &= stepped
            .iter()
            .zip(w.iter().zip(&g))
            .all(|(s, (wi, gi))| s.to_bits() == (wi - eta * gi).to_bits());
    }
    Check::new(
        (0.45..=0.55).contains(&var) && gd_equal,
        format!("chain variance {var:.4} (window [0.45, 0.55]), beta=0 bitwise GD {gd_equal}"),
    )
}

// ---------------------------------------------------------------- influence functions

/// Ridge regression `(1/n) sum_i xi_i (x_i.theta - y_i)^2 / 2 + lambda |theta|^2 / 2`.
/// Bootstrap weights act on the data terms only.
pub struct Ridge {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub lambda: f64,
}

impl Ridge {
    pub fn generate(n: usize, d: usize, lambda: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let y = x
            .iter()
            .map(|xi| xi.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { x, y, lambda }
    }

    /// Exact weighted minimizer from the normal equations.
    pub fn fit(&self, weights: &[f64]) -> DVector<f64> {
        let d = self.x[0].len();
        let n = self.x.len() as f64;
        let mut a = self.lambda * DMatrix::identity(d, d);
        let mut b = DVector::zeros(d);
        for ((xi, &yi), &w) in self.x.iter().zip(&self.y).zip(weights) {
            let v = DVector::from_column_slice(xi);
            a += (w / n) * &v * v.transpose();
            b += (w * yi / n) * &v;
        }
        a.lu().solve(&b).expect("ridge system is nonsingular")
    }

    /// Per-sample data-term gradients at `theta`.
    pub fn gradients(&self, theta: &DVector<f64>) -> Vec<Vec<f64>> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(xi, &yi)| {
                let r = xi.iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>() - yi;
                xi.iter().map(|a| r * a).collect()
            })
            .collect()
    }

    /// Hessian of the unweighted objective, `X^T X / n + lambda I`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let d = self.x[0].len();
        let mut h = self.lambda * DMatrix::identity(d, d);
        for xi in &self.x {
            let v = DVector::from_column_slice(xi);
            h += (&v * v.transpose()) / self.x.len() as f64;
        }
        h
    }
}

/// Median relative L2 error of the influence-function shift against exact
/// reweighted refits over `draws` Poisson-bootstrap weight vectors.
pub fn influence_errors(n: usize, d: usize, lambda: f64, draws: usize, seed: u64) -> Vec<f64> {
    let ridge = Ridge::generate(n, d, lambda, seed);
    let theta = ridge.fit(&vec![1.0; n]);
    let grads = ridge.gradients(&theta);
    let hessian = SpdMatrix::Dense(ridge.hessian());
    let binomial = Binomial::new(n as u64, 1.0 / n as f64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb007);
    let mut errors = Vec::with_capacity(draws);
    while errors.len() < draws {
        let xi: Vec<f64> = (0..n).map(|_| binomial.sample(&mut rng) as f64).collect();
        let exact = ridge.fit(&xi) - &theta;
        if exact.norm() == 0.0 {
            continue;
        }
        let approx = DVector::from_vec(influence_shift(&grads, &hessian, &xi).unwrap());
        errors.push((approx - &exact).norm() / exact.norm());
    }
    errors
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len().is_multiple_of(2) {
        0.5 * (values[m - 1] + values[m])
    } else {
        values[m]
    }
}

pub const RIDGE_LAMBDA: f64 = 1.0;

pub fn influence_check() -> Check {
    let mut errors = influence_errors(30, 3, RIDGE_LAMBDA, 50, 2024);
    let med = median(&mut errors);
    Check::new(med <= 0.10, format!("median relative error {med:.4} over 50 draws (limit 0.10)"))
}

// ---------------------------------------------------------------- KL and MI identities

pub fn kl_check() -> Check {
    let g = |m: f64, v: f64| Gaussian {
        mean: vec![m],
        covariance: SpdMatrix::Diagonal(vec![v]),
    };
    let a = gaussian_kl(&g(1.0, 1.0), &g(0.0, 1.0)).unwrap();
    let b = gaussian_kl(&g(0.0, 2.0), &g(0.0, 1.0)).unwrap();
    // 0.5 * (2 - 1 - ln 2)
    let b_expected = 0.5 * (1.0 - std::f64::consts::LN_2);
    Check::new(
        (a - 0.5).abs() <= 1e-9 && (b - 0.15343).abs() <= 1e-5 && (b - b_expected).abs() <= 1e-9,
        format!("KL(N(1,1)||N(0,1)) = {a:.12}, KL(N(0,2)||N(0,1)) = {b:.12}"),
    )
}

pub fn mi_identity_check(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 9;
    let entries: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let log = GradientLog::from_entries(entries).unwrap();
    let n = 400;
    let zero = estimate_mi(&vec![0.0; dim], &log, n).unwrap().value;
    let delta: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let base = estimate_mi(&delta, &log, n).unwrap().value;
    let mut exact_scaling = true;
    for alpha in [0.25, 0.5, 2.0, 4.0, -8.0] {
        let scaled: Vec<f64> = delta.iter().map(|d| alpha * d).collect();
        exact_scaling &= estimate_mi(&scaled, &log, n).unwrap().value == alpha * alpha * base;
    }
    let three: Vec<f64> = delta.iter().map(|d| 3.0 * d).collect();
    let ratio = estimate_mi(&three, &log, n).unwrap().value / base;
    let by_hand = estimate_mi(&[1.0, 2.0], &GradientLog::from_entries(vec![vec![3.0, -1.0]]).unwrap(), 10)
        .unwrap()
        .value;
    Check::new(
        zero == 0.0 && exact_scaling && (ratio - 9.0).abs() <= 9.0 * 1e-14 && by_hand == 10.0,
        format!("zero shift {zero}, power-of-two scaling exact {exact_scaling}, alpha=3 ratio {ratio}, T=1 case {by_hand}"),
    )
}

// ---------------------------------------------------------------- experiments

pub fn bound_property_check() -> Check {
    let config = reference_config("bound_table");
    let start = Instant::now();
    let rows = harness::run_bound_table(&config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let failing: Vec<&str> = rows.iter().filter(|r| r.g_hat > r.bound).map(|r| r.channel.as_str()).collect();
    let tightest = rows.iter().map(|r| r.g_hat / r.bound).fold(0.0, f64::max);
    Check::new(
        rows.len() >= 6 && config.draws >= 20 && failing.is_empty() && secs <= 300.0,
        format!(
            "{} cells x {} draws, max g/G {tightest:.4}, violations {failing:?}, {secs:.1}s",
            rows.len(),
            config.draws
        ),
    )
}

pub fn trend_check() -> Check {
    let config = reference_config("train_compare");
    let start = Instant::now();
    let (trace, accuracy) = harness::run_train_compare(&config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mean_acc = |m: &str| {
        let v: Vec<f64> = accuracy
            .iter()
            .filter(|r| r.method.name() == m && r.rate_bits_per_symbol == 4.0)
            .map(|r| r.accuracy)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (robust, vanilla) = (mean_acc("robust"), mean_acc("vanilla"));
    let epochs = trace.iter().map(|r| r.epoch).max().unwrap() + 1;
    let replicates = config.compare.as_ref().unwrap().replicates;
    let robust_mi: Vec<f64> = (0..epochs)
        .map(|e| {
            let v: Vec<f64> = trace
                .iter()
                .filter(|r| r.method.name() == "robust" && r.epoch == e)
                .map(|r| r.mi_estimate)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let last = *robust_mi.last().unwrap();
    let max = robust_mi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Check::new(
        replicates >= 5 && robust >= vanilla && last < max && secs <= 900.0,
        format!(
            "{replicates} seeds: accuracy at 4 bit/symbol robust {robust:.4} vs vanilla {vanilla:.4}; \
             robust final I {last:.3} vs max {max:.3}; {secs:.1}s"
        ),
    )
}

pub const FIXTURES: [(&str, &[&str]); 4] = [
    ("bound_table", &["bound_table"]),
    ("rate_sweep", &["rate_sweep", "rate_sweep_summary"]),
    ("train_compare", &["train_trace", "accuracy_vs_rate"]),
    ("ber", &["ber"]),
];

/// CSV bytes of every table a reference experiment emits, keyed by table name.
pub fn experiment_csvs(name: &str) -> Vec<(String, Vec<u8>)> {
    let output = harness::run(&reference_config(name)).unwrap();
    let mut tables = Vec::new();
    let mut push = |table: &str, bytes: Vec<u8>| tables.push((table.to_string(), bytes));
    let csv = |f: &dyn Fn(&mut Vec<u8>) -> wdl_core::Result<()>| {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        buf
    };
    match output {
        ExperimentOutput::BoundTable(rows) => push("bound_table", csv(&|b| harness::write_csv(&rows, b))),
        ExperimentOutput::RateSweep { rows, summary } => {
            push("rate_sweep", csv(&|b| harness::write_csv(&rows, b)));
            push("rate_sweep_summary", csv(&|b| harness::write_csv(std::slice::from_ref(&summary), b)));
        }
        ExperimentOutput::TrainCompare { trace, accuracy } => {
            push("train_trace", csv(&|b| harness::write_csv(&trace, b)));
            push("accuracy_vs_rate", csv(&|b| harness::write_csv(&accuracy, b)));
        }
        ExperimentOutput::Ber(rows) => push("ber", csv(&|b| harness::write_csv(&rows, b))),
    }
    tables
}

pub fn fixture_path(table: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(format!("{table}.csv"))
}

/// Reruns every reference experiment and compares with the committed golden CSVs.
/// With `WDL_BLESS=1` the fixtures are (re)written instead.
pub fn determinism_check() -> Check {
    let bless = std::env::var("WDL_BLESS").is_ok_and(|v| v == "1");
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (experiment, _) in FIXTURES {
        let first = experiment_csvs(experiment);
        let second = experiment_csvs(experiment);
        if first != second {
            mismatches.push(format!("{experiment}: rerun differs"));
        }
        for (table, bytes) in first {
            let path = fixture_path(&table);
            if bless {
                std::fs::write(&path, &bytes).unwrap();
            }
            match std::fs::read(&path) {
                Ok(golden) if golden == bytes => compared += 1,
                Ok(_) => mismatches.push(format!("{table}: differs from golden")),
                Err(e) => mismatches.push(format!("{table}: {e}")),
            }
        }
    }
    Check::new(
        mismatches.is_empty(),
        format!("{compared} golden CSVs matched bitwise, problems {mismatches:?}"),
    )
}
