//! Seeded Monte-Carlo link simulation: Rayleigh block fading, uniform data
//! symbols, AWGN, and genie-scaled symbol detection.
//!
//! Every random draw comes from a ChaCha8 stream whose 256-bit key is the
//! little-endian concatenation of `(master_seed, snr_index, trial_index,
//! purpose)`. The channel, the data symbols and the receiver noise each use
//! their own stream, and the number of draws never depends on the precoder,
//! so switching precoders keeps every `H`, `s` and noise sample identical.
//! Trials are independent and may run in parallel; per-point aggregates are
//! sums of integer counters, so results do not depend on scheduling.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{exhaustive_solve, wf_infinite_precoder, wf_quantized_precoder};
use crate::bb1::{bb1_solve, TrickConfig};
use crate::error::{PrecodeError, Result};
use crate::model::{Constellation, PrecodingProblem};
use crate::numerics::{ComplexMatrix, ComplexVector, C64};

/// Which precoder a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    Bb1,
    Exhaustive,
    WfQuantized,
    WfInfinite,
}

impl PrecoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrecoderKind::Bb1 => "bb1",
            PrecoderKind::Exhaustive => "exhaustive",
            PrecoderKind::WfQuantized => "wf_quantized",
            PrecoderKind::WfInfinite => "wf_infinite",
        }
    }
}

impl FromStr for PrecoderKind {
    type Err = PrecodeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bb1" => Ok(PrecoderKind::Bb1),
            "exhaustive" => Ok(PrecoderKind::Exhaustive),
            "wf_quantized" => Ok(PrecoderKind::WfQuantized),
            "wf_infinite" => Ok(PrecoderKind::WfInfinite),
            other => Err(PrecodeError::InvalidInput(format!("unknown precoder '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstellationKind {
    Qpsk,
}

impl ConstellationKind {
    pub fn build(&self) -> Constellation {
        match self {
            ConstellationKind::Qpsk => Constellation::qpsk(),
        }
    }
}

/// A BER / complexity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub antennas: usize,
    pub users: usize,
    pub constellation: ConstellationKind,
    /// SNR = 1/N0 in dB.
    pub snr_db_points: Vec<f64>,
    /// Channel realizations per SNR point.
    pub trials: usize,
    /// Data vectors sent over each channel realization.
    pub symbols_per_trial: usize,
    pub master_seed: u64,
    pub precoder: PrecoderKind,
    pub tricks: TrickConfig,
    /// Measure wall time per solve. Timing is the only nondeterministic
    /// output; with it off `mean_ms` is reported as 0.
    pub record_timing: bool,
}

impl SimConfig {
    pub fn new(antennas: usize, users: usize, precoder: PrecoderKind) -> Self {
        SimConfig {
            antennas,
            users,
            constellation: ConstellationKind::Qpsk,
            snr_db_points: vec![0.0],
            trials: 1,
            symbols_per_trial: 1,
            master_seed: 0,
            precoder,
            tricks: TrickConfig::all_on(),
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.users == 0 {
            return Err(PrecodeError::InvalidInput("antennas and users must be >= 1".into()));
        }
        if self.trials == 0 || self.symbols_per_trial == 0 {
            return Err(PrecodeError::InvalidInput(
                "trials and symbols_per_trial must be >= 1".into(),
            ));
        }
        if self.snr_db_points.is_empty() || !self.snr_db_points.iter().all(|s| s.is_finite()) {
            return Err(PrecodeError::InvalidInput(
                "SNR points must be finite and non-empty".into(),
            ));
        }
        if self.precoder == PrecoderKind::Exhaustive && self.antennas > crate::baselines::MAX_EXHAUSTIVE_ANTENNAS {
            return Err(PrecodeError::InstanceTooLarge {
                antennas: self.antennas,
                max: crate::baselines::MAX_EXHAUSTIVE_ANTENNAS,
            });
        }
        Ok(())
    }
}

/// `N0 = 10^(-snr_db / 10)`.
pub fn noise_variance_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Channel = 1,
    Symbols = 2,
    Noise = 3,
}

/// Independent generator for one `(seed, SNR point, trial, purpose)` tuple.
pub fn stream_rng(master_seed: u64, snr_index: usize, trial_index: usize, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&(snr_index as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(trial_index as u64).to_le_bytes());
    key[24..].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Circularly symmetric complex Gaussian with variance `var`.
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let sigma = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(sigma * re, sigma * im)
}

/// I.i.d. Rayleigh channel with unit-variance entries.
pub fn generate_channel<R: Rng + ?Sized>(rng: &mut R, users: usize, antennas: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(users, antennas, |_, _| complex_gaussian(rng, 1.0))
}

/// Uniform i.i.d. data symbols with their concatenated bit labels.
pub fn generate_symbols<R: Rng + ?Sized>(
    rng: &mut R,
    constellation: &Constellation,
    users: usize,
) -> (Vec<u8>, ComplexVector) {
    let size = constellation.points().len();
    let mut bits = Vec::with_capacity(users * constellation.bits_per_symbol());
    let mut s = Vec::with_capacity(users);
    for _ in 0..users {
        let idx = rng.random_range(0..size);
        bits.extend(constellation.label(idx));
        s.push(constellation.symbol(idx));
    }
    (bits, s)
}

pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, users: usize, n0: f64) -> ComplexVector {
    (0..users).map(|_| complex_gaussian(rng, n0)).collect()
}

/// Nearest-symbol detection of `beta (H x + n)` for a given noise vector.
pub fn detect_with_noise(
    x: &[C64],
    beta: f64,
    h: &ComplexMatrix,
    noise: &[C64],
    constellation: &Constellation,
) -> Vec<u8> {
    h.mul_vec(x)
        .iter()
        .zip(noise)
        .flat_map(|(hx, n)| constellation.label(constellation.detect((hx + n) * beta)))
        .collect()
}

/// Sends `x` over `H` with AWGN of variance `n0` per user and detects each
/// user's symbol from `beta * y`.
pub fn transmit_detect<R: Rng + ?Sized>(
    x: &[C64],
    beta: f64,
    h: &ComplexMatrix,
    n0: f64,
    rng: &mut R,
    constellation: &Constellation,
) -> Vec<u8> {
    let noise = draw_noise(rng, h.rows(), n0);
    detect_with_noise(x, beta, h, &noise, constellation)
}

/// Every random quantity of one trial, drawn up front.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDraws {
    pub channel: ComplexMatrix,
    /// `(bits, symbols)` per data vector.
    pub symbols: Vec<(Vec<u8>, ComplexVector)>,
    pub noise: Vec<ComplexVector>,
}

pub fn draw_trial(config: &SimConfig, snr_index: usize, trial_index: usize) -> TrialDraws {
    let n0 = noise_variance_from_snr_db(config.snr_db_points[snr_index]);
    let constellation = config.constellation.build();
    let seed = config.master_seed;
    let mut ch_rng = stream_rng(seed, snr_index, trial_index, StreamPurpose::Channel);
    let mut sym_rng = stream_rng(seed, snr_index, trial_index, StreamPurpose::Symbols);
    let mut noise_rng = stream_rng(seed, snr_index, trial_index, StreamPurpose::Noise);
    let channel = generate_channel(&mut ch_rng, config.users, config.antennas);
    let symbols = (0..config.symbols_per_trial)
        .map(|_| generate_symbols(&mut sym_rng, &constellation, config.users))
        .collect();
    let noise = (0..config.symbols_per_trial)
        .map(|_| draw_noise(&mut noise_rng, config.users, n0))
        .collect();
    TrialDraws {
        channel,
        symbols,
        noise,
    }
}

/// Transmit vector and precoding factor from any of the precoders.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeOutcome {
    pub x: ComplexVector,
    pub beta: f64,
    pub nodes_visited: u64,
}

pub fn run_precoder(problem: &PrecodingProblem, kind: PrecoderKind, tricks: &TrickConfig) -> Result<PrecodeOutcome> {
    let res = match kind {
        PrecoderKind::Bb1 => bb1_solve(problem, tricks)?,
        PrecoderKind::Exhaustive => exhaustive_solve(problem)?,
        PrecoderKind::WfQuantized => wf_quantized_precoder(problem)?,
        PrecoderKind::WfInfinite => {
            let r = wf_infinite_precoder(problem)?;
            return Ok(PrecodeOutcome {
                x: r.x,
                beta: r.beta,
                nodes_visited: 0,
            });
        }
    };
    Ok(PrecodeOutcome {
        x: res.x,
        beta: res.beta,
        nodes_visited: res.stats.nodes_visited,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    bit_errors: u64,
    bits: u64,
    nodes: u64,
    solves: u64,
    nanos: u128,
}

impl std::ops::Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally {
            bit_errors: self.bit_errors + o.bit_errors,
            bits: self.bits + o.bits,
            nodes: self.nodes + o.nodes,
            solves: self.solves + o.solves,
            nanos: self.nanos + o.nanos,
        }
    }
}

fn run_trial(config: &SimConfig, constellation: &Constellation, snr_index: usize, trial: usize) -> Result<Tally> {
    let n0 = noise_variance_from_snr_db(config.snr_db_points[snr_index]);
    let draws = draw_trial(config, snr_index, trial);
    let mut tally = Tally::default();
    for (k, ((bits, s), noise)) in draws.symbols.into_iter().zip(&draws.noise).enumerate() {
        let problem = PrecodingProblem::new(draws.channel.clone(), s, n0)?;
        let start = config.record_timing.then(Instant::now);
        let out = run_precoder(&problem, config.precoder, &config.tricks).map_err(|e| match e {
            PrecodeError::DegenerateInstance(msg) => {
                PrecodeError::DegenerateInstance(format!("{msg} (snr index {snr_index}, trial {trial}, vector {k})"))
            }
            other => other,
        })?;
        if let Some(start) = start {
            tally.nanos += start.elapsed().as_nanos();
        }
        let detected = detect_with_noise(&out.x, out.beta, &draws.channel, noise, constellation);
        tally.bit_errors += bits.iter().zip(&detected).filter(|(a, b)| a != b).count() as u64;
        tally.bits += bits.len() as u64;
        tally.nodes += out.nodes_visited;
        tally.solves += 1;
    }
    Ok(tally)
}

/// Aggregates for one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub n0: f64,
    pub bit_errors: u64,
    pub bits_sent: u64,
    pub ber: f64,
    pub mean_nodes_visited: f64,
    pub mean_wall_time: Duration,
}

impl SnrPoint {
    /// Binomial standard error of the BER estimate.
    pub fn ber_std_error(&self) -> f64 {
        (self.ber * (1.0 - self.ber) / self.bits_sent as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub points: Vec<SnrPoint>,
}

pub const CSV_HEADER: &str = "snr_db,ber,bit_errors,bits_sent,mean_nodes,mean_ms";

impl SimResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.snr_db,
                p.ber,
                p.bit_errors,
                p.bits_sent,
                p.mean_nodes_visited,
                p.mean_wall_time.as_secs_f64() * 1e3
            );
        }
        out
    }

    /// JSON document with the results, the full configuration and the
    /// library version.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "points": self.points.iter().map(|p| serde_json::json!({
                "snr_db": p.snr_db,
                "n0": p.n0,
                "ber": p.ber,
                "bit_errors": p.bit_errors,
                "bits_sent": p.bits_sent,
                "mean_nodes": p.mean_nodes_visited,
                "mean_ms": p.mean_wall_time.as_secs_f64() * 1e3,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Runs the sweep on the global rayon pool.
pub fn run_ber_sweep(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let constellation = config.constellation.build();
    let mut points = Vec::with_capacity(config.snr_db_points.len());
    for (snr_index, &snr_db) in config.snr_db_points.iter().enumerate() {
        let tallies = (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, &constellation, snr_index, t))
            .collect::<Result<Vec<Tally>>>()?;
        let total = tallies.into_iter().fold(Tally::default(), |a, b| a + b);
        let solves = total.solves.max(1);
        points.push(SnrPoint {
            snr_db,
            n0: noise_variance_from_snr_db(snr_db),
            bit_errors: total.bit_errors,
            bits_sent: total.bits,
            ber: total.bit_errors as f64 / total.bits as f64,
            mean_nodes_visited: total.nodes as f64 / solves as f64,
            mean_wall_time: Duration::from_nanos((total.nanos / solves as u128) as u64),
        });
    }
    Ok(SimResult {
        config: config.clone(),
        points,
    })
}

/// Runs the sweep on a dedicated pool of `threads` workers.
pub fn run_ber_sweep_with_threads(config: &SimConfig, threads: usize) -> Result<SimResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PrecodeError::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| run_ber_sweep(config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_sqr;

    #[test]
    fn channel_moments() {
        let mut rng = stream_rng(7, 0, 0, StreamPurpose::Channel);
        let h = generate_channel(&mut rng, 100, 1000);
        let n = 100_000.0;
        let mut power = 0.0;
        let mut var_re = 0.0;
        let mut var_im = 0.0;
        for i in 0..100 {
            for j in 0..1000 {
                let v = h[(i, j)];
                power += v.norm_sqr();
                var_re += v.re * v.re;
                var_im += v.im * v.im;
            }
        }
        assert!((power / n - 1.0).abs() < 0.02);
        assert!((var_re / n - 0.5).abs() < 0.02);
        assert!((var_im / n - 0.5).abs() < 0.02);
    }

    #[test]
    fn channel_is_reproducible() {
        let a = generate_channel(&mut stream_rng(3, 1, 2, StreamPurpose::Channel), 3, 4);
        let b = generate_channel(&mut stream_rng(3, 1, 2, StreamPurpose::Channel), 3, 4);
        let c = generate_channel(&mut stream_rng(3, 1, 3, StreamPurpose::Channel), 3, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn symbol_frequencies_and_energy() {
        let q = Constellation::qpsk();
        let mut rng = stream_rng(1, 0, 0, StreamPurpose::Symbols);
        let mut counts = [0usize; 4];
        let mut energy = 0.0;
        let n = 100_000;
        for _ in 0..n {
            let (bits, s) = generate_symbols(&mut rng, &q, 1);
            let idx = q.index_from_bits(&bits);
            assert_eq!(q.modulate(&bits), s[0]);
            counts[idx] += 1;
            energy += norm_sqr(&s);
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
        assert!((energy / n as f64 - 1.0).abs() < 0.01);
    }

    #[test]
    fn noiseless_inversion_detects_everything() {
        let h = ComplexMatrix::identity(2);
        let q = Constellation::qpsk();
        let mut rng = stream_rng(5, 0, 0, StreamPurpose::Noise);
        let mut sym_rng = stream_rng(5, 0, 0, StreamPurpose::Symbols);
        for _ in 0..100 {
            let (bits, s) = generate_symbols(&mut sym_rng, &q, 2);
            let p = PrecodingProblem::new(h.clone(), s, 1e-12).unwrap();
            let wf = wf_infinite_precoder(&p).unwrap();
            assert_eq!(transmit_detect(&wf.x, wf.beta, &h, 1e-12, &mut rng, &q), bits);
        }
    }

    #[test]
    fn sign_flip_leaves_estimate_unchanged() {
        let h = ComplexMatrix::from_fn(2, 3, |i, j| C64::new(i as f64 - 0.3 * j as f64, 0.7 * j as f64));
        let x = vec![C64::new(0.4, -0.2), C64::new(-0.1, 0.3), C64::new(0.5, 0.5)];
        let neg: Vec<C64> = x.iter().map(|v| -v).collect();
        let a: Vec<C64> = h.mul_vec(&x).iter().map(|v| v * 0.8).collect();
        let b: Vec<C64> = h.mul_vec(&neg).iter().map(|v| v * -0.8).collect();
        assert_eq!(a, b);
        let q = Constellation::qpsk();
        let zero = vec![C64::new(0.0, 0.0); 2];
        assert_eq!(
            detect_with_noise(&x, 0.8, &h, &zero, &q),
            detect_with_noise(&neg, -0.8, &h, &zero, &q)
        );
    }

    #[test]
    fn scalar_qpsk_awgn_matches_q_function() {
        // Per-bit error probability of QPSK at N0 = 2 with unit symbol
        // energy: Q(sqrt(1/N0)) = 0.5 erfc(0.5) = 0.23975.
        let expected = 0.239_750_061_093_477_9;
        let q = Constellation::qpsk();
        let h = ComplexMatrix::identity(1);
        let x = [C64::new(1.0, 0.0)];
        let mut sym_rng = stream_rng(9, 0, 0, StreamPurpose::Symbols);
        let mut noise_rng = stream_rng(9, 0, 0, StreamPurpose::Noise);
        let uses = 1_000_000;
        let mut errors = 0usize;
        for _ in 0..uses {
            let (bits, s) = generate_symbols(&mut sym_rng, &q, 1);
            // Send the symbol itself through a unit channel.
            let xs = vec![x[0] * s[0]];
            let det = transmit_detect(&xs, 1.0, &h, 2.0, &mut noise_rng, &q);
            errors += bits.iter().zip(&det).filter(|(a, b)| a != b).count();
        }
        let ber = errors as f64 / (2 * uses) as f64;
        assert!((ber - expected).abs() < 0.003, "{ber}");
    }

    #[test]
    fn draws_independent_of_precoder() {
        let mut a = SimConfig::new(4, 2, PrecoderKind::Bb1);
        a.snr_db_points = vec![0.0, 5.0];
        a.symbols_per_trial = 3;
        a.master_seed = 17;
        let mut b = a.clone();
        b.precoder = PrecoderKind::WfInfinite;
        for snr in 0..2 {
            for t in 0..3 {
                assert_eq!(draw_trial(&a, snr, t), draw_trial(&b, snr, t));
            }
        }
    }

    #[test]
    fn sweep_accounting_and_thread_independence() {
        let mut cfg = SimConfig::new(4, 2, PrecoderKind::Bb1);
        cfg.snr_db_points = vec![-2.0, 4.0];
        cfg.trials = 8;
        cfg.symbols_per_trial = 5;
        cfg.master_seed = 2024;
        let one = run_ber_sweep_with_threads(&cfg, 1).unwrap();
        let four = run_ber_sweep_with_threads(&cfg, 4).unwrap();
        assert_eq!(one.to_csv(), four.to_csv());
        for p in &one.points {
            assert_eq!(p.bits_sent, 8 * 5 * 2 * 2);
            assert_eq!(p.ber, p.bit_errors as f64 / p.bits_sent as f64);
            assert!((0.0..=1.0).contains(&p.ber));
        }
    }

    #[test]
    fn exhaustive_node_count_is_deterministic() {
        let mut cfg = SimConfig::new(3, 1, PrecoderKind::Exhaustive);
        cfg.snr_db_points = vec![0.0, 10.0];
        cfg.trials = 4;
        cfg.symbols_per_trial = 2;
        let res = run_ber_sweep(&cfg).unwrap();
        for p in res.points {
            assert_eq!(p.mean_nodes_visited, crate::baselines::exhaustive_leaf_count(3) as f64);
        }
    }

    #[test]
    fn precoder_names_parse() {
        for k in [
            PrecoderKind::Bb1,
            PrecoderKind::Exhaustive,
            PrecoderKind::WfQuantized,
            PrecoderKind::WfInfinite,
        ] {
            assert_eq!(k.name().parse::<PrecoderKind>().unwrap(), k);
        }
        assert_eq!(
            "wf-quantized".parse::<PrecoderKind>().unwrap(),
            PrecoderKind::WfQuantized
        );
        assert!("sp".parse::<PrecoderKind>().is_err());
    }
}
