//! Frame-level Monte Carlo of the secondary link.
//!
//! Each frame draws channel occupancy, sensing decisions and gain pairs,
//! picks a channel, applies the optimal power and records the delivered
//! service and interference. Frames are independent, so the per-frame
//! moment `E[e^{-θS}]` determines the effective capacity directly.
//!
//! Work is split into fixed chunks of [`CHUNK_FRAMES`] frames; chunk `i`
//! uses ChaCha8 stream `i` of the caller's seed and chunk results are merged
//! in chunk order, so aggregates do not depend on the thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fading::GainSampler;
use crate::optimizer::{Mode, PowerPolicy, SystemParams};
use crate::statemodel::{link_rates, LinkRates, RateContext};

pub const CHUNK_FRAMES: u64 = 1 << 16;
/// Stream index reserved for queue traces.
const QUEUE_STREAM: u64 = u64::MAX;

/// Sensing/occupancy scenario of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// All detected busy, chosen channel busy.
    S1,
    /// All detected busy, chosen channel idle.
    S2,
    /// Chosen idle-detected channel busy.
    S3,
    /// Chosen idle-detected channel idle.
    S4,
}

impl Scenario {
    pub fn index(self) -> usize {
        match self {
            Self::S1 => 0,
            Self::S2 => 1,
            Self::S3 => 2,
            Self::S4 => 3,
        }
    }
}

/// How the transmitting channel is picked among the candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Largest `z/z_sp`.
    #[default]
    MaxRatio,
    /// Uniformly at random.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutcome {
    pub scenario: Scenario,
    /// Number of channels detected idle.
    pub k_idle: u32,
    pub selected_ratio: f64,
    /// Transmit power (W).
    pub power: f64,
    pub rates: LinkRates,
    pub service_bits: f64,
    /// `P·z_sp` delivered to an active primary receiver (W).
    pub interference_w: f64,
    /// `1..=M+2`.
    pub state_index: u32,
    /// `e^{-θ·service_bits}`.
    pub moment: f64,
}

/// One sensed channel of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub busy: bool,
    pub detected_busy: bool,
    pub z: f64,
    pub z_sp: f64,
    pub ratio: f64,
}

/// Draws frames for fixed parameters and policy.
#[derive(Debug, Clone)]
pub struct FrameSimulator {
    params: SystemParams,
    policy: PowerPolicy,
    sampler: GainSampler,
    ctx: RateContext,
    selection: Selection,
}

impl FrameSimulator {
    pub fn new(params: &SystemParams, policy: &PowerPolicy, selection: Selection) -> Result<Self> {
        params.validate()?;
        policy.ln_threshold(Mode::Busy)?;
        Ok(Self {
            params: *params,
            policy: *policy,
            sampler: GainSampler::new(&params.model)?,
            ctx: params.rate_context(),
            selection,
        })
    }

    /// Simulates one frame; `scratch` is reused between calls.
    pub fn frame<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        scratch: &mut Vec<Channel>,
    ) -> Result<FrameOutcome> {
        let p = &self.params;
        scratch.clear();
        for _ in 0..p.channels {
            let busy = rng.random_bool(p.rho);
            let detected_busy = rng.random_bool(if busy { p.perf.pd } else { p.perf.pf });
            let g = self.sampler.pair(rng);
            scratch.push(Channel {
                busy,
                detected_busy,
                z: g.z,
                z_sp: g.z_sp,
                ratio: g.ratio(),
            });
        }
        let k_idle = scratch.iter().filter(|c| !c.detected_busy).count() as u32;
        let mode = if k_idle == 0 { Mode::Busy } else { Mode::Idle };
        let candidate = |c: &&Channel| mode == Mode::Busy || !c.detected_busy;
        let chosen = match self.selection {
            Selection::MaxRatio => {
                scratch
                    .iter()
                    .filter(candidate)
                    .reduce(|best, c| if c.ratio > best.ratio { c } else { best })
            }
            Selection::Uniform => {
                let n = if k_idle == 0 { p.channels } else { k_idle };
                let pick = rng.random_range(0..n) as usize;
                scratch.iter().filter(candidate).nth(pick)
            }
        }
        .copied()
        .expect("at least one candidate channel");

        let power = self.policy.power(mode, chosen.z, chosen.z_sp)?;
        let (p1, p2) = match mode {
            Mode::Busy => (power, 0.0),
            Mode::Idle => (0.0, power),
        };
        let rates = link_rates(&self.ctx, p1, p2, chosen.z)?;
        let scenario = match (mode, chosen.busy) {
            (Mode::Busy, true) => Scenario::S1,
            (Mode::Busy, false) => Scenario::S2,
            (Mode::Idle, true) => Scenario::S3,
            (Mode::Idle, false) => Scenario::S4,
        };
        let payload = p.frame - p.sensing;
        let (service_bits, state_index) = match scenario {
            Scenario::S1 | Scenario::S2 => (payload * rates.r1, 1),
            Scenario::S3 => (0.0, p.channels + 2),
            Scenario::S4 => (payload * rates.r2, k_idle + 1),
        };
        let interference_w = if chosen.busy {
            power * chosen.z_sp
        } else {
            0.0
        };
        Ok(FrameOutcome {
            scenario,
            k_idle,
            selected_ratio: chosen.ratio,
            power,
            rates,
            service_bits,
            interference_w,
            state_index,
            moment: (-p.theta * service_bits).exp(),
        })
    }
}

/// Sums over a batch of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub frames: u64,
    pub sum_moment: f64,
    pub sum_moment_sq: f64,
    pub sum_interference: f64,
    pub sum_interference_sq: f64,
    pub sum_service: f64,
    pub sum_service_sq: f64,
    pub scenario_counts: [u64; 4],
    /// Visits to states `1..=M+2`, stored at index `state - 1`.
    pub state_counts: Vec<u64>,
}

fn mean_and_se(sum: f64, sum_sq: f64, n: u64) -> (f64, f64) {
    let n = n as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

impl Aggregates {
    fn empty(channels: u32) -> Self {
        Self {
            frames: 0,
            sum_moment: 0.0,
            sum_moment_sq: 0.0,
            sum_interference: 0.0,
            sum_interference_sq: 0.0,
            sum_service: 0.0,
            sum_service_sq: 0.0,
            scenario_counts: [0; 4],
            state_counts: vec![0; channels as usize + 2],
        }
    }

    fn record(&mut self, f: &FrameOutcome) {
        self.frames += 1;
        self.sum_moment += f.moment;
        self.sum_moment_sq += f.moment * f.moment;
        self.sum_interference += f.interference_w;
        self.sum_interference_sq += f.interference_w * f.interference_w;
        self.sum_service += f.service_bits;
        self.sum_service_sq += f.service_bits * f.service_bits;
        self.scenario_counts[f.scenario.index()] += 1;
        self.state_counts[f.state_index as usize - 1] += 1;
    }

    fn merge(&mut self, other: &Self) {
        self.frames += other.frames;
        self.sum_moment += other.sum_moment;
        self.sum_moment_sq += other.sum_moment_sq;
        self.sum_interference += other.sum_interference;
        self.sum_interference_sq += other.sum_interference_sq;
        self.sum_service += other.sum_service;
        self.sum_service_sq += other.sum_service_sq;
        for (a, b) in self.scenario_counts.iter_mut().zip(other.scenario_counts) {
            *a += b;
        }
        for (a, b) in self.state_counts.iter_mut().zip(&other.state_counts) {
            *a += b;
        }
    }

    /// Mean of `e^{-θS}` and its standard error.
    pub fn moment(&self) -> (f64, f64) {
        mean_and_se(self.sum_moment, self.sum_moment_sq, self.frames)
    }

    /// Mean interference (W) and its standard error.
    pub fn interference(&self) -> (f64, f64) {
        mean_and_se(self.sum_interference, self.sum_interference_sq, self.frames)
    }

    /// Mean service per frame (bits) and its standard error.
    pub fn service(&self) -> (f64, f64) {
        mean_and_se(self.sum_service, self.sum_service_sq, self.frames)
    }

    pub fn scenario_frequencies(&self) -> [f64; 4] {
        self.scenario_counts.map(|c| c as f64 / self.frames as f64)
    }
}

fn chunk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `n_frames` frames with max-ratio selection.
pub fn simulate_frames(
    p: &SystemParams,
    pol: &PowerPolicy,
    n_frames: u64,
    seed: u64,
) -> Result<Aggregates> {
    simulate_frames_with(p, pol, n_frames, seed, Selection::MaxRatio)
}

/// Simulates `n_frames` frames with the given channel selection.
pub fn simulate_frames_with(
    p: &SystemParams,
    pol: &PowerPolicy,
    n_frames: u64,
    seed: u64,
    selection: Selection,
) -> Result<Aggregates> {
    if n_frames == 0 {
        return Err(Error::Domain("at least one frame is required".into()));
    }
    let sim = FrameSimulator::new(p, pol, selection)?;
    let chunks = n_frames.div_ceil(CHUNK_FRAMES);
    let parts: Vec<Aggregates> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let len = CHUNK_FRAMES.min(n_frames - i * CHUNK_FRAMES);
            let mut rng = chunk_rng(seed, i);
            let mut scratch = Vec::with_capacity(p.channels as usize);
            let mut agg = Aggregates::empty(p.channels);
            for _ in 0..len {
                agg.record(&sim.frame(&mut rng, &mut scratch)?);
            }
            Ok(agg)
        })
        .collect::<Result<_>>()?;
    let mut total = Aggregates::empty(p.channels);
    for part in &parts {
        total.merge(part);
    }
    Ok(total)
}

/// Monte Carlo effective capacity with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    /// bits/s/Hz
    pub re: f64,
    pub se: f64,
}

/// `R̂ = -ln(mean e^{-θS})/(θTB_c)`. The standard error is only meaningful
/// for at least about 10^4 frames.
pub fn estimate_effective_capacity_mc(agg: &Aggregates, p: &SystemParams) -> Result<McEstimate> {
    let (m, se) = agg.moment();
    if !(m > 0.0) {
        return Err(Error::Degenerate(
            "every simulated frame had a vanishing moment".into(),
        ));
    }
    let norm = p.normalizer();
    Ok(McEstimate {
        re: (-m.ln() / norm).max(0.0),
        se: se / (m * norm),
    })
}

/// Queue simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueConfig {
    /// Constant arrivals per frame (bits).
    pub arrival_bits: f64,
    pub frames: u64,
    pub seed: u64,
    /// Keep the backlog after every frame in the trace.
    pub keep_backlog: bool,
}

/// Number of log-spaced tail thresholds.
pub const TAIL_POINTS: usize = 64;
/// Minimum exceedances for a threshold to enter the tail fit.
pub const MIN_EXCEEDANCES: u64 = 100;

/// Fitted `ln P(Q >= q) ≈ a - slope·q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    /// Decay rate (1/bit).
    pub slope: f64,
    pub se: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueTrace {
    /// Backlog after each frame, if requested.
    pub backlog: Vec<f64>,
    /// Tail thresholds `q` (bits), increasing.
    pub thresholds: Vec<f64>,
    /// Frames with backlog at least `thresholds[j]`.
    pub exceedances: Vec<u64>,
    pub frames: u64,
    pub mean_backlog: f64,
    pub max_backlog: f64,
    /// Mean service per frame observed in the trace (bits).
    pub mean_service: f64,
    /// False when arrivals are not below the mean service.
    pub stable: bool,
    pub fit: Option<TailFit>,
}

impl QueueTrace {
    pub fn tail_probability(&self, j: usize) -> f64 {
        self.exceedances[j] as f64 / self.frames as f64
    }
}

/// Runs the Lindley recursion `Q <- max(Q + a - S, 0)` over simulated
/// frames and fits the decay rate of the backlog tail.
///
/// The thresholds are log-spaced over `[q_top/1000, q_top]` with
/// `q_top = 2 ln(n)/θ`. The fit uses thresholds with at least
/// [`MIN_EXCEEDANCES`] exceedances that are no smaller than one frame's
/// arrivals.
pub fn simulate_queue(
    p: &SystemParams,
    pol: &PowerPolicy,
    cfg: &QueueConfig,
) -> Result<QueueTrace> {
    if !(cfg.arrival_bits >= 0.0 && cfg.arrival_bits.is_finite()) {
        return Err(Error::Domain(format!(
            "arrivals must be finite and nonnegative, got {}",
            cfg.arrival_bits
        )));
    }
    if cfg.frames < 2 {
        return Err(Error::Domain(
            "a queue trace needs at least two frames".into(),
        ));
    }
    let sim = FrameSimulator::new(p, pol, Selection::MaxRatio)?;
    let mut rng = chunk_rng(cfg.seed, QUEUE_STREAM);
    let mut scratch = Vec::with_capacity(p.channels as usize);

    let q_top = 2.0 * (cfg.frames as f64).ln() / p.theta;
    let thresholds: Vec<f64> = (0..TAIL_POINTS)
        .map(|j| q_top * 10f64.powf(-3.0 + 3.0 * j as f64 / (TAIL_POINTS - 1) as f64))
        .collect();
    // hits[j] counts frames whose backlog lies in [q_j, q_{j+1}).
    let mut hits = vec![0u64; TAIL_POINTS];
    let mut backlog = Vec::new();
    if cfg.keep_backlog {
        backlog.reserve(cfg.frames as usize);
    }
    let (mut q, mut sum_q, mut max_q, mut sum_s) = (0.0f64, 0.0, 0.0f64, 0.0);
    for _ in 0..cfg.frames {
        let s = sim.frame(&mut rng, &mut scratch)?.service_bits;
        q = (q + cfg.arrival_bits - s).max(0.0);
        sum_q += q;
        sum_s += s;
        max_q = max_q.max(q);
        let above = thresholds.partition_point(|&t| t <= q);
        if above > 0 {
            hits[above - 1] += 1;
        }
        if cfg.keep_backlog {
            backlog.push(q);
        }
    }
    let mut exceedances = hits;
    for j in (0..TAIL_POINTS - 1).rev() {
        exceedances[j] += exceedances[j + 1];
    }
    let n = cfg.frames as f64;
    let mean_service = sum_s / n;
    let fit = fit_tail(&thresholds, &exceedances, cfg.frames, cfg.arrival_bits);
    Ok(QueueTrace {
        backlog,
        thresholds,
        exceedances,
        frames: cfg.frames,
        mean_backlog: sum_q / n,
        max_backlog: max_q,
        mean_service,
        stable: cfg.arrival_bits < mean_service,
        fit,
    })
}

fn fit_tail(q: &[f64], exceed: &[u64], frames: u64, arrival: f64) -> Option<TailFit> {
    let pts: Vec<(f64, f64)> = q
        .iter()
        .zip(exceed)
        .filter(|&(&qj, &e)| e >= MIN_EXCEEDANCES && qj >= arrival)
        .map(|(&qj, &e)| (qj, (e as f64 / frames as f64).ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - my - b * (p.0 - mx)).powi(2))
        .sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    Some(TailFit {
        slope: -b,
        se,
        q_min: pts[0].0,
        q_max: pts[pts.len() - 1].0,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::solve_lambda;
    use crate::sensing::SensingPerformance;

    fn params(channels: u32) -> SystemParams {
        SystemParams {
            channels,
            ..SystemParams::default()
        }
    }

    #[test]
    fn frame_invariants() {
        let p = params(3);
        let pol = solve_lambda(&p).unwrap();
        let sim = FrameSimulator::new(&p, &pol, Selection::MaxRatio).unwrap();
        let mut rng = chunk_rng(1, 0);
        let mut scratch = Vec::new();
        let mut seen = [false; 4];
        for _ in 0..200_000 {
            let f = sim.frame(&mut rng, &mut scratch).unwrap();
            seen[f.scenario.index()] = true;
            assert!((1..=5).contains(&f.state_index));
            assert_eq!(f.scenario == Scenario::S3, f.state_index == 5);
            match f.scenario {
                Scenario::S1 | Scenario::S2 => {
                    assert_eq!(f.k_idle, 0);
                    assert_eq!(f.state_index, 1);
                }
                Scenario::S3 => {
                    assert_eq!(f.service_bits, 0.0);
                    if f.power > 0.0 {
                        assert!(f.rates.miss_is_off());
                    }
                }
                Scenario::S4 => assert_eq!(f.state_index, f.k_idle + 1),
            }
            if matches!(f.scenario, Scenario::S2 | Scenario::S4) {
                assert_eq!(f.interference_w, 0.0);
            }
            // The chosen channel has the largest ratio among candidates.
            let best = scratch
                .iter()
                .filter(|c| f.k_idle == 0 || !c.detected_busy)
                .map(|c| c.ratio)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(f.selected_ratio, best);
            assert!(f.service_bits >= 0.0 && f.moment > 0.0 && f.moment <= 1.0);
        }
        assert_eq!(seen, [true; 4]);
    }

    #[test]
    fn same_seed_same_aggregates_any_thread_count() {
        let p = params(2);
        let pol = solve_lambda(&p).unwrap();
        let n = 3 * CHUNK_FRAMES + 123;
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_frames(&p, &pol, n, 42).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, simulate_frames(&p, &pol, n, 42).unwrap());
        assert_eq!(one.frames, n);
        assert_eq!(one.state_counts.iter().sum::<u64>(), n);
        assert_ne!(one, simulate_frames(&p, &pol, n, 43).unwrap());
    }

    #[test]
    fn perfect_sensing_has_no_missed_detections() {
        let mut p = params(2);
        p.perf = SensingPerformance { pf: 0.0, pd: 1.0 };
        p.peak_power = Some(2.0);
        let pol = solve_lambda(&p).unwrap();
        let agg = simulate_frames(&p, &pol, 1_000_000, 5).unwrap();
        assert_eq!(agg.scenario_counts[2], 0);
    }

    #[test]
    fn always_missed_stream_has_zero_capacity() {
        let mut p = params(2);
        p.rho = 1.0;
        p.perf = SensingPerformance { pf: 0.3, pd: 0.0 };
        let pol = solve_lambda(&p).unwrap();
        let agg = simulate_frames(&p, &pol, 20_000, 5).unwrap();
        assert_eq!(agg.scenario_counts, [0, 0, 20_000, 0]);
        let est = estimate_effective_capacity_mc(&agg, &p).unwrap();
        assert_eq!((est.re, est.se), (0.0, 0.0));
    }

    #[test]
    fn smaller_theta_never_lowers_estimate() {
        // Same seed and policy give the same frames; only θ changes.
        let p = params(2);
        let pol = solve_lambda(&p).unwrap();
        let mut prev = 0.0;
        for theta in [0.4, 0.2, 0.1, 0.05, 0.025] {
            let mut q = p;
            q.theta = theta;
            let agg = simulate_frames(&q, &pol, 100_000, 8).unwrap();
            let est = estimate_effective_capacity_mc(&agg, &q).unwrap();
            assert!(est.re >= prev, "θ = {theta}");
            prev = est.re;
        }
    }

    #[test]
    fn zero_arrivals_keep_queue_empty() {
        let p = params(2);
        let pol = solve_lambda(&p).unwrap();
        let cfg = QueueConfig {
            arrival_bits: 0.0,
            frames: 10_000,
            seed: 1,
            keep_backlog: true,
        };
        let q = simulate_queue(&p, &pol, &cfg).unwrap();
        assert!(q.backlog.iter().all(|&b| b == 0.0));
        assert_eq!(q.backlog.len(), 10_000);
        assert_eq!(q.max_backlog, 0.0);
        assert!(q.exceedances.iter().all(|&e| e == 0));
        assert!(q.fit.is_none());
        assert!(q.stable);
    }

    #[test]
    fn overloaded_queue_is_flagged() {
        let p = params(1);
        let pol = solve_lambda(&p).unwrap();
        let cfg = QueueConfig {
            arrival_bits: 1e4,
            frames: 5_000,
            seed: 1,
            keep_backlog: true,
        };
        let q = simulate_queue(&p, &pol, &cfg).unwrap();
        assert!(!q.stable);
        assert!(q.backlog.windows(2).filter(|w| w[1] < w[0]).count() < 2_500);
    }

    #[test]
    fn tail_fit_recovers_exact_exponential() {
        let q: Vec<f64> = (1..=40).map(|i| f64::from(i) * 5.0).collect();
        let frames = 1_000_000_000u64;
        let exceed: Vec<u64> = q
            .iter()
            .map(|&x| (frames as f64 * (-0.1 * x).exp()).round() as u64)
            .collect();
        let fit = fit_tail(&q, &exceed, frames, 10.0).unwrap();
        assert!((fit.slope - 0.1).abs() < 1e-4, "{fit:?}");
        assert_eq!(fit.q_min, 10.0);
        assert!(fit.points >= 3);
    }

    #[test]
    fn rejects_bad_requests() {
        let p = params(1);
        let pol = solve_lambda(&p).unwrap();
        assert!(simulate_frames(&p, &pol, 0, 1).is_err());
        let unsolved = crate::optimizer::policy_constants(&p).unwrap();
        assert!(simulate_frames(&p, &unsolved, 10, 1).is_err());
        let cfg = QueueConfig {
            arrival_bits: -1.0,
            frames: 10,
            seed: 1,
            keep_backlog: false,
        };
        assert!(simulate_queue(&p, &pol, &cfg).is_err());
    }
}
