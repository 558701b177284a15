//! Optimal power adaptation under an average-interference limit and the
//! resulting effective capacity.
//!
//! With `x = z/z_sp` the selected channel's gain ratio, the optimal power in
//! busy-detected mode is `P1 = (μ1/z)·[(x/(β1λ))^(1/(c+1)) - 1]` above the
//! cutoff `x >= β1λ` and zero below it; idle-detected mode uses `μ2, β2`.
//! Writing `t` for the cutoff and `h = (x/t)^(1/(c+1)) - 1`, a transmitting
//! frame has SNR `h`, delivers interference `μh/x` and has service moment
//! `E[e^{-θS}] = (1+h)^{-c} = (x/t)^{-c/(c+1)}`.
//!
//! The multiplier `λ` spans hundreds of decades across realistic inputs, so
//! it is carried as `ln λ` and every integral is taken over `s = ln x`.

use crate::error::{ensure_finite, ensure_probability, Error, Result};
use crate::fading::{FadingModel, RatioLaw};
use crate::quadrature::{integrate_split, Tolerance};
use crate::sensing::SensingPerformance;
use crate::specfun::{ln_gamma, reg_lower_gamma, reg_upper_gamma};
use crate::statemodel::{transition_probabilities, ModelInputs, RateContext, MAX_CHANNELS};

/// Relative accuracy of every outer integral.
const QUAD_REL: f64 = 1e-9;
/// Relative residual accepted by the multiplier search.
pub const LAMBDA_REL_TOL: f64 = 1e-6;
/// Residual the bisection aims for before settling for `LAMBDA_REL_TOL`.
const LAMBDA_TARGET_TOL: f64 = 1e-8;
/// Relative disagreement tolerated between the per-k and collapsed sums.
const COLLAPSE_REL_TOL: f64 = 1e-7;
const MAX_BRACKET_STEPS: usize = 200;
const MAX_BISECTIONS: usize = 400;
/// Breakpoints in `s = ln x` that separate the regimes of the ratio law.
const LOG_BREAKS: [f64; 4] = [-40.0, -10.0, 0.0, 10.0];

/// Physical, QoS and sensing parameters of the secondary link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Number of sensed channels `M`.
    pub channels: u32,
    /// Frame duration `T` (s).
    pub frame: f64,
    /// Sensing duration `N` (s), `0 < N < T`.
    pub sensing: f64,
    /// Coherence bandwidth `B_c` (Hz).
    pub bandwidth: f64,
    /// QoS exponent `θ` (1/bit).
    pub theta: f64,
    /// Prior busy probability `ρ`.
    pub rho: f64,
    /// Noise variance per symbol (W).
    pub noise_var: f64,
    /// Primary-signal variance per symbol at the secondary receiver (W).
    pub signal_var: f64,
    /// Average interference limit `I_avg` (W).
    pub interference_cap: f64,
    pub model: FadingModel,
    pub perf: SensingPerformance,
    /// Optional peak transmit power (W) applied to both modes.
    pub peak_power: Option<f64>,
}

/// Rayleigh, M = 2, θ = 0.1, T = 1 s, N = 0.1 s, B_c = 10 kHz, ρ = 0.1,
/// P_d = 0.9, P_f = 0.2, noise and primary variances 1e-4 W, I_avg = −40 dB re 1 W.
impl Default for SystemParams {
    fn default() -> Self {
        Self {
            channels: 2,
            frame: 1.0,
            sensing: 0.1,
            bandwidth: 1e4,
            theta: 0.1,
            rho: 0.1,
            noise_var: 1e-4,
            signal_var: 1e-4,
            interference_cap: 1e-4,
            model: FadingModel::Rayleigh,
            perf: SensingPerformance { pf: 0.2, pd: 0.9 },
            peak_power: None,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_CHANNELS).contains(&self.channels) {
            return Err(Error::Domain(format!(
                "number of channels must lie in 1..={MAX_CHANNELS}, got {}",
                self.channels
            )));
        }
        for (name, v) in [
            ("frame", self.frame),
            ("sensing", self.sensing),
            ("bandwidth", self.bandwidth),
            ("theta", self.theta),
            ("noise_var", self.noise_var),
            ("signal_var", self.signal_var),
            ("interference_cap", self.interference_cap),
        ] {
            ensure_finite(name, v)?;
        }
        if !(self.sensing > 0.0 && self.sensing < self.frame) {
            return Err(Error::Domain(format!(
                "sensing time must satisfy 0 < N < T, got N = {}, T = {}",
                self.sensing, self.frame
            )));
        }
        if !(self.bandwidth > 0.0 && self.theta > 0.0 && self.noise_var > 0.0) {
            return Err(Error::Domain(
                "bandwidth, theta and noise variance must be positive".into(),
            ));
        }
        if self.signal_var < 0.0 {
            return Err(Error::Domain("signal variance must be nonnegative".into()));
        }
        if !(self.interference_cap > 0.0) {
            return Err(Error::Domain(format!(
                "average interference limit must be positive, got {}",
                self.interference_cap
            )));
        }
        if let Some(p) = self.peak_power {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Domain(format!(
                    "peak power must be positive and finite, got {p}"
                )));
            }
        }
        ensure_probability("rho", self.rho)?;
        ensure_probability("pf", self.perf.pf)?;
        ensure_probability("pd", self.perf.pd)?;
        self.model.validate()
    }

    pub fn inputs(&self) -> ModelInputs {
        ModelInputs {
            channels: self.channels,
            rho: self.rho,
            perf: self.perf,
        }
    }

    pub fn rate_context(&self) -> RateContext {
        RateContext {
            bandwidth: self.bandwidth,
            noise_var: self.noise_var,
            signal_var: self.signal_var,
        }
    }

    /// `θ·T·B_c`, the factor turning a log-moment into bits/s/Hz.
    pub fn normalizer(&self) -> f64 {
        self.theta * self.frame * self.bandwidth
    }

    /// Bits carried by one frame at SNR `snr`.
    pub fn service_bits(&self, snr: f64) -> f64 {
        (self.frame - self.sensing) * self.bandwidth * snr.ln_1p() / std::f64::consts::LN_2
    }
}

/// Transmission mode selected by the sensing outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every channel detected busy; power `P1`.
    Busy,
    /// At least one channel detected idle; power `P2`.
    Idle,
}

/// Constants of the optimal policy and, once solved, its multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPolicy {
    /// `B_c(T-N)θ/ln 2`.
    pub c: f64,
    /// `B_c(σ_n² + σ_sp²)`.
    pub mu1: f64,
    /// `B_c σ_n²`.
    pub mu2: f64,
    /// `μ1ρP_d/(cα)`; infinite when the busy mode never occurs.
    pub beta1: f64,
    /// `ρ(1-P_d)μ2/(c(1-ρ)(1-P_f))`; infinite when the idle mode never
    /// carries data.
    pub beta2: f64,
    /// `ln λ`; `-∞` means the constraint is slack.
    pub ln_lambda: Option<f64>,
    pub peak_power: Option<f64>,
}

impl PowerPolicy {
    pub fn lambda(&self) -> Option<f64> {
        self.ln_lambda.map(f64::exp)
    }

    pub fn with_ln_lambda(self, ln_lambda: f64) -> Self {
        Self {
            ln_lambda: Some(ln_lambda),
            ..self
        }
    }

    pub fn mu(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Busy => self.mu1,
            Mode::Idle => self.mu2,
        }
    }

    pub fn beta(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Busy => self.beta1,
            Mode::Idle => self.beta2,
        }
    }

    fn solved_ln_lambda(&self) -> Result<f64> {
        self.ln_lambda
            .ok_or_else(|| Error::Domain("power policy has no multiplier yet".into()))
    }

    /// `ln(βλ)`, the log of the ratio cutoff for `mode`.
    pub fn ln_threshold(&self, mode: Mode) -> Result<f64> {
        Ok(ln_cutoff(self.beta(mode), self.solved_ln_lambda()?))
    }

    /// Optimal power for gains `(z, z_sp)` in `mode`.
    ///
    /// A null secondary link gets no power. An interference-free link
    /// (`z_sp = 0 < z`) above the cutoff takes the peak power and is an
    /// error when no peak is configured.
    pub fn power(&self, mode: Mode, z: f64, z_sp: f64) -> Result<f64> {
        if !(z >= 0.0 && z_sp >= 0.0) || z.is_infinite() || z_sp.is_infinite() {
            return Err(Error::Domain(format!(
                "gains must be finite and nonnegative, got z = {z}, z_sp = {z_sp}"
            )));
        }
        let ln_t = self.ln_threshold(mode)?;
        if z == 0.0 {
            return Ok(0.0);
        }
        let ln_x = z.ln() - z_sp.ln();
        let p = if ln_x < ln_t {
            0.0
        } else {
            let h = snr_above_cutoff(ln_x, ln_t, self.c);
            self.mu(mode) * h / z
        };
        match self.peak_power {
            Some(cap) => Ok(p.min(cap)),
            None if p.is_finite() => Ok(p),
            None => Err(Error::Domain(format!(
                "unbounded power at ratio ln x = {ln_x} without a peak-power limit"
            ))),
        }
    }
}

fn ln_cutoff(beta: f64, ln_lambda: f64) -> f64 {
    if beta == f64::INFINITY {
        f64::INFINITY
    } else if beta == 0.0 || ln_lambda == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        beta.ln() + ln_lambda
    }
}

/// `h = (x/t)^(1/(c+1)) - 1` from logs.
fn snr_above_cutoff(ln_x: f64, ln_t: f64, c: f64) -> f64 {
    ((ln_x - ln_t) / (c + 1.0)).exp_m1()
}

/// Optimal power in busy-detected mode.
pub fn power_p1(z: f64, z_sp: f64, pol: &PowerPolicy) -> Result<f64> {
    pol.power(Mode::Busy, z, z_sp)
}

/// Optimal power in idle-detected mode.
pub fn power_p2(z: f64, z_sp: f64, pol: &PowerPolicy) -> Result<f64> {
    pol.power(Mode::Idle, z, z_sp)
}

/// Derives the policy constants. Fails when a mode that carries data has no
/// interference price (`β = 0`) and no peak power bounds it.
pub fn policy_constants(p: &SystemParams) -> Result<PowerPolicy> {
    p.validate()?;
    let inputs = p.inputs();
    let c = p.bandwidth * (p.frame - p.sensing) * p.theta / std::f64::consts::LN_2;
    let mu1 = p.bandwidth * (p.noise_var + p.signal_var);
    let mu2 = p.bandwidth * p.noise_var;
    let alpha = inputs.alpha();
    let beta1 = if alpha > 0.0 {
        mu1 * p.rho * p.perf.pd / (c * alpha)
    } else {
        f64::INFINITY
    };
    let idle = inputs.idle_mass();
    let beta2 = if idle > 0.0 {
        inputs.miss_mass() * mu2 / (c * idle)
    } else {
        f64::INFINITY
    };
    if p.peak_power.is_none() {
        for (mode, beta) in [("busy", beta1), ("idle", beta2)] {
            if beta == 0.0 {
                return Err(Error::Degenerate(format!(
                    "{mode}-detected transmissions never interfere, so their power is \
                     unbounded; supply a peak-power limit"
                )));
            }
        }
    }
    Ok(PowerPolicy {
        c,
        mu1,
        mu2,
        beta1,
        beta2,
        ln_lambda: None,
        peak_power: p.peak_power,
    })
}

/// Everything needed to integrate one mode against a ratio law.
struct Branch<'a> {
    model: &'a FadingModel,
    ln_t: f64,
    mu: f64,
    c: f64,
    peak: Option<f64>,
}

impl Branch<'_> {
    fn new<'a>(pol: &PowerPolicy, mode: Mode, model: &'a FadingModel) -> Result<Branch<'a>> {
        Ok(Branch {
            model,
            ln_t: pol.ln_threshold(mode)?,
            mu: pol.mu(mode),
            c: pol.c,
            peak: pol.peak_power,
        })
    }

    fn shape(&self) -> f64 {
        f64::from(self.model.shape())
    }

    /// Expected interference `E[P z_sp]` against `density` (a possibly
    /// unnormalized ratio law evaluated at `s = ln x`).
    fn interference<D: Fn(f64) -> RatioLaw>(&self, density: D) -> Result<f64> {
        if self.ln_t == f64::INFINITY {
            return Ok(0.0);
        }
        let tol = Tolerance::relative(QUAD_REL);
        match self.peak {
            None => {
                if self.ln_t == f64::NEG_INFINITY {
                    return Ok(f64::INFINITY);
                }
                let f = |s: f64| {
                    let law = density(s);
                    if law.pdf == 0.0 {
                        return 0.0;
                    }
                    self.mu * snr_above_cutoff(s, self.ln_t, self.c) * law.pdf
                };
                Ok(integrate_split(f, self.ln_t, f64::INFINITY, &LOG_BREAKS, tol)?.value)
            }
            Some(peak) => {
                let f = |s: f64| {
                    let law = density(s);
                    if law.log_pdf == 0.0 {
                        return 0.0;
                    }
                    self.capped_interference(s, peak) * law.log_pdf
                };
                Ok(integrate_split(f, self.ln_t, f64::INFINITY, &LOG_BREAKS, tol)?.value)
            }
        }
    }

    /// `E[min(P_opt, P_max)·z_sp | x]` with `z_sp | x ~ Gamma(2m, m(1+x))`.
    fn capped_interference(&self, s: f64, peak: f64) -> f64 {
        let x = s.exp();
        let two_m = 2.0 * self.shape();
        let rate = self.shape() * (1.0 + x);
        let h = snr_above_cutoff(s, self.ln_t, self.c);
        // The peak binds when z_sp < b.
        let b = self.mu * h / (x * peak);
        if b.is_infinite() {
            return peak * two_m / rate;
        }
        let lower = reg_lower_gamma(two_m + 1.0, rate * b);
        let upper = reg_upper_gamma(two_m, rate * b);
        match (lower, upper) {
            (Ok(l), Ok(u)) => peak * (two_m / rate * l + b * u),
            _ => f64::NAN,
        }
    }

    /// `∫ E[e^{-θS} | x] dF(x)` over the transmitting region, excluding the
    /// below-cutoff mass.
    fn mgf<D: Fn(f64) -> RatioLaw>(&self, density: D) -> Result<f64> {
        if self.ln_t == f64::INFINITY {
            return Ok(0.0);
        }
        let tol = Tolerance::relative(QUAD_REL);
        let kappa = self.c / (self.c + 1.0);
        match self.peak {
            None => {
                if self.ln_t == f64::NEG_INFINITY {
                    return Ok(0.0);
                }
                let f = |s: f64| {
                    let law = density(s);
                    if law.log_pdf == 0.0 {
                        return 0.0;
                    }
                    (-kappa * (s - self.ln_t)).exp() * law.log_pdf
                };
                Ok(integrate_split(f, self.ln_t, f64::INFINITY, &LOG_BREAKS, tol)?.value)
            }
            Some(peak) => {
                let f = |s: f64| {
                    let law = density(s);
                    if law.log_pdf == 0.0 {
                        return 0.0;
                    }
                    self.capped_mgf(s, peak).unwrap_or(f64::NAN) * law.log_pdf
                };
                Ok(integrate_split(f, self.ln_t, f64::INFINITY, &LOG_BREAKS, tol)?.value)
            }
        }
    }

    /// `E[(1 + min(h, P_max x z_sp/μ))^{-c} | x]`.
    fn capped_mgf(&self, s: f64, peak: f64) -> Result<f64> {
        let x = s.exp();
        let m = self.shape();
        let two_m = 2.0 * m;
        let h = snr_above_cutoff(s, self.ln_t, self.c);
        // In w = m(1+x)·z_sp the SNR under the peak is a·w and the peak binds
        // while a·w < h.
        let a = peak * x / (self.mu * m * (1.0 + x));
        let w_bind = h / a;
        let ln_norm = ln_gamma(two_m);
        let c = self.c;
        let inner = |w: f64| {
            if w <= 0.0 {
                return 0.0;
            }
            (-c * (a * w).ln_1p() + (two_m - 1.0) * w.ln() - w - ln_norm).exp()
        };
        let scale = 1.0 / (a * c);
        let breaks = [
            scale,
            10.0 * scale,
            100.0 * scale,
            two_m,
            4.0 * two_m + 10.0,
        ];
        let tol = Tolerance {
            abs: 1e-16,
            rel: 1e-10,
            max_intervals: 4000,
        };
        let capped = integrate_split(inner, 0.0, w_bind, &breaks, tol)?.value;
        let free = if w_bind.is_infinite() {
            0.0
        } else {
            let kappa = c / (c + 1.0);
            (-kappa * (s - self.ln_t)).exp() * reg_upper_gamma(two_m, w_bind)?
        };
        Ok(capped + free)
    }
}

/// Weight of the busy mode in the interference average: `α^(M-1)ρP_d`.
fn busy_interference_weight(inputs: &ModelInputs) -> f64 {
    inputs.alpha().powi(inputs.channels as i32 - 1) * inputs.rho * inputs.perf.pd
}

/// Average interference power at the primary receiver.
pub fn average_interference(pol: &PowerPolicy, p: &SystemParams) -> Result<f64> {
    p.validate()?;
    let inputs = p.inputs();
    let m = p.channels;
    let mut total = 0.0;
    let w1 = busy_interference_weight(&inputs);
    if w1 > 0.0 {
        let busy = Branch::new(pol, Mode::Busy, &p.model)?;
        total += w1 * busy.interference(|s| p.model.law_at_log(s).max_of(m))?;
    }
    let miss = inputs.miss_mass();
    if miss > 0.0 {
        let idle = Branch::new(pol, Mode::Idle, &p.model)?;
        for k in 1..=m {
            let w = inputs.idle_count_weight(k) * miss;
            if w > 0.0 {
                total += w * idle.interference(|s| p.model.law_at_log(s).max_of(k))?;
            }
        }
    }
    Ok(total)
}

/// Finds `λ` meeting the interference limit with equality, or `λ = 0` when
/// even unconstrained transmission stays within the limit.
pub fn solve_lambda(p: &SystemParams) -> Result<PowerPolicy> {
    let base = policy_constants(p)?;
    let target = p.interference_cap;
    let at = |ln_lambda: f64| average_interference(&base.with_ln_lambda(ln_lambda), p);

    let slack = at(f64::NEG_INFINITY)?;
    if slack <= target {
        return Ok(base.with_ln_lambda(f64::NEG_INFINITY));
    }

    // Grow the bracket in ln λ with doubling steps.
    let start = at(0.0)?;
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut step = 1.0;
    let mut found = false;
    for _ in 0..MAX_BRACKET_STEPS {
        if start > target {
            lo = hi;
            hi += step;
            if at(hi)? <= target {
                found = true;
                break;
            }
        } else {
            hi = lo;
            lo -= step;
            if at(lo)? > target {
                found = true;
                break;
            }
        }
        step *= 2.0;
    }
    if !found {
        return Err(Error::NoBracket(format!(
            "no multiplier meets interference limit {target:e} W after \
             {MAX_BRACKET_STEPS} doublings"
        )));
    }
    let mut best = (f64::INFINITY, hi);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let value = at(mid)?;
        let resid = (value - target).abs() / target;
        if resid < best.0 {
            best = (resid, mid);
        }
        if resid <= LAMBDA_TARGET_TOL {
            return Ok(base.with_ln_lambda(mid));
        }
        if value > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    if best.0 <= LAMBDA_REL_TOL {
        return Ok(base.with_ln_lambda(best.1));
    }
    Err(Error::Numerical(format!(
        "multiplier search stalled at ln λ = {} with relative residual {:e}",
        best.1, best.0
    )))
}

/// Contribution of one transmitting state to the log-moment argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTerm {
    /// State probability.
    pub weight: f64,
    /// Probability that the selected ratio falls below the cutoff.
    pub below_cutoff: f64,
    /// `E[e^{-θS}; x >= cutoff]` given the state.
    pub transmit: f64,
}

impl StateTerm {
    pub fn moment(&self) -> f64 {
        self.weight * (self.below_cutoff + self.transmit)
    }
}

/// Per-state breakdown of `E[e^{-θS}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityTerms {
    pub busy: StateTerm,
    /// Idle-detected states, `k = 1..M`.
    pub idle: Vec<StateTerm>,
    /// Probability of the OFF state.
    pub off: f64,
}

impl CapacityTerms {
    /// `E[e^{-θS}]`.
    pub fn moment(&self) -> f64 {
        self.busy.moment() + self.idle.iter().map(StateTerm::moment).sum::<f64>() + self.off
    }

    /// The same sum with the below-cutoff masses dropped.
    pub fn moment_without_cutoff_mass(&self) -> f64 {
        let t = |s: &StateTerm| s.weight * s.transmit;
        t(&self.busy) + self.idle.iter().map(t).sum::<f64>() + self.off
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffCapResult {
    /// Effective capacity (bits/s/Hz).
    pub re: f64,
    /// Effective capacity if zero-power frames are left out of the moment.
    pub re_without_cutoff_mass: f64,
    pub lambda: f64,
    pub ln_lambda: f64,
    /// Average interference delivered by the policy (W).
    pub achieved_interference: f64,
    /// `E[e^{-θS}]` from the per-state sum.
    pub moment: f64,
    /// `E[e^{-θS}]` with the idle states merged into one integral.
    pub moment_collapsed: f64,
    pub terms: CapacityTerms,
}

/// Converts a per-frame moment `E[e^{-θS}]` into bits/s/Hz.
pub fn capacity_from_moment(p: &SystemParams, moment: f64) -> Result<f64> {
    if !(moment > 0.0) {
        return Err(Error::Numerical(format!(
            "moment E[exp(-θS)] = {moment:e} underflowed"
        )));
    }
    Ok((-moment.ln() / p.normalizer()).max(0.0))
}

/// Effective capacity of a solved policy.
pub fn effective_capacity(pol: &PowerPolicy, p: &SystemParams) -> Result<EffCapResult> {
    p.validate()?;
    let ln_lambda = pol.solved_ln_lambda()?;
    let inputs = p.inputs();
    let m = p.channels;
    let tm = transition_probabilities(&inputs)?;
    let model = &p.model;

    let busy = Branch::new(pol, Mode::Busy, model)?;
    let busy_term = if tm.p[0] > 0.0 {
        StateTerm {
            weight: tm.p[0],
            below_cutoff: model.law_at_log(busy.ln_t).max_of(m).cdf,
            transmit: busy.mgf(|s| model.law_at_log(s).max_of(m))?,
        }
    } else {
        StateTerm {
            weight: 0.0,
            below_cutoff: 1.0,
            transmit: 0.0,
        }
    };

    let idle = Branch::new(pol, Mode::Idle, model)?;
    let active = inputs.idle_mass() > 0.0;
    let mut idle_terms = Vec::with_capacity(m as usize);
    for k in 1..=m {
        let weight = tm.p[k as usize];
        idle_terms.push(if active && weight > 0.0 {
            StateTerm {
                weight,
                below_cutoff: model.law_at_log(idle.ln_t).max_of(k).cdf,
                transmit: idle.mgf(|s| model.law_at_log(s).max_of(k))?,
            }
        } else {
            StateTerm {
                weight,
                below_cutoff: 1.0,
                transmit: 0.0,
            }
        });
    }

    let terms = CapacityTerms {
        busy: busy_term,
        idle: idle_terms,
        off: tm.off(),
    };
    let moment = terms.moment();

    let idle_per_k: f64 = terms.idle.iter().map(StateTerm::moment).sum();
    let idle_collapsed = if active {
        inputs.idle_mass()
            * (collapsed_mass_below(&inputs, model, idle.ln_t)
                + idle.mgf(|s| collapsed_law(&inputs, model, s))?)
    } else {
        idle_per_k
    };
    let moment_collapsed = moment - idle_per_k + idle_collapsed;
    if (moment_collapsed - moment).abs() > COLLAPSE_REL_TOL * moment {
        return Err(Error::Numerical(format!(
            "per-state moment {moment:e} and collapsed moment {moment_collapsed:e} disagree"
        )));
    }

    Ok(EffCapResult {
        re: capacity_from_moment(p, moment)?,
        re_without_cutoff_mass: capacity_from_moment(p, terms.moment_without_cutoff_mass())?,
        lambda: ln_lambda.exp(),
        ln_lambda,
        achieved_interference: average_interference(pol, p)?,
        moment,
        moment_collapsed,
        terms,
    })
}

/// `α + (1-α)F`, the probability that a channel is detected busy or has a
/// ratio below `x`.
fn busy_or_below(alpha: f64, cdf: f64) -> f64 {
    alpha + (1.0 - alpha) * cdf
}

/// Collapsed idle-state ratio law with the `(1-ρ)(1-P_f)` factor removed:
/// density `M·f·(α + (1-α)F)^(M-1)`.
fn collapsed_law(inputs: &ModelInputs, model: &FadingModel, s: f64) -> RatioLaw {
    let law = model.law_at_log(s);
    let m = inputs.channels;
    let g = busy_or_below(inputs.alpha(), law.cdf).powi(m as i32 - 1) * f64::from(m);
    RatioLaw {
        pdf: law.pdf * g,
        log_pdf: law.log_pdf * g,
        cdf: f64::NAN,
    }
}

/// `Σ_k C(M,k)α^(M-k)(1-α)^(k-1)F(t)^k`, summed in closed form as
/// `F·Σ_j (α+(1-α)F)^j α^(M-1-j)`.
fn collapsed_mass_below(inputs: &ModelInputs, model: &FadingModel, ln_t: f64) -> f64 {
    let f = model.law_at_log(ln_t).cdf;
    let a = inputs.alpha();
    let b = busy_or_below(a, f);
    let m = inputs.channels;
    let sum: f64 = (0..m)
        .map(|j| b.powi(j as i32) * a.powi((m - 1 - j) as i32))
        .sum();
    f * sum
}

/// Density of the selected ratio over the idle-detected ON states, summed
/// state by state: `Σ_k p_{k+1}·k·f·F^(k-1)`.
pub fn idle_density_per_k(inputs: &ModelInputs, model: &FadingModel, x: f64) -> Result<f64> {
    let tm = transition_probabilities(inputs)?;
    let law = model.law_at(x);
    Ok((1..=inputs.channels)
        .map(|k| tm.p[k as usize] * law.max_of(k).pdf)
        .sum())
}

/// The same density from the binomial identity:
/// `(1-ρ)(1-P_f)·M·f·(α + (1-α)F)^(M-1)`.
pub fn idle_density_collapsed(inputs: &ModelInputs, model: &FadingModel, x: f64) -> Result<f64> {
    inputs.validate()?;
    let law = model.law_at(x);
    let m = inputs.channels;
    Ok(inputs.idle_mass()
        * f64::from(m)
        * law.pdf
        * busy_or_below(inputs.alpha(), law.cdf).powi(m as i32 - 1))
}

/// Effective capacity of a Markov service process whose transition matrix
/// has identical rows `p`, given each state's per-frame moment
/// `E[e^{-θS} | state]`. The spectral radius of `diag(moment)·P` is then
/// `Σ p_i·moment_i`.
pub fn rank_one_effective_capacity(
    p: &[f64],
    state_moment: &[f64],
    params: &SystemParams,
) -> Result<f64> {
    if p.len() != state_moment.len() || p.is_empty() {
        return Err(Error::Domain(
            "state probabilities and moments must have equal, nonzero length".into(),
        ));
    }
    let radius: f64 = p.iter().zip(state_moment).map(|(a, b)| a * b).sum();
    capacity_from_moment(params, radius)
}

/// Average-interference limit implied by an outage requirement on the
/// primary link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceCap {
    /// `Φ` (W); negative when the outage target is unreachable.
    pub phi: f64,
    pub feasible: bool,
}

/// Smallest primary rate target accepted, in bits/s/Hz.
pub const MIN_PRIMARY_RATE: f64 = 1e-9;

/// `Φ = -ln(1-P_out)·P_pri/(2^R - 1) - σ_np² B_c`.
pub fn outage_to_interference_cap(
    r_min: f64,
    p_out: f64,
    p_pri: f64,
    sigma_np2: f64,
    bandwidth: f64,
) -> Result<InterferenceCap> {
    if !(r_min >= MIN_PRIMARY_RATE) || r_min.is_infinite() {
        return Err(Error::Range(format!(
            "primary rate target must be finite and at least {MIN_PRIMARY_RATE:e}, got {r_min}"
        )));
    }
    if !(p_out > 0.0 && p_out < 1.0) {
        return Err(Error::Range(format!(
            "outage probability must lie in (0, 1), got {p_out}"
        )));
    }
    for (name, v) in [("primary power", p_pri), ("bandwidth", bandwidth)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Range(format!("{name} must be positive, got {v}")));
        }
    }
    if !(sigma_np2 >= 0.0 && sigma_np2.is_finite()) {
        return Err(Error::Range(format!(
            "primary noise variance must be nonnegative, got {sigma_np2}"
        )));
    }
    // 2^R - 1 without cancellation for small R.
    let snr_min = (r_min * std::f64::consts::LN_2).exp_m1();
    let phi = -(-p_out).ln_1p() * p_pri / snr_min - sigma_np2 * bandwidth;
    Ok(InterferenceCap {
        phi,
        feasible: phi > 0.0,
    })
}

/// Delay-violation bound `c·e^{-θ a d_max / 2}`, clamped to 1.
pub fn delay_bound(theta: f64, arrival_rate: f64, d_max: f64, c_const: f64) -> Result<f64> {
    for (name, v) in [
        ("theta", theta),
        ("arrival rate", arrival_rate),
        ("constant", c_const),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Range(format!("{name} must be positive, got {v}")));
        }
    }
    if !(d_max >= 0.0 && d_max.is_finite()) {
        return Err(Error::Range(format!(
            "delay bound must be nonnegative, got {d_max}"
        )));
    }
    Ok((c_const * (-theta * arrival_rate * d_max / 2.0).exp()).min(1.0))
}

/// Converts a level in dB relative to `reference` watts into watts.
pub fn db_to_watts(db: f64, reference: f64) -> f64 {
    reference * 10f64.powf(db / 10.0)
}
