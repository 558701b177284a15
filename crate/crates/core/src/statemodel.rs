//! The `(M+2)`-state frame model.
//!
//! State 1: every sensed channel is detected busy and the user transmits at
//! the busy-mode power. State `k+1` (`k = 1..M`): `k` channels are detected
//! idle and the chosen one really is idle. State `M+2`: the chosen
//! idle-detected channel is actually busy, the rate exceeds the channel
//! capacity and the frame carries nothing.
//!
//! Because occupancy, detection and fading are all independent across
//! frames, every row of the transition matrix is the same vector `p`.

use crate::error::{ensure_probability, Error, Result};
use crate::sensing::SensingPerformance;
use crate::specfun::ln_binomial;

/// Largest number of sensed channels accepted by the model.
pub const MAX_CHANNELS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInputs {
    /// Number of sensed channels `M`.
    pub channels: u32,
    /// Prior probability that a channel is busy.
    pub rho: f64,
    pub perf: SensingPerformance,
}

impl ModelInputs {
    pub fn new(channels: u32, rho: f64, perf: SensingPerformance) -> Result<Self> {
        let inputs = Self {
            channels,
            rho,
            perf,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_CHANNELS).contains(&self.channels) {
            return Err(Error::Domain(format!(
                "number of channels must lie in 1..={MAX_CHANNELS}, got {}",
                self.channels
            )));
        }
        ensure_probability("rho", self.rho)?;
        ensure_probability("pf", self.perf.pf)?;
        ensure_probability("pd", self.perf.pd)?;
        Ok(())
    }

    /// Probability that one channel is detected busy.
    pub fn alpha(&self) -> f64 {
        self.perf.alpha(self.rho)
    }

    /// `(1 - α^M)/(1 - α)`, the expected-count factor shared by the
    /// idle-detected states, with the value `M` at `α = 1`.
    pub fn geometric_factor(&self) -> f64 {
        let a = self.alpha();
        // Horner sum avoids the cancellation of the closed form near α = 1.
        (0..self.channels).fold(0.0, |acc, _| acc * a + 1.0)
    }

    /// `ρ(1-P_d)`: probability a channel is busy yet detected idle.
    pub fn miss_mass(&self) -> f64 {
        self.rho * (1.0 - self.perf.pd)
    }

    /// `(1-ρ)(1-P_f)`: probability a channel is idle and detected idle.
    pub fn idle_mass(&self) -> f64 {
        (1.0 - self.rho) * (1.0 - self.perf.pf)
    }

    /// `C(M,k)·α^(M-k)·(1-α)^(k-1)`, the weight of `k` idle-detected
    /// channels with one factor `(1-α)` removed.
    pub fn idle_count_weight(&self, k: u32) -> f64 {
        let m = self.channels;
        let a = self.alpha();
        ln_binomial(m, k).exp() * a.powi((m - k) as i32) * (1.0 - a).powi(k as i32 - 1)
    }
}

/// State probabilities `p[0..M+2]`: index 0 is the all-busy state, index
/// `k` the state with `k` idle-detected channels, index `M+1` the OFF state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    pub p: Vec<f64>,
}

impl TransitionModel {
    pub fn channels(&self) -> u32 {
        (self.p.len() - 2) as u32
    }

    pub fn off(&self) -> f64 {
        self.p[self.p.len() - 1]
    }

    /// The full transition matrix; every row equals `p`.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        vec![self.p.clone(); self.p.len()]
    }
}

pub fn transition_probabilities(inputs: &ModelInputs) -> Result<TransitionModel> {
    inputs.validate()?;
    let m = inputs.channels;
    let mut p = Vec::with_capacity(m as usize + 2);
    p.push(inputs.alpha().powi(m as i32));
    let idle = inputs.idle_mass();
    p.extend((1..=m).map(|k| inputs.idle_count_weight(k) * idle));
    p.push(inputs.miss_mass() * inputs.geometric_factor());
    Ok(TransitionModel { p })
}

/// Probabilities of the four sensing/occupancy scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioProbs {
    /// All detected busy, chosen channel busy.
    pub ps1: f64,
    /// All detected busy, chosen channel idle.
    pub ps2: f64,
    /// Chosen idle-detected channel is busy.
    pub ps3: f64,
    /// Chosen idle-detected channel is idle.
    pub ps4: f64,
}

impl ScenarioProbs {
    pub fn as_array(&self) -> [f64; 4] {
        [self.ps1, self.ps2, self.ps3, self.ps4]
    }
}

pub fn scenario_probabilities(inputs: &ModelInputs) -> Result<ScenarioProbs> {
    inputs.validate()?;
    let lead = inputs.alpha().powi(inputs.channels as i32 - 1);
    let g = inputs.geometric_factor();
    Ok(ScenarioProbs {
        ps1: lead * inputs.rho * inputs.perf.pd,
        ps2: lead * (1.0 - inputs.rho) * inputs.perf.pf,
        ps3: g * inputs.miss_mass(),
        ps4: g * inputs.idle_mass(),
    })
}

/// Probability that the chosen channel is busy, and its value as the
/// number of channels grows without bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceProbability {
    pub p_int: f64,
    pub limit: f64,
}

pub fn interference_probability(inputs: &ModelInputs) -> Result<InterferenceProbability> {
    let s = scenario_probabilities(inputs)?;
    let a = inputs.alpha();
    // At α = 1 both miss and idle masses vanish and only scenario 1 remains.
    let limit = if a < 1.0 {
        inputs.miss_mass() / (1.0 - a)
    } else {
        inputs.rho * inputs.perf.pd
    };
    Ok(InterferenceProbability {
        p_int: s.ps1 + s.ps3,
        limit,
    })
}

/// Bandwidth and noise levels entering the instantaneous SNRs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateContext {
    /// Coherence bandwidth `B_c` (Hz).
    pub bandwidth: f64,
    pub noise_var: f64,
    pub signal_var: f64,
}

/// Transmission rates and scenario capacities of one frame, in bits/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRates {
    /// Rate in busy-detected mode.
    pub r1: f64,
    /// Rate in idle-detected mode.
    pub r2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl LinkRates {
    /// True when the idle-mode rate exceeds the capacity of a busy channel.
    pub fn miss_is_off(&self) -> bool {
        self.r2 > self.c3
    }
}

pub fn link_rates(ctx: &RateContext, p1: f64, p2: f64, z: f64) -> Result<LinkRates> {
    if !(ctx.bandwidth > 0.0 && ctx.noise_var > 0.0 && ctx.signal_var >= 0.0) {
        return Err(Error::Domain(
            "bandwidth and noise variance must be positive, signal variance nonnegative".into(),
        ));
    }
    for (name, v) in [("P1", p1), ("P2", p2), ("z", z)] {
        if !(v >= 0.0) || v.is_infinite() {
            return Err(Error::Domain(format!(
                "{name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    let busy_noise = ctx.bandwidth * (ctx.noise_var + ctx.signal_var);
    let idle_noise = ctx.bandwidth * ctx.noise_var;
    let cap = |snr: f64| ctx.bandwidth * snr.ln_1p() / std::f64::consts::LN_2;
    let c1 = cap(p1 * z / busy_noise);
    let c2 = cap(p1 * z / idle_noise);
    let c3 = cap(p2 * z / busy_noise);
    let c4 = cap(p2 * z / idle_noise);
    Ok(LinkRates {
        r1: c1,
        r2: c4,
        c1,
        c2,
        c3,
        c4,
    })
}
