//! Energy-detector false-alarm and detection probabilities.
//!
//! The detector averages `N·B` complex samples, `Y = (1/NB) Σ |y_i|²`, and
//! declares the channel busy when `Y > γ`. Under either hypothesis `NB·Y/σ²`
//! is a unit-scale gamma variate with shape `NB`, so both tail probabilities
//! are regularized upper incomplete gamma values.

use crate::error::{ensure_finite, ensure_probability, Error, Result};
use crate::specfun::{gaussian_q, reg_upper_gamma};

/// How the tail of the energy statistic is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectorMethod {
    /// Exact chi-square (gamma) tail.
    #[default]
    ExactChiSquare,
    /// Normal approximation with matched mean and variance.
    GaussianApprox,
}

/// Configuration of the per-channel hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingParams {
    /// Sensing duration `N` in seconds.
    pub duration: f64,
    /// Channel bandwidth `B` in hertz.
    pub bandwidth: f64,
    /// Noise variance per complex sample (W).
    pub noise_var: f64,
    /// Primary-signal variance per complex sample at the secondary receiver (W).
    pub signal_var: f64,
    /// Detection threshold `γ` (W).
    pub threshold: f64,
    pub method: DetectorMethod,
}

/// Number of complex samples `N·B`, rounded to the nearest integer `>= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleCount {
    pub count: u64,
    /// The unrounded product `N·B`.
    pub requested: f64,
}

impl SampleCount {
    pub fn was_rounded(&self) -> bool {
        self.count as f64 != self.requested
    }
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("duration", self.duration),
            ("bandwidth", self.bandwidth),
            ("noise_var", self.noise_var),
            ("signal_var", self.signal_var),
            ("threshold", self.threshold),
        ] {
            ensure_finite(name, v)?;
        }
        if self.duration <= 0.0 || self.bandwidth <= 0.0 || self.noise_var <= 0.0 {
            return Err(Error::Domain(
                "sensing duration, bandwidth and noise variance must be positive".into(),
            ));
        }
        if self.signal_var < 0.0 || self.threshold < 0.0 {
            return Err(Error::Domain(
                "signal variance and threshold must be nonnegative".into(),
            ));
        }
        if self.duration * self.bandwidth < 0.5 {
            return Err(Error::Domain(format!(
                "N·B = {} gives no complex sensing sample",
                self.duration * self.bandwidth
            )));
        }
        Ok(())
    }

    pub fn samples(&self) -> SampleCount {
        let requested = self.duration * self.bandwidth;
        SampleCount {
            count: (requested.round() as u64).max(1),
            requested,
        }
    }

    pub fn with_threshold(self, threshold: f64) -> Self {
        Self { threshold, ..self }
    }

    /// Probability that the statistic exceeds the threshold when the
    /// per-sample power is `variance`.
    fn exceedance(&self, variance: f64) -> Result<f64> {
        let n = self.samples().count as f64;
        match self.method {
            DetectorMethod::ExactChiSquare => {
                // Upper tail Γ(NB, NBγ/σ²)/Γ(NB): shape first, limit second.
                reg_upper_gamma(n, n * self.threshold / variance)
            }
            DetectorMethod::GaussianApprox => {
                // Y ~ N(σ², σ⁴/NB).
                gaussian_q((self.threshold / variance - 1.0) * n.sqrt())
            }
        }
    }
}

/// False-alarm and detection probabilities of one detector configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorProbabilities {
    pub pf: f64,
    pub pd: f64,
}

/// Sensing reliability seen by the state model: `P_f` and `P_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingPerformance {
    pub pf: f64,
    pub pd: f64,
}

impl SensingPerformance {
    pub fn new(pf: f64, pd: f64) -> Result<Self> {
        ensure_probability("pf", pf)?;
        ensure_probability("pd", pd)?;
        Ok(Self { pf, pd })
    }

    /// Probability that one channel is detected busy.
    pub fn alpha(&self, rho: f64) -> f64 {
        rho * self.pd + (1.0 - rho) * self.pf
    }
}

impl From<DetectorProbabilities> for SensingPerformance {
    fn from(p: DetectorProbabilities) -> Self {
        Self { pf: p.pf, pd: p.pd }
    }
}

pub fn detector_performance(p: &SensingParams) -> Result<DetectorProbabilities> {
    p.validate()?;
    let pf = p.exceedance(p.noise_var)?;
    let pd = p.exceedance(p.noise_var + p.signal_var)?;
    Ok(DetectorProbabilities { pf, pd })
}

/// `α = ρ·P_d + (1-ρ)·P_f`, the probability a channel is detected busy.
pub fn busy_detection_alpha(rho: f64, pf: f64, pd: f64) -> Result<f64> {
    ensure_probability("rho", rho)?;
    ensure_probability("pf", pf)?;
    ensure_probability("pd", pd)?;
    Ok(rho * pd + (1.0 - rho) * pf)
}

/// Which operating point to hit when inverting the detector curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    FalseAlarm(f64),
    Detection(f64),
}

/// Finds the threshold at which the chosen detector probability equals the
/// target, by bisection. `params.threshold` is ignored.
pub fn threshold_for_target(params: &SensingParams, target: Target) -> Result<f64> {
    let (value, variance) = match target {
        Target::FalseAlarm(v) => (v, params.noise_var),
        Target::Detection(v) => (v, params.noise_var + params.signal_var),
    };
    ensure_finite("target", value)?;
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::NoBracket(format!(
            "target probability {value} is only reached at γ = 0 or γ → ∞"
        )));
    }
    let base = params.with_threshold(variance);
    base.validate()?;
    let curve = |g: f64| base.with_threshold(g).exceedance(variance);

    let mut lo = 0.0;
    let mut hi = variance;
    let mut grow = 0;
    while curve(hi)? >= value {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 1100 {
            return Err(Error::NoBracket(format!(
                "no threshold reaches probability {value}"
            )));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = curve(mid)?;
        if (p - value).abs() <= 1e-13 {
            return Ok(mid);
        }
        if p > value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(n: f64, b: f64, sn: f64, ssp: f64, g: f64) -> SensingParams {
        SensingParams {
            duration: n,
            bandwidth: b,
            noise_var: sn,
            signal_var: ssp,
            threshold: g,
            method: DetectorMethod::ExactChiSquare,
        }
    }

    #[test]
    fn zero_threshold_declares_busy() {
        for method in [
            DetectorMethod::ExactChiSquare,
            DetectorMethod::GaussianApprox,
        ] {
            let mut p = params(0.01, 1e4, 1.0, 0.5, 1e-9);
            p.method = method;
            let r = detector_performance(&p).unwrap();
            assert!(r.pf > 0.999_999 && r.pd > 0.999_999, "{method:?}: {r:?}");
        }
        let r = detector_performance(&params(0.01, 1e4, 1.0, 0.5, 0.0)).unwrap();
        assert_eq!((r.pf, r.pd), (1.0, 1.0));
    }

    #[test]
    fn no_primary_signal_means_equal_probabilities() {
        for &g in &[0.1, 0.8, 1.0, 1.3, 4.0] {
            let r = detector_performance(&params(0.1, 1e3, 2.0, 0.0, g)).unwrap();
            assert_eq!(r.pf, r.pd);
        }
    }

    #[test]
    fn single_sample_is_exponential_tail() {
        for &g in &[0.05, 0.5, 1.0, 2.0, 7.0] {
            let r = detector_performance(&params(1e-4, 1e4, 1.5, 0.0, g)).unwrap();
            let exact = (-g / 1.5f64).exp();
            assert!((r.pf - exact).abs() < 1e-12 * exact.max(1e-300) + 1e-16);
        }
    }

    #[test]
    fn single_sample_monte_carlo() {
        // |CN(0, σ²)|² drawn from two real normals of variance σ²/2.
        let sigma2 = 1.0;
        let gamma = 0.7;
        let n = 10_000_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr::StandardNormal;
        let scale = (sigma2 / 2.0f64).sqrt();
        let mut hits = 0u64;
        for _ in 0..n {
            let re: f64 = rng.sample::<f64, _>(normal) * scale;
            let im: f64 = rng.sample::<f64, _>(normal) * scale;
            if re * re + im * im > gamma {
                hits += 1;
            }
        }
        let p = (-gamma / sigma2).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let est = hits as f64 / n as f64;
        assert!((est - p).abs() < 3.0 * se, "{est} vs {p} (se {se})");
        let r = detector_performance(&params(1e-4, 1e4, sigma2, 0.0, gamma)).unwrap();
        assert!((r.pf - p).abs() < 1e-15);
    }

    #[test]
    fn sample_count_rounding() {
        let p = params(0.00123, 1e4, 1.0, 1.0, 1.0);
        let s = p.samples();
        assert_eq!(s.count, 12);
        assert!(s.was_rounded());
        assert!(!params(0.1, 1e4, 1.0, 1.0, 1.0).samples().was_rounded());
        assert!(params(1e-5, 1e4, 1.0, 1.0, 1.0).validate().is_err());
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(detector_performance(&params(0.0, 1e4, 1.0, 1.0, 1.0)).is_err());
        assert!(detector_performance(&params(0.1, 1e4, 0.0, 1.0, 1.0)).is_err());
        assert!(detector_performance(&params(0.1, 1e4, 1.0, -1.0, 1.0)).is_err());
        assert!(detector_performance(&params(0.1, 1e4, 1.0, 1.0, -1.0)).is_err());
        assert!(detector_performance(&params(0.1, f64::NAN, 1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn alpha_values() {
        assert!((busy_detection_alpha(0.1, 0.2, 0.9).unwrap() - 0.27).abs() < 1e-15);
        assert_eq!(busy_detection_alpha(0.0, 0.3, 0.8).unwrap(), 0.3);
        assert_eq!(busy_detection_alpha(0.4, 0.55, 0.55).unwrap(), 0.55);
        assert!(matches!(
            busy_detection_alpha(1.2, 0.1, 0.1),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            busy_detection_alpha(0.5, -0.1, 0.1),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn threshold_round_trip() {
        let base = params(0.01, 1e4, 1.0, 0.3, 0.0);
        let g = threshold_for_target(&base, Target::FalseAlarm(0.2)).unwrap();
        let r = detector_performance(&base.with_threshold(g)).unwrap();
        assert!((r.pf - 0.2).abs() < 1e-9);
        let g = threshold_for_target(&base, Target::Detection(0.95)).unwrap();
        let r = detector_performance(&base.with_threshold(g)).unwrap();
        assert!((r.pd - 0.95).abs() < 1e-9);
    }

    #[test]
    fn threshold_limits() {
        let base = params(0.01, 1e4, 1.0, 0.3, 0.0);
        assert!(matches!(
            threshold_for_target(&base, Target::FalseAlarm(1.0)),
            Err(Error::NoBracket(_))
        ));
        assert!(matches!(
            threshold_for_target(&base, Target::Detection(0.0)),
            Err(Error::NoBracket(_))
        ));
        let g = threshold_for_target(&base, Target::FalseAlarm(1.0 - 1e-9)).unwrap();
        assert!(g < 0.8);
    }

    #[test]
    fn threshold_golden_value() {
        // N = 0.1 s, B = 10 kHz, σ_n² = σ_sp² = 1, P_d = 0.9. Reference from a
        // 200-step bisection on the 40-digit incomplete gamma tail.
        let base = params(0.1, 1e4, 1.0, 1.0, 0.0);
        let g = threshold_for_target(&base, Target::Detection(0.9)).unwrap();
        assert!((g - 1.919_387_865_457_666_6).abs() < 1e-9, "{g}");
    }

    #[test]
    fn gaussian_approximation_close_for_many_samples() {
        for &nb in &[1000.0, 5000.0] {
            for i in 0..=40 {
                let g = 0.8 + 0.6 * f64::from(i) / 40.0;
                let mut p = params(nb / 1e4, 1e4, 1.0, 0.25, g);
                let exact = detector_performance(&p).unwrap();
                p.method = DetectorMethod::GaussianApprox;
                let approx = detector_performance(&p).unwrap();
                assert!((exact.pf - approx.pf).abs() < 0.01, "nb={nb} g={g}");
                assert!((exact.pd - approx.pd).abs() < 0.01, "nb={nb} g={g}");
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn curves_nonincreasing_and_ordered(
                nb in 1u32..3000,
                sn in 0.1f64..10.0,
                ssp in 0.0f64..10.0,
                g in 0.0f64..20.0,
                dg in 0.0f64..2.0,
                gaussian in any::<bool>(),
            ) {
                let method = if gaussian { DetectorMethod::GaussianApprox } else { DetectorMethod::ExactChiSquare };
                let mut p = params(f64::from(nb) / 1e4, 1e4, sn, ssp, g);
                p.method = method;
                let a = detector_performance(&p).unwrap();
                let b = detector_performance(&p.with_threshold(g + dg)).unwrap();
                prop_assert!(b.pf <= a.pf + 1e-15);
                prop_assert!(b.pd <= a.pd + 1e-15);
                prop_assert!(a.pd >= a.pf - 1e-15);
            }
        }
    }
}
