//! Unit-mean fading laws and the gain ratio `x = z / z_sp`.
//!
//! For Nakagami-m power gains (Rayleigh is `m = 1`) the ratio of two
//! independent unit-mean gains has a beta-prime law. Writing
//! `u = x/(1+x)` and `v = 1/(1+x)`, the density is
//! `m·C(2m-1, m)·u^(m-1)·v^(m+1)` and `F(x) = P(Binomial(2m-1, u) >= m)`.
//! Everything is evaluated through `(u, v)`, which stays well conditioned
//! when `x` is given by its logarithm and lies far outside double range.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use crate::error::{Error, Result};
use crate::specfun::ln_binomial;

/// Largest supported Nakagami shape parameter.
pub const MAX_NAKAGAMI_M: u32 = 150;

/// Unit-mean fading law shared by the secondary link and the
/// secondary-to-primary link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FadingModel {
    #[default]
    Rayleigh,
    Nakagami {
        m: u32,
    },
}

impl FadingModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Rayleigh => Ok(()),
            Self::Nakagami { m } if (1..=MAX_NAKAGAMI_M).contains(&m) => Ok(()),
            Self::Nakagami { m } => Err(Error::Domain(format!(
                "Nakagami m must be an integer in 1..={MAX_NAKAGAMI_M}, got {m}"
            ))),
        }
    }

    /// Gamma shape of each power gain.
    pub fn shape(&self) -> u32 {
        match *self {
            Self::Rayleigh => 1,
            Self::Nakagami { m } => m,
        }
    }

    /// Density and cdf of `x` from the pair `u = x/(1+x)`, `v = 1/(1+x)`.
    fn law(&self, u: f64, v: f64) -> RatioLaw {
        let m = self.shape();
        let norm = f64::from(m) * ln_binomial(2 * m - 1, m).exp();
        let pdf = norm * u.powi(m as i32 - 1) * v.powi(m as i32 + 1);
        let log_pdf = norm * (u * v).powi(m as i32);
        let n = 2 * m - 1;
        let cdf = if u <= 0.5 {
            (m..=n).map(|j| bernstein(n, j, u, v)).sum::<f64>()
        } else {
            1.0 - (0..m).map(|j| bernstein(n, j, u, v)).sum::<f64>()
        };
        RatioLaw {
            pdf,
            log_pdf,
            cdf: cdf.clamp(0.0, 1.0),
        }
    }

    /// Ratio law at `x = e^s`; `s` may be any extended real.
    pub fn law_at_log(&self, s: f64) -> RatioLaw {
        // Logistic split: u = 1/(1+e^-s), v = 1/(1+e^s).
        let u = 1.0 / (1.0 + (-s).exp());
        let v = 1.0 / (1.0 + s.exp());
        self.law(u, v)
    }

    /// Ratio law at `x >= 0`, including `x = ∞`.
    pub fn law_at(&self, x: f64) -> RatioLaw {
        if x.is_infinite() {
            return self.law(1.0, 0.0);
        }
        let v = 1.0 / (1.0 + x);
        self.law(x * v, v)
    }
}

fn bernstein(n: u32, j: u32, u: f64, v: f64) -> f64 {
    ln_binomial(n, j).exp() * u.powi(j as i32) * v.powi((n - j) as i32)
}

/// Density and cdf of the ratio at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioLaw {
    /// Density of `x`.
    pub pdf: f64,
    /// Density of `ln x`, equal to `x·pdf` but finite for every `x`.
    pub log_pdf: f64,
    pub cdf: f64,
}

impl RatioLaw {
    /// Law of the largest of `n` independent ratios.
    pub fn max_of(self, n: u32) -> RatioLaw {
        let rest = self.cdf.powi(n as i32 - 1);
        RatioLaw {
            pdf: f64::from(n) * self.pdf * rest,
            log_pdf: f64::from(n) * self.log_pdf * rest,
            cdf: rest * self.cdf,
        }
    }
}

fn check_point(model: &FadingModel, x: f64) -> Result<()> {
    model.validate()?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("ratio must be nonnegative, got {x}")));
    }
    Ok(())
}

fn check_count(n: u32) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("order statistic needs n >= 1".into()));
    }
    Ok(())
}

/// Density of `z / z_sp`.
pub fn ratio_pdf(model: &FadingModel, x: f64) -> Result<f64> {
    check_point(model, x)?;
    Ok(model.law_at(x).pdf)
}

/// Distribution function of `z / z_sp`.
pub fn ratio_cdf(model: &FadingModel, x: f64) -> Result<f64> {
    check_point(model, x)?;
    Ok(model.law_at(x).cdf)
}

/// Density of the largest of `n` independent ratios, `n·f·F^(n-1)`.
pub fn max_ratio_pdf(model: &FadingModel, n: u32, x: f64) -> Result<f64> {
    check_point(model, x)?;
    check_count(n)?;
    Ok(model.law_at(x).max_of(n).pdf)
}

/// Distribution function of the largest of `n` ratios, `F^n`.
pub fn max_ratio_cdf(model: &FadingModel, n: u32, x: f64) -> Result<f64> {
    check_point(model, x)?;
    check_count(n)?;
    Ok(model.law_at(x).max_of(n).cdf)
}

/// Given `z / z_sp = x`, `z_sp` is gamma distributed with shape `2m` and
/// rate `m(1+x)`. Returns `(shape, rate)`.
pub fn conditional_interference_gain(model: &FadingModel, x: f64) -> (f64, f64) {
    let m = f64::from(model.shape());
    (2.0 * m, m * (1.0 + x))
}

/// Power gains of the secondary link (`z`) and the secondary-to-primary
/// link (`z_sp`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPair {
    pub z: f64,
    pub z_sp: f64,
}

impl GainPair {
    /// `z / z_sp`, infinite when `z_sp = 0 < z`, zero when both vanish.
    pub fn ratio(&self) -> f64 {
        if self.z == 0.0 {
            0.0
        } else {
            self.z / self.z_sp
        }
    }
}

/// Unit-mean power-gain sampler.
#[derive(Debug, Clone, Copy)]
pub enum GainSampler {
    Exponential,
    Gamma(Gamma<f64>),
}

impl GainSampler {
    pub fn new(model: &FadingModel) -> Result<Self> {
        model.validate()?;
        Ok(match model.shape() {
            1 => Self::Exponential,
            m => {
                let m = f64::from(m);
                let g = Gamma::new(m, 1.0 / m)
                    .map_err(|e| Error::Domain(format!("gamma sampler: {e}")))?;
                Self::Gamma(g)
            }
        })
    }

    pub fn gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential => Exp1.sample(rng),
            Self::Gamma(g) => g.sample(rng),
        }
    }

    pub fn pair<R: Rng + ?Sized>(&self, rng: &mut R) -> GainPair {
        let z = self.gain(rng);
        let z_sp = self.gain(rng);
        GainPair { z, z_sp }
    }
}

/// Draws one independent pair of unit-mean gains.
pub fn sample_gain_pair<R: Rng + ?Sized>(model: &FadingModel, rng: &mut R) -> Result<GainPair> {
    Ok(GainSampler::new(model)?.pair(rng))
}
