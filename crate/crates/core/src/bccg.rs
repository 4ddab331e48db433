//! The Box-Cox Cole-Green distribution.
//!
//! A positive response `y` with median `m`, coefficient of variation `s` and
//! Box-Cox power `l` is mapped to
//!
//! ```text
//! z = ((y/m)^l - 1) / (l s)      l != 0
//! z = ln(y/m) / s                l == 0
//! ```
//!
//! and `z` is standard normal truncated to the image of `(0, ∞)`. The
//! truncation mass is `Φ(1/(s|l|))`, taken as 1 in the lognormal limit.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Below this magnitude the power is treated as exactly zero.
pub const L_BRANCH_TOL: f64 = 1e-8;

/// One (L, M, S) triple: the distribution at a fixed covariate value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BccgParams {
    /// Median, in response units.
    pub m: f64,
    /// Scale (approximate coefficient of variation).
    pub s: f64,
    /// Box-Cox power (skewness).
    pub l: f64,
}

/// How the truncated tail is treated by [`cdf`] and [`quantile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TailMode {
    /// Honor the truncation constant of the density.
    #[default]
    Exact,
    /// Cole's chart convention: `Φ(z)` with no truncation.
    ColeApprox,
}

impl BccgParams {
    pub fn new(m: f64, s: f64, l: f64) -> Result<Self> {
        let p = BccgParams { m, s, l };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::Parameter(format!("m must be finite and > 0, got {}", self.m)));
        }
        if !(self.s.is_finite() && self.s > 0.0) {
            return Err(Error::Parameter(format!("s must be finite and > 0, got {}", self.s)));
        }
        if !self.l.is_finite() {
            return Err(Error::Parameter(format!("l must be finite, got {}", self.l)));
        }
        Ok(())
    }

    #[inline]
    pub fn is_lognormal(&self) -> bool {
        self.l.abs() < L_BRANCH_TOL
    }

    /// `1/(s|l|)`: the distance from zero to the truncation point on the z scale.
    #[inline]
    fn truncation_point(&self) -> f64 {
        1.0 / (self.s * self.l.abs())
    }

    /// `Φ(1/(s|l|))`, or 1 when `l` is zero.
    pub fn truncation_mass(&self) -> f64 {
        if self.is_lognormal() {
            1.0
        } else {
            normal::cdf(self.truncation_point())
        }
    }

    #[inline]
    pub(crate) fn z_unchecked(&self, y: f64) -> f64 {
        let r = (y / self.m).ln();
        if self.is_lognormal() {
            r / self.s
        } else {
            (self.l * r).exp_m1() / (self.l * self.s)
        }
    }

    #[inline]
    pub(crate) fn log_density_unchecked(&self, y: f64) -> f64 {
        let r = (y / self.m).ln();
        let z = self.z_unchecked(y);
        let ln_norm = if self.is_lognormal() {
            0.0
        } else {
            normal::ln_cdf(self.truncation_point())
        };
        (self.l - 1.0) * r - self.m.ln() - self.s.ln() - normal::LN_SQRT_2PI - 0.5 * z * z - ln_norm
    }

    /// Response value whose z-transform is `z` (inverse of the Cole transform); `None`
    /// when `z` lies beyond the truncation point.
    #[inline]
    fn y_from_z(&self, z: f64) -> Option<f64> {
        if self.is_lognormal() {
            return Some(self.m * (self.s * z).exp());
        }
        let t = self.l * self.s * z;
        if t <= -1.0 {
            return None;
        }
        let y = self.m * (t.ln_1p() / self.l).exp();
        if y.is_finite() && y > 0.0 {
            Some(y)
        } else {
            None
        }
    }
}

fn check_response(y: f64) -> Result<()> {
    if y.is_finite() && y > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("response must be finite and > 0, got {y}")))
    }
}

/// Box-Cox z-transform of `y`.
pub fn z_transform(y: f64, p: &BccgParams) -> Result<f64> {
    check_response(y)?;
    p.validate()?;
    Ok(p.z_unchecked(y))
}

/// Log density, including the truncation normalizer.
pub fn log_density(y: f64, p: &BccgParams) -> Result<f64> {
    check_response(y)?;
    p.validate()?;
    Ok(p.log_density_unchecked(y))
}

pub fn cdf(y: f64, p: &BccgParams, mode: TailMode) -> Result<f64> {
    check_response(y)?;
    p.validate()?;
    let z = p.z_unchecked(y);
    if p.is_lognormal() || mode == TailMode::ColeApprox {
        return Ok(normal::cdf(z));
    }
    let c = p.truncation_mass();
    let value = if p.l > 0.0 {
        // z lives on (-a, ∞); subtract the lost lower tail Φ(-a).
        if z > 0.0 {
            1.0 - normal::cdf(-z) / c
        } else {
            (normal::cdf(z) - normal::cdf(-p.truncation_point())) / c
        }
    } else {
        normal::cdf(z) / c
    };
    Ok(value.clamp(0.0, 1.0))
}

pub fn quantile(alpha: f64, p: &BccgParams, mode: TailMode) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {alpha}")));
    }
    p.validate()?;
    if p.is_lognormal() || mode == TailMode::ColeApprox {
        let z = normal::quantile(alpha);
        return p.y_from_z(z).ok_or_else(|| {
            Error::TailDomain(format!(
                "1 + l*s*z = {} <= 0 at alpha = {alpha} (l = {}, s = {})",
                1.0 + p.l * p.s * z,
                p.l,
                p.s
            ))
        });
    }
    let c = p.truncation_mass();
    let z = if p.l > 0.0 {
        let lower = normal::cdf(-p.truncation_point()) + alpha * c;
        if lower > 0.5 {
            -normal::quantile((1.0 - alpha) * c)
        } else {
            normal::quantile(lower)
        }
    } else {
        normal::quantile(alpha * c)
    };
    match p.y_from_z(z) {
        Some(y) => Ok(y),
        // Only reachable when alpha sits within rounding of the truncation point.
        None => Ok(f64::MIN_POSITIVE),
    }
}

/// `n` draws by inverse-cdf (Exact mode) of uniform variates, deterministic per seed.
pub fn sample(p: &BccgParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    p.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(p, n, &mut rng)
}

pub(crate) fn sample_with<R: Rng>(p: &BccgParams, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            quantile(u, p, TailMode::Exact)
        })
        .collect()
}

pub fn percentile_to_z(pct: f64) -> Result<f64> {
    if !(pct > 0.0 && pct < 100.0) {
        return Err(Error::Domain(format!("percentile must lie in (0, 100), got {pct}")));
    }
    Ok(normal::quantile(pct / 100.0))
}

pub fn z_to_percentile(z: f64) -> f64 {
    100.0 * normal::cdf(z)
}

/// Derivatives of the log density with respect to the three linear
/// predictors: `M` (identity link), `ln S` (log link), `L` (identity link).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub m: f64,
    pub log_s: f64,
    pub l: f64,
}

pub fn scores(y: f64, p: &BccgParams) -> Scores {
    let BccgParams { m, s, l } = *p;
    let r = (y / m).ln();
    let lr = l * r;
    let lognormal = p.is_lognormal();
    let (z, e) = if lognormal {
        (r / s, 1.0)
    } else {
        (lr.exp_m1() / (l * s), lr.exp())
    };

    // a φ(a)/Φ(a) with a = 1/(s|l|): the truncation term's sensitivity.
    let tail = if lognormal {
        0.0
    } else {
        let a = p.truncation_point();
        a * normal::inverse_mills(a)
    };

    let dz_dl = if lr.abs() < 1e-3 {
        // Series of d/dl [(e^{lr} - 1)/(l s)]; also covers the l = 0 branch.
        (r * r / s) * (0.5 + lr / 3.0 + lr * lr / 8.0 + lr * lr * lr / 30.0)
    } else {
        (r * e / s - z) / l
    };

    Scores {
        m: (z * e / s - l) / m,
        log_s: z * z - 1.0 + tail,
        l: r - z * dz_dl + if lognormal { 0.0 } else { tail / l },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: f64, s: f64, l: f64) -> BccgParams {
        BccgParams::new(m, s, l).unwrap()
    }

    #[test]
    fn z_transform_examples() {
        let p = params(40.0, 0.1, 1.0);
        assert_eq!(z_transform(40.0, &p).unwrap(), 0.0);
        assert!((z_transform(44.0, &p).unwrap() - 1.0).abs() < 1e-12);

        let tiny = params(40.0, 0.1, 1e-12);
        let expected = (44.0f64 / 40.0).ln() / 0.1;
        assert!((z_transform(44.0, &tiny).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.953_10).abs() < 1e-5);

        // Branch continuity: both sides of zero agree with the log branch.
        let plus = z_transform(44.0, &params(40.0, 0.1, 1e-6)).unwrap();
        let minus = z_transform(44.0, &params(40.0, 0.1, -1e-6)).unwrap();
        assert!((plus - minus).abs() < 1e-5);
        assert!((plus - expected).abs() < 1e-5);
    }

    #[test]
    fn domain_and_parameter_errors() {
        let p = params(40.0, 0.1, 1.0);
        assert!(matches!(z_transform(0.0, &p), Err(Error::Domain(_))));
        assert!(matches!(z_transform(-3.0, &p), Err(Error::Domain(_))));
        assert!(matches!(BccgParams::new(0.0, 0.1, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(BccgParams::new(1.0, -0.1, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(BccgParams::new(1.0, 0.1, f64::NAN), Err(Error::Parameter(_))));
        assert!(matches!(quantile(1.0, &p, TailMode::Exact), Err(Error::Domain(_))));
        assert!(matches!(percentile_to_z(100.0), Err(Error::Domain(_))));
        assert!(matches!(percentile_to_z(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn lognormal_density_at_median() {
        let p = params(45.0, 0.1, 0.0);
        let expected = (1.0 / (45.0 * 0.1 * (2.0 * std::f64::consts::PI).sqrt())).ln();
        assert!((log_density(45.0, &p).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn cdf_median_and_tail_behaviour() {
        let p = params(45.0, 0.1, 0.0);
        assert_eq!(cdf(45.0, &p, TailMode::Exact).unwrap(), 0.5);
        assert_eq!(cdf(45.0, &p, TailMode::ColeApprox).unwrap(), 0.5);

        let skewed = params(1.0, 0.9, 2.0);
        let exact = cdf(1e-12, &skewed, TailMode::Exact).unwrap();
        let cole = cdf(1e-12, &skewed, TailMode::ColeApprox).unwrap();
        assert!(exact < 1e-9);
        let cole_limit = normal::cdf(-1.0 / 1.8);
        assert!((cole - cole_limit).abs() < 1e-9);
        assert!((cole_limit - 0.289).abs() < 1e-3);
    }

    #[test]
    fn cole_quantile_closed_form() {
        let p = params(45.0, 0.1, 1.0);
        let q = quantile(0.75, &p, TailMode::ColeApprox).unwrap();
        assert!((q - 45.0 * (1.0 + 0.1 * 0.674_489_750_196_081_7)).abs() < 1e-10);
        assert!((q - 48.035).abs() < 1e-3);
        assert_eq!(quantile(0.5, &params(45.0, 0.1, 0.0), TailMode::Exact).unwrap(), 45.0);

        // 1 + l s z <= 0 has no chart value.
        let wide = params(10.0, 0.5, 2.0);
        assert!(matches!(quantile(0.01, &wide, TailMode::ColeApprox), Err(Error::TailDomain(_))));
        assert!(quantile(0.01, &wide, TailMode::Exact).is_ok());
    }

    #[test]
    fn negative_power_exact_round_trip() {
        let p = params(20.0, 0.4, -1.5);
        for &a in &[1e-6, 0.01, 0.3, 0.5, 0.9, 0.999_999] {
            let y = quantile(a, &p, TailMode::Exact).unwrap();
            assert!((cdf(y, &p, TailMode::Exact).unwrap() - a).abs() < 1e-10);
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = params(45.0, 0.1, 1.0);
        assert_eq!(sample(&p, 50, 7).unwrap(), sample(&p, 50, 7).unwrap());
        assert_ne!(sample(&p, 50, 7).unwrap(), sample(&p, 50, 8).unwrap());
        assert!(sample(&p, 0, 1).is_err());
    }

    #[test]
    fn converter_values() {
        assert!((percentile_to_z(75.0).unwrap() - 0.674_49).abs() < 1e-4);
        assert_eq!(percentile_to_z(50.0).unwrap(), 0.0);
        assert!((percentile_to_z(3.0).unwrap() + 1.880_79).abs() < 1e-4);
        assert!((z_to_percentile(percentile_to_z(97.0).unwrap()) - 97.0).abs() < 1e-10);
    }
}
