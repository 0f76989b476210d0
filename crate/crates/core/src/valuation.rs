//! Prior over a device's private per-cycle valuation.
//!
//! A device's valuation is the time it saves per CPU cycle by offloading,
//! before congestion and payment: `(local time - upload time) / workload`, in
//! s/cycle. The base station and all devices share the prior over it. The
//! offloading margin `valuation - price` of a device drawn at random is a
//! popularity-weighted mixture of shifted copies of the prior.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::catalog::ProgramCatalog;
use crate::error::{Error, Result, Violation};

/// Half-width of the effective support of a normal prior, in standard deviations.
pub const NORMAL_SUPPORT_SIGMAS: f64 = 8.0;
/// Length of the effective support of an exponential prior, in means.
pub const EXPONENTIAL_SUPPORT_MEANS: f64 = 40.0;

/// Anything with a density, a distribution function and a bounded effective
/// support. Implemented by [`ValuationModel`]; tests plug in irregular
/// distributions to exercise [`check_regularity`].
pub trait ValuationPrior {
    fn pdf(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
    /// `1 - cdf(x)`, computed without cancellation where possible.
    fn survival(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }
    /// Interval outside of which `cdf` is clamped to 0 or 1.
    fn effective_support(&self) -> (f64, f64);
}

/// The built-in valuation families, all regular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValuationModel {
    Uniform {
        lower: f64,
        upper: f64,
    },
    Normal {
        mean: f64,
        std_dev: f64,
    },
    /// `shift + Exp(rate)`; the shift keeps negative valuations representable.
    Exponential {
        rate: f64,
        shift: f64,
    },
}

impl ValuationModel {
    pub fn violations(&self, path: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        match *self {
            ValuationModel::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite()) {
                    out.push(Violation::new(format!("{path}.lower"), "bounds must be finite"));
                } else if lower >= upper {
                    out.push(Violation::new(
                        format!("{path}.upper"),
                        format!("must exceed lower bound {lower:e} (got {upper:e})"),
                    ));
                }
            }
            ValuationModel::Normal { mean, std_dev } => {
                if !mean.is_finite() {
                    out.push(Violation::new(format!("{path}.mean"), "must be finite"));
                }
                if !(std_dev.is_finite() && std_dev > 0.0) {
                    out.push(Violation::new(
                        format!("{path}.std_dev"),
                        format!("must be positive and finite (got {std_dev:e})"),
                    ));
                }
            }
            ValuationModel::Exponential { rate, shift } => {
                if !(rate.is_finite() && rate > 0.0) {
                    out.push(Violation::new(
                        format!("{path}.rate"),
                        format!("must be positive and finite (got {rate:e})"),
                    ));
                }
                if !shift.is_finite() {
                    out.push(Violation::new(format!("{path}.shift"), "must be finite"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        Error::check(self.violations("valuation"))
    }

    /// Price at which no device of that program ever offloads: the top of the
    /// effective support. Also the upper bracket of every price search.
    pub fn sentinel_price(&self) -> f64 {
        self.effective_support().1
    }

    /// Natural length scale of the model: support width for uniform, the
    /// standard deviation for normal, the mean excess for exponential.
    pub fn spread(&self) -> f64 {
        match *self {
            ValuationModel::Uniform { lower, upper } => upper - lower,
            ValuationModel::Normal { std_dev, .. } => std_dev,
            ValuationModel::Exponential { rate, .. } => 1.0 / rate,
        }
    }

    pub fn support_width(&self) -> f64 {
        let (lo, hi) = self.effective_support();
        hi - lo
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ValuationModel::Uniform { lower, upper } => 0.5 * (lower + upper),
            ValuationModel::Normal { mean, .. } => mean,
            ValuationModel::Exponential { rate, shift } => shift + 1.0 / rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ValuationModel::Uniform { lower, upper } => (upper - lower).powi(2) / 12.0,
            ValuationModel::Normal { std_dev, .. } => std_dev * std_dev,
            ValuationModel::Exponential { rate, .. } => 1.0 / (rate * rate),
        }
    }

    /// Inverse hazard `(1 - F(x)) / f(x)`.
    ///
    /// Zero at and above the top of the support, `+inf` below the bottom of
    /// it. A vanishing density strictly inside the support is a model error.
    pub fn inverse_hazard(&self, x: f64) -> Result<f64> {
        let survival = self.survival(x);
        if survival <= 0.0 {
            return Ok(0.0);
        }
        let density = self.pdf(x);
        if density > 0.0 {
            return Ok(survival / density);
        }
        let (lo, _) = self.effective_support();
        if x < lo {
            Ok(f64::INFINITY)
        } else {
            Err(Error::ZeroDensity { at: x, survival })
        }
    }

    /// Virtual value `x - (1 - F(x)) / f(x)`.
    pub fn virtual_value(&self, x: f64) -> Result<f64> {
        Ok(x - self.inverse_hazard(x)?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ValuationModel::Uniform { lower, upper } => {
                Uniform::new_inclusive(lower, upper).expect("validated bounds").sample(rng)
            }
            ValuationModel::Normal { mean, std_dev } => {
                Normal::new(mean, std_dev).expect("validated std_dev").sample(rng)
            }
            ValuationModel::Exponential { rate, shift } => shift + Exp::new(rate).expect("validated rate").sample(rng),
        }
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl ValuationPrior for ValuationModel {
    fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.effective_support();
        if !(lo..=hi).contains(&x) {
            return 0.0;
        }
        match *self {
            ValuationModel::Uniform { lower, upper } => 1.0 / (upper - lower),
            ValuationModel::Normal { mean, std_dev } => {
                let z = (x - mean) / std_dev;
                FRAC_1_SQRT_2PI / std_dev * (-0.5 * z * z).exp()
            }
            ValuationModel::Exponential { rate, shift } => rate * (-rate * (x - shift)).exp(),
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.effective_support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match *self {
            ValuationModel::Uniform { lower, upper } => (x - lower) / (upper - lower),
            // libm's erfc is accurate to a few ulp, well inside 1e-10 absolute.
            ValuationModel::Normal { mean, std_dev } => {
                0.5 * libm::erfc(-(x - mean) / (std_dev * std::f64::consts::SQRT_2))
            }
            ValuationModel::Exponential { rate, shift } => -(-rate * (x - shift)).exp_m1(),
        }
    }

    fn survival(&self, x: f64) -> f64 {
        let (lo, hi) = self.effective_support();
        if x <= lo {
            return 1.0;
        }
        if x >= hi {
            return 0.0;
        }
        match *self {
            ValuationModel::Uniform { lower, upper } => (upper - x) / (upper - lower),
            ValuationModel::Normal { mean, std_dev } => {
                0.5 * libm::erfc((x - mean) / (std_dev * std::f64::consts::SQRT_2))
            }
            ValuationModel::Exponential { rate, shift } => (-rate * (x - shift)).exp(),
        }
    }

    fn effective_support(&self) -> (f64, f64) {
        match *self {
            ValuationModel::Uniform { lower, upper } => (lower, upper),
            ValuationModel::Normal { mean, std_dev } => {
                (mean - NORMAL_SUPPORT_SIGMAS * std_dev, mean + NORMAL_SUPPORT_SIGMAS * std_dev)
            }
            ValuationModel::Exponential { rate, shift } => (shift, shift + EXPONENTIAL_SUPPORT_MEANS / rate),
        }
    }
}

/// Checks that the virtual value is nondecreasing on `grid_size` interior
/// points of the effective support.
///
/// Fails with [`Error::ZeroDensity`] when the density vanishes at one of those
/// points, since the virtual value is undefined there.
pub fn check_regularity<P: ValuationPrior + ?Sized>(prior: &P, grid_size: usize) -> Result<bool> {
    if grid_size < 2 {
        return Err(Error::Precondition(format!("regularity grid needs at least 2 points (got {grid_size})")));
    }
    let (lo, hi) = prior.effective_support();
    let step = (hi - lo) / (grid_size + 1) as f64;
    let slack = 1e-12 * (hi - lo);
    let mut previous = f64::NEG_INFINITY;
    for i in 1..=grid_size {
        let x = lo + step * i as f64;
        let density = prior.pdf(x);
        let survival = prior.survival(x);
        if density <= 0.0 {
            return Err(Error::ZeroDensity { at: x, survival });
        }
        let y = x - survival / density;
        if y < previous - slack {
            return Ok(false);
        }
        previous = y;
    }
    Ok(true)
}

/// Like [`check_regularity`] but an irregular prior is an error.
pub fn ensure_regular<P: ValuationPrior + ?Sized>(prior: &P, grid_size: usize) -> Result<()> {
    if check_regularity(prior, grid_size)? {
        Ok(())
    } else {
        let (lo, _) = prior.effective_support();
        Err(Error::Irregular { at: lo })
    }
}

/// CDF of the offloading margin of a random device, `G(b) = sum_j q_j F(b + price_j)`.
pub fn mixture_cdf<P: ValuationPrior + ?Sized>(
    prior: &P,
    catalog: &ProgramCatalog,
    prices: &[f64],
    margin: f64,
) -> f64 {
    debug_assert_eq!(prices.len(), catalog.len());
    catalog.popularities().zip(prices).map(|(q, &p)| q * prior.cdf(margin + p)).sum()
}

/// `1 - G(b)`, summed from the component survivals.
pub fn mixture_survival<P: ValuationPrior + ?Sized>(
    prior: &P,
    catalog: &ProgramCatalog,
    prices: &[f64],
    margin: f64,
) -> f64 {
    debug_assert_eq!(prices.len(), catalog.len());
    catalog.popularities().zip(prices).map(|(q, &p)| q * prior.survival(margin + p)).sum()
}

/// Density of the offloading margin, `g(b) = sum_j q_j f(b + price_j)`.
pub fn mixture_pdf<P: ValuationPrior + ?Sized>(
    prior: &P,
    catalog: &ProgramCatalog,
    prices: &[f64],
    margin: f64,
) -> f64 {
    catalog.popularities().zip(prices).map(|(q, &p)| q * prior.pdf(margin + p)).sum()
}
