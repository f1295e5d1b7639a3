//! Recurrence/transience classification.
//!
//! Three routes are provided and expected to agree away from the critical
//! constant `c = 1`:
//!
//! * [`classify_theorem1`] reads `c` off `4 x phi(x, x^2)` in the tail of a
//!   geometric grid;
//! * [`ratio_test`] applies the `1 + c/n` ratio criterion to the birth-death
//!   chain produced by [`discretize_to_bd`];
//! * [`bd_series_criterion`] sums `prod mu*/lambda*` directly, with an
//!   analytic extension of the chain far beyond its tabulated window.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{DriftField, RateField};

/// Half-width of the band around `c = 1` that is reported as inconclusive.
pub const DECISION_MARGIN: f64 = 0.05;

/// Default grid for [`classify_theorem1`].
pub const DEFAULT_X0: f64 = 2.0;
pub const DEFAULT_X_MAX: f64 = 1e4;
pub const DEFAULT_GRID: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Recurrent,
    Transient,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Theorem1,
    MvCritical,
    RatioTest,
    SeriesCriterion,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Theorem1 => "theorem1",
            Method::MvCritical => "mv_critical",
            Method::RatioTest => "ratio_test",
            Method::SeriesCriterion => "series_criterion",
        })
    }
}

/// A verdict with the estimated constant and the window it was read from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub c_estimate: f64,
    /// Scan window `[lo, hi]` (positions for the field criteria, cell
    /// indices for the chain criteria).
    pub window: [f64; 2],
    /// Point of the window attaining `c_estimate`.
    pub argext: f64,
    pub method: Method,
}

fn geometric_grid(x0: f64, x_max: f64, n: usize) -> impl Iterator<Item = f64> {
    let ratio = (x_max / x0).ln() / (n - 1) as f64;
    (0..n).map(move |i| {
        if i + 1 == n {
            x_max
        } else {
            x0 * (ratio * i as f64).exp()
        }
    })
}

/// Classifies a nonnegative, time-decreasing field by the size of
/// `s(x) = 4 x phi(x, x^2)` over the upper half `[sqrt(x0 x_max), x_max]` of a
/// geometric grid.
pub fn classify_theorem1(field: &DriftField, x0: f64, x_max: f64, grid: usize) -> Result<Classification> {
    if field.is_signed() {
        return Err(Error::SignedField("classify_theorem1 needs phi >= 0"));
    }
    if !(x0.is_finite() && x0 > 0.0) {
        return Err(invalid("x0", format!("must be positive, got {x0}")));
    }
    if !(x_max.is_finite() && x_max > x0) {
        return Err(invalid("x_max", format!("must exceed x0 = {x0}, got {x_max}")));
    }
    if grid < 100 {
        return Err(invalid("grid", format!("must be at least 100, got {grid}")));
    }
    let tail_lo = (x0 * x_max).sqrt();
    let mut sup = (f64::NEG_INFINITY, tail_lo);
    let mut inf = (f64::INFINITY, tail_lo);
    // Relative slack so the grid point at sqrt(x0 x_max) is not lost to rounding.
    for x in geometric_grid(x0, x_max, grid).filter(|&x| x >= tail_lo * (1.0 - 1e-12)) {
        let s = 4.0 * x * field.eval(x, x * x);
        if s > sup.0 {
            sup = (s, x);
        }
        if s < inf.0 {
            inf = (s, x);
        }
    }
    let (verdict, (c_estimate, argext)) = if sup.0 <= 1.0 - DECISION_MARGIN {
        (Verdict::Recurrent, sup)
    } else if inf.0 >= 1.0 + DECISION_MARGIN {
        (Verdict::Transient, inf)
    } else {
        (Verdict::Inconclusive, sup)
    };
    Ok(Classification {
        verdict,
        c_estimate,
        window: [tail_lo, x_max],
        argext,
        method: Method::Theorem1,
    })
}

/// The critical drift `rho |x|^(2 beta - 1) / t^beta`, decided in closed form
/// and cross-checked by [`classify_theorem1`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvCriticalReport {
    /// Recurrent iff `4 rho < 1`, transient iff `4 rho > 1`.
    pub analytic: Classification,
    pub theorem1: Classification,
}

pub fn mv_critical_field(rho: f64, beta: f64) -> Result<DriftField> {
    let open = (beta > 0.0 && beta < 0.5) || (beta > 0.5 && beta < 1.0);
    if !open {
        return Err(invalid("beta", format!("must lie in (0, 1/2) or (1/2, 1), got {beta}")));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(invalid("rho", format!("must be positive, got {rho}")));
    }
    DriftField::power_law(rho, 2.0 * beta - 1.0, beta)
}

pub fn classify_mv_critical(rho: f64, beta: f64) -> Result<MvCriticalReport> {
    let field = mv_critical_field(rho, beta)?;
    let theorem1 = classify_theorem1(&field, DEFAULT_X0, DEFAULT_X_MAX, DEFAULT_GRID)?;
    let c = 4.0 * rho;
    let verdict = if c < 1.0 {
        Verdict::Recurrent
    } else if c > 1.0 {
        Verdict::Transient
    } else {
        Verdict::Inconclusive
    };
    let analytic = Classification {
        verdict,
        c_estimate: c,
        window: theorem1.window,
        argext: theorem1.argext,
        method: Method::MvCritical,
    };
    Ok(MvCriticalReport { analytic, theorem1 })
}

type CellRates = dyn Fn(i64) -> (f64, f64) + Send + Sync;

/// Rates for cells outside the tabulated window.
#[derive(Clone)]
pub struct Extension(Arc<CellRates>);

impl Extension {
    pub fn new(f: impl Fn(i64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Extension(Arc::new(f))
    }
}

impl fmt::Debug for Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Extension(..)")
    }
}

/// Bilateral birth-death chain on cells `n_min..=n_max`, where cell `n`
/// stands for the interval `[n - 1, n]`.
#[derive(Debug, Clone)]
pub struct BDChain {
    n_min: i64,
    n_max: i64,
    lambda_star: Vec<f64>,
    mu_star: Vec<f64>,
    extension: Option<Extension>,
}

fn check_cell(n: i64, lambda: f64, mu: f64) -> Result<()> {
    if lambda > 0.0 && mu > 0.0 && lambda.is_finite() && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveRate { n, lambda, mu })
    }
}

impl BDChain {
    pub fn new(n_min: i64, lambda_star: Vec<f64>, mu_star: Vec<f64>) -> Result<Self> {
        if lambda_star.is_empty() || lambda_star.len() != mu_star.len() {
            return Err(invalid("chain", "rate arrays must be non-empty and of equal length"));
        }
        for (k, (&l, &m)) in lambda_star.iter().zip(&mu_star).enumerate() {
            check_cell(n_min + k as i64, l, m)?;
        }
        let n_max = n_min + lambda_star.len() as i64 - 1;
        Ok(BDChain {
            n_min,
            n_max,
            lambda_star,
            mu_star,
            extension: None,
        })
    }

    /// Tabulates `f` on the window and keeps it as the extension.
    pub fn from_fn(n_min: i64, n_max: i64, f: impl Fn(i64) -> (f64, f64) + Send + Sync + 'static) -> Result<Self> {
        if n_min > n_max {
            return Err(invalid("n_max", format!("must be at least n_min = {n_min}")));
        }
        let (lambda_star, mu_star) = (n_min..=n_max).map(&f).unzip();
        let mut chain = Self::new(n_min, lambda_star, mu_star)?;
        chain.extension = Some(Extension::new(f));
        Ok(chain)
    }

    pub fn with_extension(mut self, extension: Extension) -> Self {
        self.extension = Some(extension);
        self
    }

    pub fn n_min(&self) -> i64 {
        self.n_min
    }

    pub fn n_max(&self) -> i64 {
        self.n_max
    }

    pub fn lambda_star(&self) -> &[f64] {
        &self.lambda_star
    }

    pub fn mu_star(&self) -> &[f64] {
        &self.mu_star
    }

    pub fn is_extendable(&self) -> bool {
        self.extension.is_some()
    }

    pub fn contains(&self, n: i64) -> bool {
        (self.n_min..=self.n_max).contains(&n)
    }

    /// `(lambda*_n, mu*_n)`, from the table or the extension.
    pub fn rates(&self, n: i64) -> Result<(f64, f64)> {
        if self.contains(n) {
            let k = (n - self.n_min) as usize;
            return Ok((self.lambda_star[k], self.mu_star[k]));
        }
        match &self.extension {
            Some(ext) => {
                let (l, m) = (ext.0)(n);
                check_cell(n, l, m)?;
                Ok((l, m))
            }
            None => Err(Error::OutOfWindow {
                n,
                n_min: self.n_min,
                n_max: self.n_max,
            }),
        }
    }

    /// The chain seen from the left: cell `n` maps to `1 - n` with the up-
    /// and down-rates exchanged.
    pub fn mirrored(&self) -> BDChain {
        let lambda_star = self.mu_star.iter().rev().copied().collect();
        let mu_star = self.lambda_star.iter().rev().copied().collect();
        let extension = self.extension.as_ref().map(|ext| {
            let inner = Arc::clone(&ext.0);
            Extension::new(move |m| {
                let (l, mu) = inner(1 - m);
                (mu, l)
            })
        });
        BDChain {
            n_min: 1 - self.n_max,
            n_max: 1 - self.n_min,
            lambda_star,
            mu_star,
            extension,
        }
    }
}

fn cell_average(rf: &RateField, n: i64, points: usize) -> (f64, f64) {
    let lo = (n - 1) as f64;
    let h = 1.0 / points as f64;
    let (mut l, mut m) = (0.0, 0.0);
    for j in 0..points {
        let (lj, mj) = rf.limit(lo + (j as f64 + 0.5) * h);
        l += lj;
        m += mj;
    }
    (l * h, m * h)
}

/// Averages the limit rates over each cell `[n - 1, n]` by the composite
/// midpoint rule with `quadrature_points` subintervals.
pub fn discretize_to_bd(rf: &RateField, n_min: i64, n_max: i64, quadrature_points: usize) -> Result<BDChain> {
    if n_min >= n_max {
        return Err(invalid("n_max", format!("must exceed n_min = {n_min}, got {n_max}")));
    }
    if quadrature_points == 0 {
        return Err(invalid("quadrature_points", "must be at least 1"));
    }
    let rf = rf.clone();
    BDChain::from_fn(n_min, n_max, move |n| cell_average(&rf, n, quadrature_points))
}

fn check_tail_start(chain: &BDChain, n0: i64) -> Result<()> {
    if n0 < 1 {
        return Err(invalid("n0", format!("must be at least 1, got {n0}")));
    }
    if !chain.contains(n0) {
        return Err(Error::OutOfWindow {
            n: n0,
            n_min: chain.n_min,
            n_max: chain.n_max,
        });
    }
    Ok(())
}

/// Ratio criterion on the right tail `n0..=n_max`: recurrent when
/// `lambda*/mu* <= 1 + 1/n` throughout, transient when
/// `min n (lambda*/mu* - 1)` exceeds `1 + DECISION_MARGIN`.
pub fn ratio_test(chain: &BDChain, n0: i64) -> Result<Classification> {
    check_tail_start(chain, n0)?;
    let mut below = true;
    let mut max_excess = (f64::NEG_INFINITY, n0);
    let mut min_excess = (f64::INFINITY, n0);
    for n in n0..=chain.n_max {
        let (l, m) = chain.rates(n)?;
        let ratio = l / m;
        if ratio < 1.0 {
            return Err(Error::SettingViolated { n, ratio });
        }
        below &= ratio <= 1.0 + 1.0 / n as f64;
        let excess = n as f64 * (ratio - 1.0);
        if excess > max_excess.0 {
            max_excess = (excess, n);
        }
        if excess < min_excess.0 {
            min_excess = (excess, n);
        }
    }
    let (verdict, (c, at)) = if below {
        (Verdict::Recurrent, max_excess)
    } else if min_excess.0 > 1.0 + DECISION_MARGIN {
        (Verdict::Transient, min_excess)
    } else {
        (Verdict::Inconclusive, min_excess)
    };
    Ok(Classification {
        verdict,
        c_estimate: c,
        window: [n0 as f64, chain.n_max as f64],
        argext: at as f64,
        method: Method::RatioTest,
    })
}

/// Thresholds of the series criterion.
pub const SERIES_TAIL_TERM: f64 = 1e-12;
pub const SERIES_DOUBLING_CHANGE: f64 = 1e-9;
pub const SERIES_MIN_INCREMENT: f64 = 0.1;
/// Partial sums are compared at `T/32, T/16, ..., T` terms.
const SERIES_DOUBLINGS: u32 = 5;

/// Partial sums `S_N = sum_{n=n0}^N prod_{k=n0}^n mu*_k / lambda*_k`, summed
/// from `n0` to `n_max + tail_extension` (the extension supplies the cells
/// beyond the window).
///
/// The increments `D_j` of `S` over successive doublings of `N` decay like
/// `2^{j (1 - c)}` when the products behave like `n^{-c}`, so
/// `c_hat = 1 - log2(D_{j+1} / D_j)` estimates the tail exponent. The series
/// is declared convergent (transient) when the tail term is below 1e-12 and
/// the last doubling adds less than 1e-9, or when the last three exponent
/// estimates all exceed `1 + DECISION_MARGIN`. It is declared divergent
/// (recurrent) when the last three estimates are all below
/// `1 - DECISION_MARGIN` and every one of those doublings adds at least 0.1.
pub fn bd_series_criterion(chain: &BDChain, n0: i64, tail_extension: u64) -> Result<Classification> {
    check_tail_start(chain, n0)?;
    if tail_extension > 0 && !chain.is_extendable() {
        return Err(Error::NotExtendable { n_max: chain.n_max });
    }
    let n_end = chain.n_max + tail_extension as i64;
    let total = (n_end - n0 + 1) as u64;
    let blocks = SERIES_DOUBLINGS as usize + 1;
    if total < 1 << (SERIES_DOUBLINGS + 1) {
        return Err(invalid(
            "chain",
            format!("need at least {} terms, got {total}", 1u64 << (SERIES_DOUBLINGS + 1)),
        ));
    }
    // Block j sums the terms with index count in (L_{j-1}, L_j], L_j = T >> (5 - j).
    let ends: Vec<u64> = (0..blocks).map(|j| total >> (blocks - 1 - j)).collect();
    let mut block_sums = vec![0.0; blocks];
    let mut log_prod = 0.0;
    let mut term = 1.0;
    let mut block = 0;
    for (count, n) in (n0..=n_end).enumerate() {
        let (l, m) = chain.rates(n)?;
        if l < m {
            return Err(Error::SettingViolated { n, ratio: l / m });
        }
        log_prod += (m / l).ln();
        term = log_prod.exp();
        if count as u64 >= ends[block] {
            block += 1;
        }
        block_sums[block] += term;
    }
    let increments = &block_sums[1..];
    let exponents: Vec<f64> = increments.windows(2).map(|w| 1.0 - (w[1] / w[0]).log2()).collect();
    let last3 = &exponents[exponents.len() - 3..];
    let last3_increments = &increments[increments.len() - 3..];
    let literal = term < SERIES_TAIL_TERM && increments[increments.len() - 1] < SERIES_DOUBLING_CHANGE;

    let (verdict, c) = if literal {
        let c = last3
            .iter()
            .copied()
            .filter(|c| c.is_finite())
            .fold(f64::INFINITY, f64::min);
        (Verdict::Transient, c)
    } else if last3.iter().all(|&c| c >= 1.0 + DECISION_MARGIN) {
        (Verdict::Transient, last3.iter().copied().fold(f64::INFINITY, f64::min))
    } else if last3.iter().all(|&c| c <= 1.0 - DECISION_MARGIN)
        && last3_increments.iter().all(|&d| d >= SERIES_MIN_INCREMENT)
    {
        (
            Verdict::Recurrent,
            last3.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    } else {
        (Verdict::Inconclusive, last3[last3.len() - 1])
    };
    Ok(Classification {
        verdict,
        c_estimate: c,
        window: [n0 as f64, n_end as f64],
        argext: n_end as f64,
        method: Method::SeriesCriterion,
    })
}

/// Which chain criterion [`classify_bilateral`] applies to each tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum ChainCriterion {
    Ratio,
    Series { tail_extension: u64 },
}

/// Both tails of a bilateral chain. The left tail is the right tail of the
/// mirrored chain and is only examined when the window reaches `1 - n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilateralClassification {
    pub verdict: Verdict,
    pub right: Classification,
    pub left: Option<Classification>,
}

fn tail_verdict(chain: &BDChain, n0: i64, criterion: ChainCriterion) -> Result<Classification> {
    let run = |chain: &BDChain| match criterion {
        ChainCriterion::Ratio => ratio_test(chain, n0),
        ChainCriterion::Series { tail_extension } => bd_series_criterion(chain, n0, tail_extension),
    };
    match run(chain) {
        Err(Error::SettingViolated { .. }) => {
            // A tail with lambda* <= mu* throughout drifts inward.
            let mut worst = (f64::NEG_INFINITY, n0);
            for n in n0..=chain.n_max {
                let (l, m) = chain.rates(n)?;
                let excess = n as f64 * (l / m - 1.0);
                if excess > 0.0 {
                    return run(chain);
                }
                if excess > worst.0 {
                    worst = (excess, n);
                }
            }
            Ok(Classification {
                verdict: Verdict::Recurrent,
                c_estimate: worst.0,
                window: [n0 as f64, chain.n_max as f64],
                argext: worst.1 as f64,
                method: match criterion {
                    ChainCriterion::Ratio => Method::RatioTest,
                    ChainCriterion::Series { .. } => Method::SeriesCriterion,
                },
            })
        }
        other => other,
    }
}

/// Transient if either tail is transient, recurrent if every examined tail is.
pub fn classify_bilateral(chain: &BDChain, n0: i64, criterion: ChainCriterion) -> Result<BilateralClassification> {
    let right = tail_verdict(chain, n0, criterion)?;
    let mirrored = chain.mirrored();
    let left = if mirrored.contains(n0) && mirrored.n_max > n0 {
        Some(tail_verdict(&mirrored, n0, criterion)?)
    } else {
        None
    };
    let verdicts = std::iter::once(right.verdict).chain(left.map(|c| c.verdict));
    let verdict = verdicts.fold(Verdict::Recurrent, |acc, v| match (acc, v) {
        (Verdict::Transient, _) | (_, Verdict::Transient) => Verdict::Transient,
        (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
        _ => Verdict::Recurrent,
    });
    Ok(BilateralClassification { verdict, right, left })
}
