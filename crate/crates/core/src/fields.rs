//! Drift fields, rate fields and jump-size laws.
//!
//! A drift field `phi(x, t)` splits the unit total event rate of the walk into
//! an up-rate `1/2 + phi` and a down-rate `1/2 - phi`. Jumps in either
//! direction are drawn from positive laws with mean exactly 1.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Upper clip for nonnegative drift fields, keeping the down-rate positive.
pub const PHI_CLIP: f64 = 0.5 - 1e-12;

/// Time at which the `t -> infinity` limit rates are evaluated.
pub const DEFAULT_T_PROXY: f64 = 1e8;

/// Bounds of the grid used to scan signed fields at construction.
const SCAN_X: (f64, f64) = (-100.0, 100.0);
const SCAN_T: (f64, f64) = (0.0, 1e4);
const SCAN_POINTS: usize = 100;

/// `phi` sampled on a rectangular `(|x|, t)` grid, bilinearly interpolated and
/// held constant beyond the grid edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftTable {
    /// Strictly increasing, nonnegative positions.
    pub xs: Vec<f64>,
    /// Strictly increasing, nonnegative times.
    pub ts: Vec<f64>,
    /// `values[i][j] = phi(xs[i], ts[j])`.
    pub values: Vec<Vec<f64>>,
}

impl DriftTable {
    fn validate(&self) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.xs.is_empty() || self.ts.is_empty() {
            return Err(invalid("tabulated", "grid axes must be non-empty"));
        }
        if !increasing(&self.xs) || self.xs[0] < 0.0 || !self.xs.iter().all(|x| x.is_finite()) {
            return Err(invalid(
                "tabulated.xs",
                "must be finite, nonnegative and strictly increasing",
            ));
        }
        if !increasing(&self.ts) || self.ts[0] < 0.0 || !self.ts.iter().all(|t| t.is_finite()) {
            return Err(invalid(
                "tabulated.ts",
                "must be finite, nonnegative and strictly increasing",
            ));
        }
        if self.values.len() != self.xs.len() || self.values.iter().any(|row| row.len() != self.ts.len()) {
            return Err(invalid("tabulated.values", "shape must be xs.len() x ts.len()"));
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.iter().any(|v| !(0.0..=0.5).contains(v)) {
                return Err(invalid("tabulated.values", format!("row {i} leaves [0, 1/2]")));
            }
            if row.windows(2).any(|w| w[1] > w[0]) {
                return Err(invalid("tabulated.values", format!("row {i} increases in t")));
            }
        }
        Ok(())
    }

    fn bracket(axis: &[f64], v: f64) -> (usize, usize, f64) {
        if v <= axis[0] {
            return (0, 0, 0.0);
        }
        let last = axis.len() - 1;
        if v >= axis[last] {
            return (last, last, 0.0);
        }
        let hi = axis.partition_point(|&a| a <= v);
        let lo = hi - 1;
        (lo, hi, (v - axis[lo]) / (axis[hi] - axis[lo]))
    }

    fn eval(&self, ax: f64, t: f64) -> f64 {
        let (i0, i1, wx) = Self::bracket(&self.xs, ax);
        let (j0, j1, wt) = Self::bracket(&self.ts, t);
        let v = &self.values;
        let lo = v[i0][j0] * (1.0 - wt) + v[i0][j1] * wt;
        let hi = v[i1][j0] * (1.0 - wt) + v[i1][j1] * wt;
        lo * (1.0 - wx) + hi * wx
    }
}

/// Parametric families of drift fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftFamily {
    /// `phi = 0`: the symmetric walk.
    Zero,
    /// `phi = c / (4 |x|)`, independent of time.
    CriticalLamperti {
        c: f64,
    },
    /// `phi = rho |x|^alpha / t^beta`.
    PowerLaw {
        rho: f64,
        alpha: f64,
        beta: f64,
    },
    /// Signed field pulling the walk toward the origin. Only used for
    /// occupancy diagnostics; the classifiers reject it.
    MeanReverting {
        kappa: f64,
    },
    Tabulated(DriftTable),
}

/// A validated drift field `phi(x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    family: DriftFamily,
    x_floor: f64,
}

impl DriftField {
    pub fn new(family: DriftFamily) -> Result<Self> {
        Self::with_x_floor(family, 1.0)
    }

    /// `x_floor` replaces `|x|` by `max(|x|, x_floor)` in the families that
    /// are singular at the origin.
    pub fn with_x_floor(family: DriftFamily, x_floor: f64) -> Result<Self> {
        if !(x_floor.is_finite() && x_floor > 0.0) {
            return Err(invalid(
                "x_floor",
                format!("must be positive and finite, got {x_floor}"),
            ));
        }
        match &family {
            DriftFamily::Zero => {}
            DriftFamily::CriticalLamperti { c } => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(invalid("c", format!("must be nonnegative and finite, got {c}")));
                }
            }
            DriftFamily::PowerLaw { rho, alpha, beta } => {
                if !(rho.is_finite() && *rho >= 0.0) {
                    return Err(invalid("rho", format!("must be nonnegative and finite, got {rho}")));
                }
                if !alpha.is_finite() {
                    return Err(invalid("alpha", "must be finite"));
                }
                // beta < 0 would make phi increase in t.
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(invalid("beta", format!("must be nonnegative and finite, got {beta}")));
                }
            }
            DriftFamily::MeanReverting { kappa } => {
                if !(kappa.is_finite() && *kappa >= 0.0) {
                    return Err(invalid("kappa", format!("must be nonnegative and finite, got {kappa}")));
                }
            }
            DriftFamily::Tabulated(table) => table.validate()?,
        }
        let field = DriftField { family, x_floor };
        if field.is_signed() {
            field.scan_signed()?;
        }
        Ok(field)
    }

    pub fn zero() -> Self {
        DriftField {
            family: DriftFamily::Zero,
            x_floor: 1.0,
        }
    }

    pub fn critical_lamperti(c: f64) -> Result<Self> {
        Self::new(DriftFamily::CriticalLamperti { c })
    }

    pub fn power_law(rho: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(DriftFamily::PowerLaw { rho, alpha, beta })
    }

    pub fn mean_reverting(kappa: f64) -> Result<Self> {
        Self::new(DriftFamily::MeanReverting { kappa })
    }

    pub fn family(&self) -> &DriftFamily {
        &self.family
    }

    pub fn x_floor(&self) -> f64 {
        self.x_floor
    }

    /// True for fields that may take negative values.
    pub fn is_signed(&self) -> bool {
        matches!(self.family, DriftFamily::MeanReverting { .. })
    }

    /// True when `phi` does not depend on `t`.
    pub fn is_time_homogeneous(&self) -> bool {
        match &self.family {
            DriftFamily::Zero | DriftFamily::CriticalLamperti { .. } | DriftFamily::MeanReverting { .. } => true,
            DriftFamily::PowerLaw { rho, beta, .. } => *rho == 0.0 || *beta == 0.0,
            DriftFamily::Tabulated(table) => table.ts.len() == 1,
        }
    }

    fn scan_signed(&self) -> Result<()> {
        for x in linspace(SCAN_X.0, SCAN_X.1, SCAN_POINTS) {
            for t in linspace(SCAN_T.0, SCAN_T.1, SCAN_POINTS) {
                let value = self.raw_phi(x, t);
                if value.is_nan() || value.abs() > 0.5 {
                    return Err(Error::DriftOutOfRange {
                        x,
                        t,
                        value: value.abs(),
                    });
                }
            }
        }
        Ok(())
    }

    fn raw_phi(&self, x: f64, t: f64) -> f64 {
        let r = x.abs().max(self.x_floor);
        match &self.family {
            DriftFamily::Zero => 0.0,
            DriftFamily::CriticalLamperti { c } => c / (4.0 * r),
            DriftFamily::PowerLaw { rho, alpha, beta } => {
                if *rho == 0.0 {
                    0.0
                } else {
                    rho * r.powf(*alpha) / t.powf(*beta)
                }
            }
            DriftFamily::MeanReverting { kappa } => {
                let sign = if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                -kappa * sign * (x.abs() / self.x_floor).min(0.5) / 2.0
            }
            DriftFamily::Tabulated(table) => table.eval(x.abs(), t),
        }
    }

    /// Clipped drift at position `x` and time `t >= 0`.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let raw = self.raw_phi(x, t);
        if self.is_signed() {
            raw.clamp(-0.5, 0.5)
        } else if raw.is_nan() {
            // inf / inf at the origin of time: saturate.
            PHI_CLIP
        } else {
            raw.clamp(0.0, PHI_CLIP)
        }
    }
}

/// Evaluates `phi(x, t)`.
pub fn eval_phi(field: &DriftField, x: f64, t: f64) -> f64 {
    field.eval(x, t)
}

/// Up- and down-rates derived from a drift field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateField {
    drift: DriftField,
    t_proxy: f64,
}

impl RateField {
    pub fn new(drift: DriftField) -> Self {
        RateField {
            drift,
            t_proxy: DEFAULT_T_PROXY,
        }
    }

    pub fn with_t_proxy(drift: DriftField, t_proxy: f64) -> Result<Self> {
        if !(t_proxy.is_finite() && t_proxy > 0.0) {
            return Err(invalid(
                "t_proxy",
                format!("must be positive and finite, got {t_proxy}"),
            ));
        }
        Ok(RateField { drift, t_proxy })
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    pub fn t_proxy(&self) -> f64 {
        self.t_proxy
    }

    /// `(lambda, mu)` at `(x, t)`. The pair sums to exactly 1.
    pub fn eval(&self, x: f64, t: f64) -> (f64, f64) {
        split_unit(self.drift.eval(x, t))
    }

    /// `(lambda_x, mu_x)`, the `t -> infinity` limits, read at the proxy time.
    pub fn limit(&self, x: f64) -> (f64, f64) {
        self.eval(x, self.t_proxy)
    }
}

/// `(1/2 + phi, 1/2 - phi)` with the smaller component obtained by subtraction
/// from 1, which is exact for the larger one in `[1/2, 1]`.
fn split_unit(phi: f64) -> (f64, f64) {
    if phi >= 0.0 {
        let lambda = 0.5 + phi;
        (lambda, 1.0 - lambda)
    } else {
        let mu = 0.5 - phi;
        (1.0 - mu, mu)
    }
}

/// Evaluates `(lambda_{x,t}, mu_{x,t})`.
pub fn eval_rates(rf: &RateField, x: f64, t: f64) -> (f64, f64) {
    rf.eval(x, t)
}

/// Positive jump-size laws with mean exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    Constant1,
    ExponentialMean1,
    /// Gamma with the given shape and scale `1 / shape`.
    GammaMean1 {
        shape: f64,
    },
    /// Uniform on `(1 - halfwidth, 1 + halfwidth)`.
    UniformMean1 {
        halfwidth: f64,
    },
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            JumpLaw::Constant1 | JumpLaw::ExponentialMean1 => Ok(()),
            JumpLaw::GammaMean1 { shape } => {
                if shape.is_finite() && shape > 0.0 {
                    Ok(())
                } else {
                    Err(invalid("shape", format!("must be positive and finite, got {shape}")))
                }
            }
            JumpLaw::UniformMean1 { halfwidth } => {
                if (0.0..1.0).contains(&halfwidth) {
                    Ok(())
                } else {
                    Err(invalid("halfwidth", format!("must lie in [0, 1), got {halfwidth}")))
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        1.0
    }

    pub fn variance(&self) -> f64 {
        match *self {
            JumpLaw::Constant1 => 0.0,
            JumpLaw::ExponentialMean1 => 1.0,
            JumpLaw::GammaMean1 { shape } => 1.0 / shape,
            JumpLaw::UniformMean1 { halfwidth } => halfwidth * halfwidth / 3.0,
        }
    }

    /// Prepared sampler; panics on an invalid law, so call [`validate`](Self::validate) first.
    pub fn sampler(&self) -> JumpSampler {
        self.validate().expect("invalid jump law");
        match *self {
            JumpLaw::Constant1 => JumpSampler::Constant,
            JumpLaw::UniformMean1 { halfwidth: 0.0 } => JumpSampler::Constant,
            JumpLaw::ExponentialMean1 => JumpSampler::Exponential,
            JumpLaw::GammaMean1 { shape } => {
                JumpSampler::Gamma(Gamma::new(shape, 1.0 / shape).expect("validated shape"))
            }
            JumpLaw::UniformMean1 { halfwidth } => {
                JumpSampler::Uniform(Uniform::new(1.0 - halfwidth, 1.0 + halfwidth).expect("validated halfwidth"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum JumpSampler {
    Constant,
    Exponential,
    Gamma(Gamma<f64>),
    Uniform(Uniform<f64>),
}

impl Distribution<f64> for JumpSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let v = match self {
                JumpSampler::Constant => return 1.0,
                JumpSampler::Exponential => Exp1.sample(rng),
                JumpSampler::Gamma(g) => g.sample(rng),
                JumpSampler::Uniform(u) => u.sample(rng),
            };
            // Zero is a measure-zero outcome of the continuous laws; redraw.
            if v > 0.0 {
                return v;
            }
        }
    }
}

/// Draws one jump size from `law`.
pub fn sample_jump<R: Rng + ?Sized>(law: &JumpLaw, rng: &mut R) -> f64 {
    law.sampler().sample(rng)
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + step * i as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    fn in_scope_fields() -> Vec<DriftField> {
        vec![
            DriftField::zero(),
            DriftField::critical_lamperti(0.5).unwrap(),
            DriftField::critical_lamperti(3.0).unwrap(),
            DriftField::power_law(0.5, 0.5, 0.75).unwrap(),
            DriftField::power_law(1.0, -0.5, 0.25).unwrap(),
            DriftField::new(DriftFamily::Tabulated(DriftTable {
                xs: vec![0.0, 10.0, 100.0],
                ts: vec![0.0, 100.0],
                values: vec![vec![0.5, 0.1], vec![0.2, 0.05], vec![0.01, 0.0]],
            }))
            .unwrap(),
        ]
    }

    #[test]
    fn phi_examples() {
        assert_eq!(eval_phi(&DriftField::zero(), 5.0, 3.0), 0.0);
        let cl = DriftField::critical_lamperti(1.0).unwrap();
        for t in [0.0, 1.0, 1e6] {
            assert_abs_diff_eq!(eval_phi(&cl, 10.0, t), 0.025, epsilon = 1e-15);
        }
        let pl = DriftField::power_law(0.5, 0.5, 0.75).unwrap();
        assert_abs_diff_eq!(eval_phi(&pl, 4.0, 16.0), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn rate_examples() {
        let zero = RateField::new(DriftField::zero());
        assert_eq!(eval_rates(&zero, 0.0, 0.0), (0.5, 0.5));

        let (l, m) = eval_rates(&RateField::new(DriftField::critical_lamperti(2.0).unwrap()), 1.0, 0.0);
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(m, 0.0, epsilon = 1e-11);
        assert!(m > 0.0, "clip keeps mu strictly positive");

        let (l, m) = eval_rates(&RateField::new(DriftField::critical_lamperti(1.0).unwrap()), 10.0, 5.0);
        assert_abs_diff_eq!(l, 0.525, epsilon = 1e-15);
        assert_abs_diff_eq!(m, 0.475, epsilon = 1e-15);
    }

    #[test]
    fn grid_scan_invariants() {
        for field in in_scope_fields() {
            let rf = RateField::new(field.clone());
            for x in linspace(-100.0, 100.0, 100) {
                let mut prev = f64::INFINITY;
                for t in linspace(0.0, 1e4, 100) {
                    let phi = field.eval(x, t);
                    assert!((0.0..=0.5).contains(&phi), "{field:?} phi({x},{t}) = {phi}");
                    assert!(phi <= prev, "{field:?} increases in t at x = {x}");
                    prev = phi;
                    let (l, m) = rf.eval(x, t);
                    assert_eq!(l + m, 1.0);
                    assert!(l > 0.0 && l <= 1.0 && (0.0..1.0).contains(&m));
                }
            }
        }
    }

    #[test]
    fn limit_rates_positive() {
        for field in in_scope_fields() {
            let rf = RateField::new(field);
            for x in linspace(-50.0, 50.0, 41) {
                let (l, m) = rf.limit(x);
                assert!(l > 0.0 && m > 0.0);
            }
        }
        // Time-decaying drift vanishes in the limit.
        let rf = RateField::new(DriftField::power_law(0.5, 0.5, 0.75).unwrap());
        let (l, _) = rf.limit(10.0);
        assert_abs_diff_eq!(l, 0.5, epsilon = 1e-5);
    }

    #[test]
    fn mean_reverting_is_signed_and_bounded() {
        let f = DriftField::mean_reverting(0.2).unwrap();
        assert!(f.is_signed());
        assert_abs_diff_eq!(f.eval(5.0, 0.0), -0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(f.eval(-5.0, 0.0), 0.05, epsilon = 1e-15);
        assert_eq!(f.eval(0.0, 0.0), 0.0);
        assert!(matches!(
            DriftField::mean_reverting(2.5),
            Err(Error::DriftOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DriftField::critical_lamperti(-1.0).is_err());
        assert!(DriftField::power_law(0.5, 0.5, -0.1).is_err());
        assert!(DriftField::with_x_floor(DriftFamily::Zero, 0.0).is_err());
        let increasing = DriftTable {
            xs: vec![0.0],
            ts: vec![0.0, 1.0],
            values: vec![vec![0.1, 0.2]],
        };
        assert!(DriftField::new(DriftFamily::Tabulated(increasing)).is_err());
        assert!(JumpLaw::UniformMean1 { halfwidth: 1.0 }.validate().is_err());
        assert!(JumpLaw::GammaMean1 { shape: 0.0 }.validate().is_err());
    }

    #[test]
    fn tabulated_interpolates() {
        let table = DriftTable {
            xs: vec![0.0, 2.0],
            ts: vec![0.0, 10.0],
            values: vec![vec![0.4, 0.2], vec![0.2, 0.0]],
        };
        let f = DriftField::new(DriftFamily::Tabulated(table)).unwrap();
        assert_abs_diff_eq!(f.eval(1.0, 5.0), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(f.eval(-1.0, 5.0), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(f.eval(50.0, 1e9), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn jump_examples() {
        let mut rng = stream(1);
        assert_eq!(sample_jump(&JumpLaw::Constant1, &mut rng), 1.0);
        let s = JumpLaw::UniformMean1 { halfwidth: 0.5 }.sampler();
        for _ in 0..10_000 {
            let v = s.sample(&mut rng);
            assert!((0.5..1.5).contains(&v));
        }
    }

    #[test]
    fn gamma_moments() {
        let law = JumpLaw::GammaMean1 { shape: 4.0 };
        assert_eq!(law.variance(), 0.25);
        let s = law.sampler();
        let mut rng = stream(42);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((var - 0.25).abs() < 0.02, "var {var}");
    }

    #[test]
    fn all_laws_match_analytic_moments() {
        let laws = [
            JumpLaw::Constant1,
            JumpLaw::ExponentialMean1,
            JumpLaw::GammaMean1 { shape: 2.0 },
            JumpLaw::UniformMean1 { halfwidth: 0.9 },
        ];
        let n = 100_000;
        for (k, law) in laws.iter().enumerate() {
            let s = law.sampler();
            let mut rng = stream(100 + k as u64);
            let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
            assert!(xs.iter().all(|&x| x > 0.0));
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se_mean = (law.variance() / n as f64).sqrt();
            assert!((mean - 1.0).abs() <= 3.0 * se_mean + 1e-12, "{law:?} mean {mean}");
            // SE of the sample variance from the fourth central moment.
            let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
            let se_var = ((m4 - var * var) / n as f64).sqrt();
            assert!(
                (var - law.variance()).abs() <= 3.0 * se_var + 1e-12,
                "{law:?} var {var}"
            );
        }
    }
}
