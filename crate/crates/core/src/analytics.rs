//! The M|G|inf comparison system: Poisson(Lambda) arrivals, service
//! survival `(1+s)^-K`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{param, Error, Result};
use crate::model::Envelope;
use crate::quadrature::adaptive_simpson;
use crate::stats::poisson_pmf;

/// Absolute tolerance for the series in [`power_series_s`].
pub const SERIES_TOL: f64 = 1e-12;
const INTEGRAL_TOL: f64 = 1e-12;
/// Hazard level below which the busy-period integrand is handled by series.
const TAIL_DELTA: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgParams {
    pub lambda: f64,
    pub k: f64,
}

impl MgParams {
    pub fn new(lambda: f64, k: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(param("Lambda", format!("must be positive and finite, got {lambda}")));
        }
        if !(k > 2.0 && k.is_finite()) {
            return Err(param("K", format!("must be finite and > 2, got {k}")));
        }
        Ok(Self { lambda, k })
    }

    /// The comparison system of an envelope: rate `Lambda`, exponent `K`.
    pub fn from_envelope(env: &Envelope) -> Result<Self> {
        Self::new(env.lambda_max, env.k)
    }

    pub fn rho(&self) -> f64 {
        self.lambda / (self.k - 1.0)
    }

    /// `1 - exp(-rho)`.
    pub fn varrho(&self) -> f64 {
        -(-self.rho()).exp_m1()
    }

    pub fn pareto_moment(&self, r: f64) -> Result<f64> {
        pareto_moment(self.k, r)
    }

    pub fn g_integral(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(param("t", format!("must be nonnegative, got {t}")));
        }
        if t.is_infinite() {
            return Ok(self.rho());
        }
        Ok(-self.rho() * ((1.0 - self.k) * t.ln_1p()).exp_m1())
    }

    pub fn occupancy_pk(&self, t: f64, k: u64) -> Result<f64> {
        Ok(poisson_pmf(self.g_integral(t)?, k))
    }

    pub fn busy_mean(&self) -> f64 {
        self.rho().exp_m1() / self.lambda
    }

    /// `E zeta^2 = (2 e^{2 rho} / Lambda) * ∫_0^∞ (e^{-G(t)} - e^{-rho}) dt`,
    /// the second-order term of the busy-period transform.
    pub fn busy_second_moment(&self) -> Result<f64> {
        let j0 = self.transform_remainder(0.0)?;
        Ok(2.0 * (2.0 * self.rho()).exp() * j0 / self.lambda)
    }

    /// `E exp(-s zeta)` for `s > 0`.
    pub fn laplace_busy(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(param("s", format!("must be positive and finite, got {s}")));
        }
        // 1 + s/L - 1/(L ∫ e^{-st-G(t)} dt) with ∫ e^{-st-G} = e^{-rho}/s + J(s).
        let j = self.transform_remainder(s)?;
        Ok(1.0 + (s / self.lambda) * (1.0 - 1.0 / ((-self.rho()).exp() + s * j)))
    }

    /// `-d/ds` of the transform at 0 from one-sided differences at `h` and
    /// `2h` with Richardson extrapolation.
    pub fn laplace_mean(&self, h: f64) -> Result<f64> {
        let d = |s: f64| -> Result<f64> { Ok((1.0 - self.laplace_busy(s)?) / s) };
        Ok(2.0 * d(h)? - d(2.0 * h)?)
    }

    /// `J(s) = ∫_0^∞ (e^{-G(t)} - e^{-rho}) e^{-st} dt`.
    ///
    /// The integrand is `e^{-rho} expm1(delta(t)) e^{-st}` with
    /// `delta(t) = rho (1+t)^{1-K}`; it is integrated in `y = ln(1+t)` up to
    /// the point where `delta` is small, and the rest by the series of
    /// `expm1` (exact for `s = 0`, bounded above by `e^{-sT}` otherwise).
    fn transform_remainder(&self, s: f64) -> Result<f64> {
        let rho = self.rho();
        let k1 = self.k - 1.0;
        let mut y_max = ((rho / TAIL_DELTA).ln() / k1).max(0.0);
        if s > 0.0 {
            // Beyond t = 40/s the factor e^{-st} is negligible.
            y_max = y_max.max((40.0 / s).ln_1p());
        }
        let body = adaptive_simpson(
            |y| {
                let delta = rho * (-k1 * y).exp();
                let t = y.exp_m1();
                delta.exp_m1() * (y - s * t).exp()
            },
            0.0,
            y_max,
            INTEGRAL_TOL,
        )?;
        let tail = if s == 0.0 {
            let base = y_max.exp(); // 1 + T
            let mut sum = 0.0;
            let mut fact = 1.0;
            for j in 1..200 {
                fact *= j as f64;
                let jj = j as f64;
                let term = (rho / base.powf(k1)).powi(j) * base / (jj * k1 - 1.0) / fact;
                sum += term;
                if term < 1e-17 * sum {
                    break;
                }
            }
            sum
        } else {
            0.0
        };
        let value = (-rho).exp() * (body + tail);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("transform remainder at s={s} is {value}")));
        }
        Ok(value)
    }

    /// `(m_k / varrho) * S(varrho, k - 1)`, the busy-period moment bound.
    pub fn busy_moment_bound(&self, k: f64) -> Result<f64> {
        if !(k >= 1.0) {
            return Err(param("k", format!("must be >= 1, got {k}")));
        }
        let m = self.pareto_moment(k)?;
        let vr = self.varrho();
        Ok(m / vr * power_series_real(vr, k - 1.0)?)
    }
}

/// `Γ(r+1)Γ(K-r)/Γ(K)`, the r-th moment of the service law.
pub fn pareto_moment(k: f64, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(param("r", format!("must be nonnegative, got {r}")));
    }
    if r >= k {
        return Err(Error::DivergentMoment { order: r, k });
    }
    Ok((ln_gamma(r + 1.0) + ln_gamma(k - r) - ln_gamma(k)).exp())
}

/// `S(x, m) = Σ_{n>=1} n^m x^n` for `0 <= x < 1`.
pub fn power_series_s(x: f64, m: u32) -> Result<f64> {
    power_series_real(x, m as f64)
}

/// [`power_series_s`] for a real exponent `m >= 0`.
pub fn power_series_real(x: f64, m: f64) -> Result<f64> {
    if !(x >= 0.0) || x.is_nan() {
        return Err(param("x", format!("must be in [0, 1), got {x}")));
    }
    if x >= 1.0 {
        return Err(Error::Numeric(format!("S(x, m) diverges for x = {x} >= 1")));
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(param("m", format!("must be finite and nonnegative, got {m}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut n = 1.0f64;
    let ln_x = x.ln();
    loop {
        sum += (m * n.ln() + n * ln_x).exp();
        let next = n + 1.0;
        let t_next = (m * next.ln() + next * ln_x).exp();
        // Term ratios after `next` are at most ((next+1)/next)^m x.
        let q = (m * (1.0 + 1.0 / next).ln() + ln_x).exp();
        if q < 1.0 && t_next / (1.0 - q) < SERIES_TOL {
            return Ok(sum);
        }
        n = next;
        if n > 1e9 {
            return Err(Error::Numeric(format!("S({x}, {m}) did not converge")));
        }
    }
}

/// Stationary occupancy of the M/M/inf system by detailed balance:
/// Poisson with mean `lambda / mu`.
pub fn mm_stationary_pmf(lambda: f64, mu: f64, k: u64) -> f64 {
    poisson_pmf(lambda / mu, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(l: f64, k: f64) -> MgParams {
        MgParams::new(l, k).unwrap()
    }

    #[test]
    fn pareto_moment_examples() {
        assert!((pareto_moment(3.0, 1.0).unwrap() - 0.5).abs() < 1e-14);
        assert!((pareto_moment(4.0, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((pareto_moment(3.7, 0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(pareto_moment(3.0, 3.0), Err(Error::DivergentMoment { .. })));
        // Integer orders: r! / prod (K - j).
        let k = 5.5;
        let direct = 6.0 / ((k - 1.0) * (k - 2.0) * (k - 3.0));
        assert!((pareto_moment(k, 3.0).unwrap() - direct).abs() < 1e-13);
    }

    #[test]
    fn pareto_moment_blows_up_near_k() {
        let big = pareto_moment(3.0, 3.0 - 1e-9).unwrap();
        assert!(big > 1e8);
    }

    #[test]
    fn g_integral_examples() {
        let q = p(1.0, 3.0);
        assert_eq!(q.g_integral(0.0).unwrap(), 0.0);
        assert!((q.g_integral(1.0).unwrap() - 0.375).abs() < 1e-15);
        assert!((q.g_integral(f64::INFINITY).unwrap() - 0.5).abs() < 1e-15);
        assert!((q.g_integral(1e12).unwrap() - 0.5).abs() < 1e-12);
        assert!(q.g_integral(-1.0).is_err());
    }

    #[test]
    fn occupancy_examples() {
        let q = p(1.0, 3.0);
        assert_eq!(q.occupancy_pk(0.0, 0).unwrap(), 1.0);
        assert_eq!(q.occupancy_pk(0.0, 2).unwrap(), 0.0);
        assert!((q.occupancy_pk(1e12, 0).unwrap() - (-0.5f64).exp()).abs() < 1e-12);
        for t in [0.1, 1.0, 10.0, 1e4] {
            assert!(q.occupancy_pk(t, 0).unwrap() >= (-q.rho()).exp());
            let total: f64 = (0..=50).map(|k| q.occupancy_pk(t, k).unwrap()).sum();
            assert!((1.0 - 1e-10..=1.0 + 1e-12).contains(&total));
        }
    }

    #[test]
    fn busy_mean_examples() {
        assert!((p(1.0, 3.0).busy_mean() - 0.5f64.exp_m1()).abs() < 1e-15);
        let light = p(1e-6, 3.0);
        assert!((light.busy_mean() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn second_moment_light_traffic_and_ordering() {
        let light = p(1e-6, 4.0);
        let m2 = pareto_moment(4.0, 2.0).unwrap();
        assert!((light.busy_second_moment().unwrap() - m2).abs() < 1e-5 * m2);
        for (l, k) in [(1.0, 4.0), (1.0, 3.0), (2.0, 5.0), (0.3, 2.5)] {
            let q = p(l, k);
            let ez2 = q.busy_second_moment().unwrap();
            assert!(ez2 >= q.busy_mean().powi(2));
            assert!(ez2 <= q.busy_moment_bound(2.0).unwrap());
        }
    }

    #[test]
    fn laplace_is_proper_and_matches_mean() {
        let q = p(1.0, 4.0);
        assert!((q.laplace_busy(1e-9).unwrap() - 1.0).abs() < 1e-8);
        let d = q.laplace_mean(1e-4).unwrap();
        assert!((d - q.busy_mean()).abs() <= 1e-4 * q.busy_mean(), "{d}");
        let q3 = p(1.0, 3.0);
        let d3 = q3.laplace_mean(1e-4).unwrap();
        assert!((d3 - q3.busy_mean()).abs() <= 1e-4 * q3.busy_mean(), "{d3}");
        assert!(q.laplace_busy(0.0).is_err());
    }

    #[test]
    fn laplace_monotone() {
        let q = p(1.0, 4.0);
        let vals: Vec<f64> = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0]
            .iter()
            .map(|&s| q.laplace_busy(s).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        assert!(vals.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn laplace_of_exponential_limit() {
        // Light traffic: the busy period is a single service time.
        let q = p(1e-7, 3.0);
        let s = 1.0f64;
        let direct = adaptive_simpson(|x| (-s * x).exp() * 3.0 * (1.0 + x).powf(-4.0), 0.0, 200.0, 1e-12).unwrap();
        assert!((q.laplace_busy(s).unwrap() - direct).abs() < 1e-6);
    }

    #[test]
    fn series_examples() {
        assert!((power_series_s(0.5, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!((power_series_s(0.5, 1).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(power_series_s(0.0, 3).unwrap(), 0.0);
        assert!(power_series_s(1.0, 0).is_err());
        for x in [0.1f64, 0.6, 0.95] {
            let closed = [x / (1.0 - x), x / (1.0 - x).powi(2), x * (1.0 + x) / (1.0 - x).powi(3)];
            for (m, c) in closed.iter().enumerate() {
                let s = power_series_s(x, m as u32).unwrap();
                assert!((s - c).abs() < 1e-10 * c.max(1.0), "x={x} m={m}");
            }
        }
    }

    #[test]
    fn moment_bound_examples() {
        let q = p(1.0, 3.0);
        let b = q.busy_moment_bound(1.0).unwrap();
        assert!((b - 0.5 * 0.5f64.exp()).abs() < 1e-12);
        assert!(b >= q.busy_mean());
        assert!((p(1e-8, 3.0).busy_moment_bound(1.0).unwrap() - 0.5).abs() < 1e-7);
        assert!(q.busy_moment_bound(3.0).is_err());
    }

    proptest! {
        #[test]
        fn bound_dominates_exact_moments(l in 0.05..3.0f64, k in 2.2..8.0f64) {
            let q = p(l, k);
            prop_assert!(q.busy_moment_bound(1.0).unwrap() >= q.busy_mean());
            prop_assert!(q.busy_moment_bound(2.0).unwrap() >= q.busy_second_moment().unwrap());
        }

        #[test]
        fn occupancy_lower_bound(l in 0.05..3.0f64, k in 2.2..8.0f64, t in 0.0..1e3f64) {
            let q = p(l, k);
            prop_assert!(q.occupancy_pk(t, 0).unwrap() >= (-q.rho()).exp() * (1.0 - 1e-12));
        }

        #[test]
        fn pareto_moment_continuous(k in 2.5..6.0f64, r in 0.0..2.0f64) {
            let a = pareto_moment(k, r).unwrap();
            let b = pareto_moment(k, r + 1e-7).unwrap();
            prop_assert!((a - b).abs() < 1e-4 * a);
        }
    }
}
