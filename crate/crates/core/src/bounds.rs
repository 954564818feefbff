//! Constant chain from `(K, lambda0, Lambda, r)` to the convergence-rate
//! bound `C1 / t^r`.

use std::io::Write;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::analytics::MgParams;
use crate::error::{param, Error, Result};
use crate::model::Envelope;

/// Relative termination tolerance of the series constants.
pub const SERIES_RTOL: f64 = 1e-12;
pub const CURVE_POINTS_PER_DECADE: usize = 32;
pub const CURVE_DECADES: usize = 4;

/// `Γ(r+1) Lambda / lambda0^{r+1}`.
pub fn eta_moment_bound(lambda0: f64, lambda_max: f64, r: f64) -> Result<f64> {
    if !(lambda0 > 0.0 && lambda_max >= lambda0) {
        return Err(param("lambda0", format!("need 0 < lambda0 <= Lambda, got {lambda0}, {lambda_max}")));
    }
    if !(r >= 0.0) {
        return Err(param("r", format!("must be nonnegative, got {r}")));
    }
    Ok((ln_gamma(r + 1.0) + lambda_max.ln() - (r + 1.0) * lambda0.ln()).exp())
}

/// Busy-period moment bound of the comparison system.
pub fn busy_bound(env: &Envelope, r: f64) -> Result<f64> {
    MgParams::from_envelope(env)?.busy_moment_bound(r)
}

/// `2^{r-1} (Z_r + H_r)`.
pub fn chi_moment_bound(env: &Envelope, r: f64) -> Result<f64> {
    env.validate()?;
    if !(r >= 1.0) {
        return Err(param("r", format!("must be >= 1, got {r}")));
    }
    let z = busy_bound(env, r)?;
    let h = eta_moment_bound(env.lambda0, env.lambda_max, r)?;
    Ok(2f64.powf(r - 1.0) * (z + h))
}

/// `lambda0 / Lambda^2`.
pub fn chi_mean_lower(env: &Envelope) -> f64 {
    env.lambda0 / (env.lambda_max * env.lambda_max)
}

/// `e^{-rho} lambda0 / Lambda`.
pub fn default_varpi(env: &Envelope) -> f64 {
    (-env.rho()).exp() * env.lambda0 / env.lambda_max
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesConstants {
    /// Coefficient of `E theta_0^r`.
    pub a: f64,
    /// Additive idle-period term.
    pub b: f64,
    /// Coefficient of `E zeta_1^r`.
    pub d: f64,
}

/// `Σ_{k>=1} q^{k-1} (k+1)^p k^e`.
fn weighted_series(q: f64, p: f64, e: f64) -> Result<f64> {
    if q == 0.0 {
        return Ok(2f64.powf(p));
    }
    let term = |k: f64| ((k - 1.0) * q.ln() + p * (k + 1.0).ln() + e * k.ln()).exp();
    let ratio = |k: f64| q * ((k + 2.0) / (k + 1.0)).powf(p) * ((k + 1.0) / k).powf(e);
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        sum += term(k);
        let next = k + 1.0;
        let r = ratio(next);
        if r < 1.0 && term(next) / (1.0 - r) < SERIES_RTOL * sum {
            return Ok(sum);
        }
        k = next;
        if k > 1e9 {
            return Err(Error::Numeric(format!("series with q={q} did not converge")));
        }
    }
}

pub fn series_constants(varpi: f64, r: f64, lambda0: f64, lambda_max: f64) -> Result<SeriesConstants> {
    if !(varpi > 0.0) {
        return Err(Error::Numeric(format!(
            "series constants diverge for varpi = {varpi} <= 0"
        )));
    }
    if varpi > 1.0 {
        return Err(param("varpi", format!("must be a probability, got {varpi}")));
    }
    if !(r >= 1.0 && r.is_finite()) {
        return Err(param("r", format!("must be >= 1, got {r}")));
    }
    let q = 1.0 - varpi;
    let scale = 2f64.powf(r - 1.0);
    let h = eta_moment_bound(lambda0, lambda_max, r)?;
    Ok(SeriesConstants {
        a: scale * weighted_series(q, r - 1.0, 0.0)?,
        b: scale * h * weighted_series(q, r, 0.0)?,
        d: scale * weighted_series(q, r - 1.0, 1.0)?,
    })
}

fn check_order(env: &Envelope, r: f64) -> Result<()> {
    env.validate()?;
    if !(r >= 1.0 && r < env.k - 1.0) {
        return Err(param("r", format!("must be in [1, K-1) = [1, {}), got {r}", env.k - 1.0)));
    }
    Ok(())
}

/// `A_r E theta_0^r + D_r Z_r + B_r`.
pub fn tau_moment_bound(env: &Envelope, r: f64, e_theta0_r: f64, varpi: Option<f64>) -> Result<f64> {
    check_order(env, r)?;
    if !(e_theta0_r >= 0.0 && e_theta0_r.is_finite()) {
        return Err(param("e_theta0_r", format!("must be finite and nonnegative, got {e_theta0_r}")));
    }
    let c = series_constants(varpi.unwrap_or_else(|| default_varpi(env)), r, env.lambda0, env.lambda_max)?;
    Ok(c.a * e_theta0_r + c.d * busy_bound(env, r)? + c.b)
}

/// `M_{r+1} Lambda^2 / ((r+1) lambda0)`.
pub fn stationary_residual_moment_bound(env: &Envelope, r: f64) -> Result<f64> {
    env.validate()?;
    if r + 1.0 >= env.k {
        return Err(Error::DivergentMoment { order: r + 1.0, k: env.k });
    }
    Ok(chi_moment_bound(env, r + 1.0)? / ((r + 1.0) * chi_mean_lower(env)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub k: f64,
    pub lambda0: f64,
    pub lambda_max: f64,
    pub r: f64,
    /// Service moments `m_r`, `m_{r+1}`.
    pub m_r: f64,
    pub m_r1: f64,
    pub rho: f64,
    pub varrho: f64,
    /// Busy-period bounds at orders `r`, `r+1`.
    pub z_r: f64,
    pub z_r1: f64,
    /// Idle-period bounds at orders `r`, `r+1`.
    pub h_r: f64,
    pub h_r1: f64,
    /// Regeneration-period bounds at orders `r`, `r+1`.
    pub chi_r: f64,
    pub chi_r1: f64,
    pub chi_mean_lb: f64,
    pub varpi: f64,
    pub a_r: f64,
    pub b_r: f64,
    pub d_r: f64,
    pub stationary_residual: f64,
    pub c1: f64,
    pub curve: Vec<CurvePoint>,
}

impl BoundReport {
    pub fn bound_at(&self, t: f64) -> f64 {
        self.c1 / t.powf(self.r)
    }

    /// CSV with header `t,bound`.
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "bound"])?;
        for p in &self.curve {
            w.write_record([p.t.to_string(), p.bound.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `10^{i/32}` for `i = 0..=128`.
pub fn curve_grid() -> Vec<f64> {
    let n = CURVE_POINTS_PER_DECADE * CURVE_DECADES;
    (0..=n)
        .map(|i| 10f64.powf(i as f64 / CURVE_POINTS_PER_DECADE as f64))
        .collect()
}

/// `C1 = 2 (A_r * stationary residual + D_r Z_r + B_r)` and every
/// intermediate constant.
pub fn convergence_constant(env: &Envelope, r: f64, varpi: Option<f64>) -> Result<BoundReport> {
    check_order(env, r)?;
    let mg = MgParams::from_envelope(env)?;
    let varpi = varpi.unwrap_or_else(|| default_varpi(env));
    let series = series_constants(varpi, r, env.lambda0, env.lambda_max)?;
    let z_r = mg.busy_moment_bound(r)?;
    let stationary_residual = stationary_residual_moment_bound(env, r)?;
    let c1 = 2.0 * (series.a * stationary_residual + series.d * z_r + series.b);
    if !(c1.is_finite() && c1 > 0.0) {
        return Err(Error::Numeric(format!("C1 = {c1}")));
    }
    let curve = curve_grid()
        .into_iter()
        .map(|t| CurvePoint { t, bound: c1 / t.powf(r) })
        .collect();
    Ok(BoundReport {
        k: env.k,
        lambda0: env.lambda0,
        lambda_max: env.lambda_max,
        r,
        m_r: mg.pareto_moment(r)?,
        m_r1: mg.pareto_moment(r + 1.0)?,
        rho: mg.rho(),
        varrho: mg.varrho(),
        z_r,
        z_r1: mg.busy_moment_bound(r + 1.0)?,
        h_r: eta_moment_bound(env.lambda0, env.lambda_max, r)?,
        h_r1: eta_moment_bound(env.lambda0, env.lambda_max, r + 1.0)?,
        chi_r: chi_moment_bound(env, r)?,
        chi_r1: chi_moment_bound(env, r + 1.0)?,
        chi_mean_lb: chi_mean_lower(env),
        varpi,
        a_r: series.a,
        b_r: series.b,
        d_r: series.d,
        stationary_residual,
        c1,
        curve,
    })
}
