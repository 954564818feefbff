//! Hazard-rate toolkit.
//!
//! A [`HazardClock`] describes a random duration through its intensity,
//! viewed from a current age. The clock answers three questions: how much
//! hazard has accumulated after a further `u` time units, what the CDF and
//! density of the residual duration are, and (by inversion) when a given
//! amount of hazard has been accumulated. Competing clocks are raced by
//! [`sample_first_event`].
//!
//! [`DensityTable`] holds a tabulated residual-duration law with an explicit
//! tail mass. [`MaximalCoupling`] draws a pair from two such laws so that the
//! two values coincide with probability equal to their common part.

use std::cell::Cell;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Relative tolerance of bracket-and-bisect inversion.
pub const INVERSION_RTOL: f64 = 1e-10;
/// Absolute tolerance of numerical cumulative-hazard quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Upper limit of automatic bracketing when no horizon cap is given.
pub const MAX_BRACKET: f64 = 1e12;

type RealFn<'a> = Box<dyn Fn(f64) -> f64 + 'a>;

enum Law<'a> {
    /// `rate(u) = floor + excess / (lag + age + u)`; covers constant and
    /// Pareto-type hazards in closed form.
    Hyperbolic { floor: f64, excess: f64, lag: f64 },
    Custom {
        rate: RealFn<'a>,
        cumulative: Option<RealFn<'a>>,
        inverse: Option<RealFn<'a>>,
    },
}

/// A hazard clock at a given age. `rate(u)` is the intensity after a further
/// `u >= 0` time units along the deterministic shift.
pub struct HazardClock<'a> {
    age: f64,
    law: Law<'a>,
}

impl std::fmt::Debug for HazardClock<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.law {
            Law::Hyperbolic { floor, excess, lag } => f
                .debug_struct("HazardClock")
                .field("age", &self.age)
                .field("floor", floor)
                .field("excess", excess)
                .field("lag", lag)
                .finish(),
            Law::Custom { cumulative, inverse, .. } => f
                .debug_struct("HazardClock")
                .field("age", &self.age)
                .field("closed_cumulative", &cumulative.is_some())
                .field("closed_inverse", &inverse.is_some())
                .finish(),
        }
    }
}

impl<'a> HazardClock<'a> {
    pub fn constant(rate: f64) -> Self {
        Self::hyperbolic(rate, 0.0, 1.0, 0.0)
    }

    /// `rate(u) = shape / (1 + age + u)`: the residual of a service time with
    /// survival `(1+s)^-shape`.
    pub fn pareto(shape: f64, age: f64) -> Self {
        Self::hyperbolic(0.0, shape, 1.0, age)
    }

    /// `rate(u) = floor + excess / (lag + age + u)`.
    pub fn hyperbolic(floor: f64, excess: f64, lag: f64, age: f64) -> Self {
        Self {
            age,
            law: Law::Hyperbolic { floor, excess, lag },
        }
    }

    /// A clock known only through its rate; the cumulative hazard is obtained
    /// by adaptive quadrature.
    pub fn custom(age: f64, rate: impl Fn(f64) -> f64 + 'a) -> Self {
        Self {
            age,
            law: Law::Custom {
                rate: Box::new(rate),
                cumulative: None,
                inverse: None,
            },
        }
    }

    /// Attach a closed-form cumulative `u -> ∫_0^u rate`. No effect on
    /// built-in closed-form clocks.
    pub fn with_cumulative(mut self, cumulative: impl Fn(f64) -> f64 + 'a) -> Self {
        if let Law::Custom { cumulative: c, .. } = &mut self.law {
            *c = Some(Box::new(cumulative));
        }
        self
    }

    /// Attach a closed-form inverse of the cumulative hazard. Only used
    /// together with a closed-form cumulative.
    pub fn with_inverse(mut self, inverse: impl Fn(f64) -> f64 + 'a) -> Self {
        if let Law::Custom { inverse: i, .. } = &mut self.law {
            *i = Some(Box::new(inverse));
        }
        self
    }

    pub fn age(&self) -> f64 {
        self.age
    }

    pub fn rate(&self, u: f64) -> f64 {
        match &self.law {
            Law::Hyperbolic { floor, excess, lag } => {
                floor + if *excess == 0.0 { 0.0 } else { excess / (lag + self.age + u) }
            }
            Law::Custom { rate, .. } => rate(u),
        }
    }

    pub fn has_closed_form(&self) -> bool {
        match &self.law {
            Law::Hyperbolic { .. } => true,
            Law::Custom { cumulative, .. } => cumulative.is_some(),
        }
    }

    /// Cumulative hazard `H(u) = ∫_0^u rate`.
    pub fn cumulative(&self, u: f64) -> Result<f64> {
        self.cumulative_between(0.0, u)
    }

    /// `H(b) - H(a)` for `0 <= a <= b`.
    pub fn cumulative_between(&self, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0 && b >= a) {
            return Err(Error::InvalidParameter {
                name: "offset",
                reason: format!("need 0 <= a <= b, got a={a}, b={b}"),
            });
        }
        let value = match &self.law {
            Law::Hyperbolic { floor, excess, lag } => {
                let base = lag + self.age;
                let log_part = if *excess == 0.0 {
                    0.0
                } else {
                    excess * ((b - a) / (base + a)).ln_1p()
                };
                floor * (b - a) + log_part
            }
            Law::Custom {
                cumulative: Some(cum),
                ..
            } => {
                if a == 0.0 {
                    cum(b)
                } else {
                    cum(b) - cum(a)
                }
            }
            Law::Custom { rate, .. } => {
                let bad = Cell::new(None);
                let integral = adaptive_simpson(
                    |u| {
                        let r = rate(u);
                        if !(r >= 0.0) || !r.is_finite() {
                            bad.set(Some((u, r)));
                            0.0
                        } else {
                            r
                        }
                    },
                    a,
                    b,
                    QUADRATURE_TOL,
                )?;
                if let Some((u, r)) = bad.get() {
                    return Err(Error::InvalidIntensity(format!(
                        "rate({u}) = {r} at clock age {}",
                        self.age
                    )));
                }
                integral
            }
        };
        if !(value.is_finite() && value >= -1e-12 * (1.0 + value.abs())) {
            return Err(Error::InvalidIntensity(format!(
                "cumulative hazard over [{a}, {b}] is {value}"
            )));
        }
        Ok(value.max(0.0))
    }

    /// Smallest `s` with `H(s) >= target`, or `Ok(None)` when `H(cap) < target`.
    /// Without a cap, failure to bracket below [`MAX_BRACKET`] is an error.
    pub fn invert(&self, target: f64, cap: Option<f64>) -> Result<Option<f64>> {
        if !(target >= 0.0 && target.is_finite()) {
            return Err(Error::Numeric(format!("cannot invert hazard at {target}")));
        }
        if target == 0.0 {
            return Ok(Some(0.0));
        }
        if let Some(s) = self.invert_closed_form(target) {
            return Ok(match cap {
                Some(c) if s > c => None,
                _ => Some(s),
            });
        }
        let limit = cap.unwrap_or(MAX_BRACKET);
        // Bracket.
        let (mut lo, mut hi) = (0.0, limit.min(self.initial_bracket(target)));
        loop {
            if self.cumulative(hi)? >= target {
                break;
            }
            if hi >= limit {
                return match cap {
                    Some(_) => Ok(None),
                    None => Err(Error::HorizonExceeded {
                        target,
                        horizon: limit,
                    }),
                };
            }
            lo = hi;
            hi = (hi * 2.0).min(limit);
        }
        // Bisect.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cumulative(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= INVERSION_RTOL * hi {
                return Ok(Some(hi));
            }
        }
        Err(Error::Numeric(format!(
            "bisection for H(s) = {target} stalled in [{lo}, {hi}]"
        )))
    }

    fn invert_closed_form(&self, target: f64) -> Option<f64> {
        match &self.law {
            Law::Hyperbolic { floor, excess, lag } => {
                if *excess == 0.0 && *floor > 0.0 {
                    Some(target / floor)
                } else if *floor == 0.0 && *excess > 0.0 {
                    Some((lag + self.age) * (target / excess).exp_m1())
                } else {
                    None
                }
            }
            Law::Custom {
                cumulative: Some(_),
                inverse: Some(inv),
                ..
            } => Some(inv(target)),
            Law::Custom { .. } => None,
        }
    }

    fn initial_bracket(&self, target: f64) -> f64 {
        match &self.law {
            // rate >= floor, so H(s) >= floor * s.
            Law::Hyperbolic { floor, .. } if *floor > 0.0 => target / floor,
            _ => {
                let r = self.rate(0.0);
                if r > 0.0 && r.is_finite() {
                    target / r
                } else {
                    1.0
                }
            }
        }
    }
}

/// `1 - exp(-H(s))`.
pub fn cdf_from_intensity(clock: &HazardClock<'_>, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: format!("must be nonnegative, got {s}"),
        });
    }
    Ok(-(-clock.cumulative(s)?).exp_m1())
}

/// `rate(s) * exp(-H(s))`.
pub fn density_from_intensity(clock: &HazardClock<'_>, s: f64) -> Result<f64> {
    let survival = 1.0 - cdf_from_intensity(clock, s)?;
    let r = clock.rate(s);
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidIntensity(format!("rate({s}) = {r}")));
    }
    Ok(r * survival)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstEvent {
    pub delay: f64,
    pub winner: usize,
}

/// Races independent clocks: each draws a unit-exponential hazard budget and
/// fires when its cumulative hazard reaches it. Returns the earliest firing
/// (lowest index on ties), or `None` if nothing fires within `cap`.
///
/// Exactly one exponential variate is consumed per clock.
pub fn sample_first_event<R: Rng + ?Sized>(
    clocks: &[HazardClock<'_>],
    cap: Option<f64>,
    rng: &mut R,
) -> Result<Option<FirstEvent>> {
    if clocks.is_empty() {
        return Err(Error::InvalidParameter {
            name: "clocks",
            reason: "need at least one clock".into(),
        });
    }
    let budgets: Vec<f64> = clocks.iter().map(|_| Exp1.sample(rng)).collect();
    first_to_reach(clocks, &budgets, cap)
}

/// Deterministic core of [`sample_first_event`] for given hazard budgets.
pub fn first_to_reach(
    clocks: &[HazardClock<'_>],
    budgets: &[f64],
    cap: Option<f64>,
) -> Result<Option<FirstEvent>> {
    let mut best: Option<FirstEvent> = None;
    for (i, (clock, &budget)) in clocks.iter().zip(budgets).enumerate() {
        let local_cap = match (cap, best) {
            (_, Some(b)) => Some(b.delay),
            (c, None) => c,
        };
        let Some(delay) = clock
            .invert(budget, local_cap)
            .map_err(|e| e.context(format!("clock {i}")))?
        else {
            continue;
        };
        if best.is_none_or(|b| delay < b.delay) {
            best = Some(FirstEvent { delay, winner: i });
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    pub points: usize,
    /// Tabulation stops where the survival drops below this level.
    pub survival_floor: f64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            points: 4096,
            survival_floor: 1e-8,
        }
    }
}

/// A piecewise-linear density on a grid, plus the mass beyond the last point.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    grid: Vec<f64>,
    density: Vec<f64>,
    tail_bound: f64,
    prefix: Vec<f64>,
}

impl DensityTable {
    pub fn new(grid: Vec<f64>, density: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if grid.len() < 2 || grid.len() != density.len() {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!(
                    "need at least two aligned points, got grid {} / density {}",
                    grid.len(),
                    density.len()
                ),
            });
        }
        if !(grid[0] >= 0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) || !grid[grid.len() - 1].is_finite() {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "must be nonnegative, finite and strictly increasing".into(),
            });
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "density",
                reason: "values must be finite and nonnegative".into(),
            });
        }
        if !(tail_bound.is_finite() && tail_bound >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "tail_bound",
                reason: format!("must be finite and nonnegative, got {tail_bound}"),
            });
        }
        let mut prefix = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        prefix.push(0.0);
        for i in 1..grid.len() {
            acc += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
            prefix.push(acc);
        }
        Ok(Self {
            grid,
            density,
            tail_bound,
            prefix,
        })
    }

    /// Tabulates the residual-duration density of `clock` up to the point
    /// where its survival falls below the floor. Grid spacing grows
    /// geometrically from the clock's natural scale `1/rate(0)`.
    pub fn from_clock(clock: &HazardClock<'_>, opts: &TableOptions) -> Result<Self> {
        let target = -opts.survival_floor.ln();
        let s_max = clock
            .invert(target, None)?
            .ok_or_else(|| Error::Numeric("uncapped inversion returned no value".into()))?;
        if !(s_max > 0.0) {
            return Err(Error::Numeric(format!("degenerate tabulation range {s_max}")));
        }
        let r0 = clock.rate(0.0);
        let scale = if r0 > 0.0 && r0.is_finite() { (1.0 / r0).min(s_max) } else { s_max * 1e-3 };
        let grid = geometric_grid(scale, s_max, opts.points);
        let mut density = Vec::with_capacity(grid.len());
        let mut h = 0.0;
        for (i, &s) in grid.iter().enumerate() {
            if i > 0 {
                h += clock.cumulative_between(grid[i - 1], s)?;
            }
            let r = clock.rate(s);
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidIntensity(format!("rate({s}) = {r}")));
            }
            density.push(r * (-h).exp());
        }
        Self::new(grid, density, (-h).exp())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    fn last(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Trapezoid mass over the grid.
    pub fn mass(&self) -> f64 {
        self.prefix[self.prefix.len() - 1]
    }

    pub fn total(&self) -> f64 {
        self.mass() + self.tail_bound
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total() - 1.0).abs() <= tol
    }

    /// Decay rate of the exponential model used beyond the last grid point.
    fn tail_rate(&self) -> Option<f64> {
        let f_last = self.density[self.density.len() - 1];
        (self.tail_bound > 0.0 && f_last > 0.0).then(|| f_last / self.tail_bound)
    }

    /// Interpolated density; zero outside the grid.
    pub fn density_at(&self, s: f64) -> f64 {
        if s < self.grid[0] || s > self.last() || s.is_nan() {
            return 0.0;
        }
        let i = self.cell(s);
        let (a, b) = (self.grid[i], self.grid[i + 1]);
        let w = (s - a) / (b - a);
        self.density[i] * (1.0 - w) + self.density[i + 1] * w
    }

    /// Density including the exponential tail model beyond the last point.
    fn extended_density_at(&self, s: f64) -> f64 {
        if s > self.last() {
            match self.tail_rate() {
                Some(rate) => self.density[self.density.len() - 1] * (-rate * (s - self.last())).exp(),
                None => 0.0,
            }
        } else {
            self.density_at(s)
        }
    }

    fn extended_tail_beyond(&self, s: f64) -> f64 {
        if s <= self.last() {
            return self.tail_bound + self.mass() - self.cdf(s);
        }
        match self.tail_rate() {
            Some(rate) => self.tail_bound * (-rate * (s - self.last())).exp(),
            None => self.tail_bound,
        }
    }

    /// Index of the cell `[grid[i], grid[i+1]]` containing `s`.
    fn cell(&self, s: f64) -> usize {
        match self.grid.binary_search_by(|g| g.total_cmp(&s)) {
            Ok(i) => i.min(self.grid.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.grid.len() - 2),
        }
    }

    /// Unnormalized mass on `[0, s]` (tail mass excluded).
    pub fn cdf(&self, s: f64) -> f64 {
        if s <= self.grid[0] {
            return 0.0;
        }
        if s >= self.last() {
            return self.mass();
        }
        let i = self.cell(s);
        let a = self.grid[i];
        let fa = self.density[i];
        let fs = self.density_at(s);
        self.prefix[i] + 0.5 * (fa + fs) * (s - a)
    }

    /// Inverse of the normalized CDF (the table total counts as mass one).
    pub fn quantile(&self, u: f64) -> f64 {
        let total = self.total();
        let target = u.clamp(0.0, 1.0) * total;
        let mass = self.mass();
        if target >= mass && self.tail_bound > 0.0 {
            let frac = ((target - mass) / self.tail_bound).min(1.0 - 1e-16);
            let rate = self
                .tail_rate()
                .unwrap_or(1.0 / (self.last() - self.grid[0]));
            return self.last() - (-frac).ln_1p() / rate;
        }
        if target >= mass {
            return self.last();
        }
        let i = match self.prefix.binary_search_by(|p| p.total_cmp(&target)) {
            Ok(i) => i.min(self.grid.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.grid.len() - 2),
        };
        let (a, b) = (self.grid[i], self.grid[i + 1]);
        let (fa, fb) = (self.density[i], self.density[i + 1]);
        let r = target - self.prefix[i];
        let h = b - a;
        let slope = (fb - fa) / h;
        // Solve fa*d + slope*d^2/2 = r in the stable form.
        let disc = (fa * fa + 2.0 * slope * r).max(0.0);
        let denom = fa + disc.sqrt();
        let d = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        (a + d.clamp(0.0, h)).min(b)
    }

    /// Draws one value from the normalized table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// Law of `T - e` given `T > e`, for `T` distributed by this table.
    pub fn condition_exceeding(&self, e: f64) -> Result<DensityTable> {
        if e <= 0.0 {
            return Ok(self.clone());
        }
        let survival = self.extended_tail_beyond(e);
        if !(survival > 0.0) {
            return Err(Error::Numeric(format!("no mass beyond {e} to condition on")));
        }
        if e >= self.last() {
            let Some(rate) = self.tail_rate() else {
                return Err(Error::Numeric(format!("no tail model beyond {e}")));
            };
            return exponential_table(rate, &TableOptions::default());
        }
        let mut grid = vec![0.0];
        let mut density = vec![self.density_at(e) / survival];
        for (g, d) in self.grid.iter().zip(&self.density) {
            let shifted = g - e;
            if shifted > 0.0 && shifted > grid[grid.len() - 1] {
                grid.push(shifted);
                density.push(d / survival);
            }
        }
        if grid.len() < 2 {
            return Err(Error::Numeric(format!("conditioning at {e} leaves no grid")));
        }
        DensityTable::new(grid, density, self.tail_bound / survival)
    }

    /// The same law rescaled to total mass one.
    pub fn normalized(&self) -> DensityTable {
        self.scaled(1.0 / self.total())
    }

    fn scaled(&self, factor: f64) -> DensityTable {
        DensityTable::new(
            self.grid.clone(),
            self.density.iter().map(|d| d * factor).collect(),
            self.tail_bound * factor,
        )
        .expect("scaling preserves validity")
    }
}

/// `points` values `scale * (q^i - 1)` from 0 to `s_max`.
pub fn geometric_grid(scale: f64, s_max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let steps = (points - 1) as f64;
    let log_q = (s_max / scale).ln_1p() / steps;
    let mut grid: Vec<f64> = (0..points)
        .map(|i| scale * (log_q * i as f64).exp_m1())
        .collect();
    grid[points - 1] = s_max;
    grid
}

/// Tabulated Exp(rate) law.
pub fn exponential_table(rate: f64, opts: &TableOptions) -> Result<DensityTable> {
    DensityTable::from_clock(&HazardClock::constant(rate), opts)
}

/// Common part `∫ min(f, g)` of two tabulated densities, plus the smaller
/// tail bound; clamped to `[0, 1]`.
pub fn common_part(f: &DensityTable, g: &DensityTable) -> f64 {
    let (grid, fv, gv) = merge(f, g);
    let overlap: f64 = fv
        .iter()
        .zip(&gv)
        .map(|(a, b)| a.min(*b))
        .collect::<Vec<_>>()
        .windows(2)
        .zip(grid.windows(2))
        .map(|(d, x)| 0.5 * (d[0] + d[1]) * (x[1] - x[0]))
        .sum();
    let last = grid[grid.len() - 1];
    let tails = f.extended_tail_beyond(last).min(g.extended_tail_beyond(last));
    (overlap + tails).clamp(0.0, 1.0)
}

/// Both densities on the union grid, with extra points at every crossing so
/// that `min` and `max` are piecewise linear on the result.
fn merge(f: &DensityTable, g: &DensityTable) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut pts: Vec<f64> = f.grid.iter().chain(&g.grid).copied().collect();
    // Guards where a table with no tail ends (or starts) abruptly, so that
    // interpolation on the union grid does not invent mass.
    for t in [f, g] {
        if t.tail_rate().is_none() && t.density[t.density.len() - 1] > 0.0 {
            pts.push(t.last() * (1.0 + 1e-12) + 1e-300);
        }
        if t.grid[0] > 0.0 && t.density[0] > 0.0 {
            pts.push(t.grid[0] * (1.0 - 1e-12));
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut grid = Vec::with_capacity(pts.len() + 16);
    let mut fv = Vec::with_capacity(pts.len() + 16);
    let mut gv = Vec::with_capacity(pts.len() + 16);
    for (i, &x) in pts.iter().enumerate() {
        let (a, b) = (f.extended_density_at(x), g.extended_density_at(x));
        if i > 0 {
            let (xp, ap, bp) = (grid[grid.len() - 1], fv[fv.len() - 1], gv[gv.len() - 1]);
            let (dp, d): (f64, f64) = (ap - bp, a - b);
            if dp * d < 0.0 {
                let w = dp / (dp - d);
                let xc = xp + w * (x - xp);
                if xc > xp && xc < x {
                    let vc = ap + w * (a - ap);
                    grid.push(xc);
                    fv.push(vc);
                    gv.push(vc);
                }
            }
        }
        grid.push(x);
        fv.push(a);
        gv.push(b);
    }
    (grid, fv, gv)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledDraw {
    pub first: f64,
    pub second: f64,
    pub coupled: bool,
}

/// Maximal coupling of two tabulated laws: with probability `kappa` both
/// values are one draw from the normalized overlap; otherwise each side
/// draws from its own normalized residual `f_j - min(f_1, f_2)`.
#[derive(Debug, Clone)]
pub struct MaximalCoupling {
    kappa: f64,
    first: DensityTable,
    second: DensityTable,
    overlap: Option<DensityTable>,
    residuals: Option<[DensityTable; 2]>,
}

impl MaximalCoupling {
    pub fn new(f: &DensityTable, g: &DensityTable) -> Result<Self> {
        if !(f.total() > 0.0 && g.total() > 0.0) {
            return Err(Error::NoData("coupling needs two laws with positive mass".into()));
        }
        // Work with exactly normalized laws so that the marginals are exact.
        let (f, g) = (f.scaled(1.0 / f.total()), g.scaled(1.0 / g.total()));
        let (grid, fv, gv) = merge(&f, &g);
        let last = grid[grid.len() - 1];
        let (tf, tg) = (f.extended_tail_beyond(last), g.extended_tail_beyond(last));
        let lo: Vec<f64> = fv.iter().zip(&gv).map(|(a, b)| a.min(*b)).collect();
        let overlap = DensityTable::new(grid.clone(), lo.clone(), tf.min(tg))?;
        let kappa = overlap.total().clamp(0.0, 1.0);
        let residual = |v: &[f64], tail: f64| {
            let d = v.iter().zip(&lo).map(|(a, m)| (a - m).max(0.0)).collect();
            DensityTable::new(grid.clone(), d, (tail - tf.min(tg)).max(0.0))
        };
        let r1 = residual(&fv, tf)?;
        let r2 = residual(&gv, tg)?;
        let degenerate_residual = !(r1.total() > 1e-15 && r2.total() > 1e-15);
        Ok(Self {
            kappa: if degenerate_residual { 1.0 } else { kappa },
            overlap: (kappa > 0.0).then_some(overlap),
            residuals: (!degenerate_residual).then_some([r1, r2]),
            first: f,
            second: g,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Normalized law of side `j` (0 or 1) given the draw was not coupled.
    pub fn residual(&self, j: usize) -> Option<&DensityTable> {
        self.residuals.as_ref().map(|r| &r[j])
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CoupledDraw {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        match (&self.overlap, &self.residuals) {
            (None, _) => CoupledDraw {
                first: self.first.quantile(u1),
                second: self.second.quantile(u2),
                coupled: false,
            },
            (Some(overlap), _) if u3 <= self.kappa => {
                let v = overlap.quantile(u1);
                CoupledDraw {
                    first: v,
                    second: v,
                    coupled: true,
                }
            }
            (Some(_), Some([r1, r2])) => CoupledDraw {
                first: r1.quantile(u1),
                second: r2.quantile(u2),
                coupled: false,
            },
            (Some(overlap), None) => {
                let v = overlap.quantile(u1);
                CoupledDraw {
                    first: v,
                    second: v,
                    coupled: true,
                }
            }
        }
    }
}

/// One maximal-coupling draw from two tabulated laws.
pub fn coupled_draw<R: Rng + ?Sized>(
    f: &DensityTable,
    g: &DensityTable,
    rng: &mut R,
) -> Result<CoupledDraw> {
    Ok(MaximalCoupling::new(f, g)?.draw(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cdf_examples() {
        let c = HazardClock::constant(2.0);
        assert!(close(cdf_from_intensity(&c, 1.0).unwrap(), 1.0 - (-2f64).exp(), 1e-15));
        let p = HazardClock::pareto(3.0, 0.0);
        assert!(close(cdf_from_intensity(&p, 1.0).unwrap(), 0.875, 1e-15));
        assert_eq!(cdf_from_intensity(&p, 0.0).unwrap(), 0.0);
        assert!(cdf_from_intensity(&p, -1.0).is_err());
    }

    #[test]
    fn density_examples() {
        let c = HazardClock::constant(1.0);
        assert!(close(density_from_intensity(&c, 0.0).unwrap(), 1.0, 1e-15));
        let p = HazardClock::pareto(3.0, 0.0);
        assert!(close(density_from_intensity(&p, 1.0).unwrap(), 0.1875, 1e-15));
        let z = HazardClock::constant(0.0);
        assert_eq!(density_from_intensity(&z, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn numeric_clock_matches_closed_form() {
        let numeric = HazardClock::custom(0.5, |u| 3.0 / (1.5 + u));
        let closed = HazardClock::pareto(3.0, 0.5);
        for s in [0.0, 0.1, 1.0, 7.5, 40.0] {
            let a = numeric.cumulative(s).unwrap();
            let b = closed.cumulative(s).unwrap();
            assert!(close(a, b, 1e-9), "s={s}: {a} vs {b}");
        }
        let s = numeric.invert(2.0, None).unwrap().unwrap();
        let t = closed.invert(2.0, None).unwrap().unwrap();
        assert!((s - t).abs() <= 1e-8 * t);
    }

    #[test]
    fn negative_rate_is_invalid() {
        let bad = HazardClock::custom(0.0, |u| 1.0 - u);
        assert!(matches!(
            cdf_from_intensity(&bad, 3.0),
            Err(Error::InvalidIntensity(_))
        ));
    }

    #[test]
    fn pareto_inversion_closed_form() {
        let p = HazardClock::pareto(3.0, 0.0);
        let s = p.invert(3.0 * 2f64.ln(), None).unwrap().unwrap();
        assert!(close(s, 1.0, 1e-14));
        // Age shifts the scale: s = (1 + x)(e^{E/K} - 1).
        let aged = HazardClock::pareto(3.0, 2.0);
        let s = aged.invert(3.0 * 2f64.ln(), None).unwrap().unwrap();
        assert!(close(s, 3.0, 1e-13));
    }

    #[test]
    fn hyperbolic_inversion_by_bisection() {
        let h = HazardClock::hyperbolic(0.5, 0.5, 1.0, 0.0);
        let s = h.invert(2.0, None).unwrap().unwrap();
        assert!(close(h.cumulative(s).unwrap(), 2.0, 1e-9));
    }

    #[test]
    fn zero_rate_cannot_fire() {
        let z = HazardClock::constant(0.0);
        assert!(matches!(z.invert(1.0, None), Err(Error::HorizonExceeded { .. })));
        assert_eq!(z.invert(1.0, Some(10.0)).unwrap(), None);
        assert_eq!(HazardClock::custom(0.0, |_| 0.0).invert(1.0, Some(5.0)).unwrap(), None);
    }

    #[test]
    fn first_event_respects_cap_and_ties() {
        let clocks = [HazardClock::constant(1.0), HazardClock::constant(1.0)];
        let ev = first_to_reach(&clocks, &[1.0, 1.0], None).unwrap().unwrap();
        assert_eq!(ev.winner, 0);
        let ev = first_to_reach(&clocks, &[2.0, 1.0], None).unwrap().unwrap();
        assert_eq!(ev.winner, 1);
        assert!(close(ev.delay, 1.0, 1e-15));
        assert_eq!(first_to_reach(&clocks, &[2.0, 3.0], Some(1.5)).unwrap(), None);
        let mut rng = Streams::new(0).stream("t", 0);
        assert!(sample_first_event(&[], None, &mut rng).is_err());
    }

    #[test]
    fn table_from_clock_is_normalized() {
        let t = DensityTable::from_clock(&HazardClock::constant(1.0), &TableOptions::default()).unwrap();
        assert!(t.is_normalized(1e-6), "total {}", t.total());
        assert!(close(t.tail_bound(), 1e-8, 1e-12));
        let p = DensityTable::from_clock(&HazardClock::pareto(3.0, 0.0), &TableOptions::default()).unwrap();
        assert!(p.is_normalized(1e-5), "total {}", p.total());
    }

    #[test]
    fn table_rejects_invalid_input() {
        assert!(DensityTable::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.0).is_err());
        assert!(DensityTable::new(vec![0.0, 1.0], vec![1.0, -1.0], 0.0).is_err());
        assert!(DensityTable::new(vec![0.0, 1.0], vec![1.0], 0.0).is_err());
        assert!(DensityTable::new(vec![0.0, 1.0], vec![1.0, 1.0], f64::NAN).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let t = DensityTable::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], 0.0).unwrap();
        assert!(close(t.quantile(0.5), 1.0, 1e-12));
        assert!(close(t.quantile(0.125), 0.5, 1e-12));
        assert!(close(t.cdf(t.quantile(0.7)), 0.7, 1e-12));
    }

    #[test]
    fn common_part_examples() {
        let opts = TableOptions::default();
        let e1 = exponential_table(1.0, &opts).unwrap();
        let e2 = exponential_table(2.0, &opts).unwrap();
        assert!(close(common_part(&e1, &e1), 1.0, 1e-6));
        assert!(close(common_part(&e1, &e2), 0.75, 1e-6), "{}", common_part(&e1, &e2));
        let a = DensityTable::new(vec![0.0, 1.0], vec![1.0, 1.0], 0.0).unwrap();
        let b = DensityTable::new(vec![2.0, 3.0], vec![1.0, 1.0], 0.0).unwrap();
        assert!(common_part(&a, &b) < 1e-9);
    }

    #[test]
    fn idle_period_common_part_lower_bound() {
        // Residual idle-period laws with lambda in [0.5, 1].
        let opts = TableOptions::default();
        let slow = exponential_table(0.5, &opts).unwrap();
        let fast = exponential_table(1.0, &opts).unwrap();
        let varying =
            DensityTable::from_clock(&HazardClock::hyperbolic(0.5, 0.5, 1.0, 0.0), &opts).unwrap();
        for (f, g) in [(&slow, &fast), (&varying, &fast), (&slow, &varying)] {
            assert!(common_part(f, g) >= 0.5);
        }
    }

    #[test]
    fn identical_laws_always_couple() {
        let opts = TableOptions::default();
        let e = DensityTable::from_clock(&HazardClock::pareto(3.0, 1.0), &opts).unwrap();
        let mut rng = Streams::new(3).stream("couple", 0);
        for _ in 0..200 {
            let d = coupled_draw(&e, &e, &mut rng).unwrap();
            assert!(d.coupled);
            assert_eq!(d.first, d.second);
        }
    }

    #[test]
    fn conditioning_is_memoryless_for_exponential() {
        let e = exponential_table(2.0, &TableOptions::default()).unwrap();
        let c = e.condition_exceeding(0.7).unwrap();
        assert!(c.is_normalized(1e-5), "{}", c.total());
        for s in [0.0, 0.3, 1.0, 3.0] {
            assert!(close(c.density_at(s), 2.0 * (-2.0 * s).exp(), 1e-4));
        }
    }
}
