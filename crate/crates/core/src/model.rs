//! Full system state, intensity specifications and built-in families.
//!
//! Customer indices are 0-based throughout the API: customer `i` has age
//! `ages()[i]`, oldest first.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::hazard::HazardClock;

/// `(n, x0; x1..xn)`: customer count, time since the last arrival and the
/// elapsed service times in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullState {
    x0: f64,
    ages: Vec<f64>,
}

impl FullState {
    /// The empty system that last saw an arrival `x0` time units ago.
    pub fn idle(x0: f64) -> Self {
        Self { x0, ages: Vec::new() }
    }

    /// `(0, 0)`.
    pub fn origin() -> Self {
        Self::idle(0.0)
    }

    /// `(1, 0; 0)`, the regeneration state.
    pub fn regeneration() -> Self {
        Self {
            x0: 0.0,
            ages: vec![0.0],
        }
    }

    pub fn new(x0: f64, ages: Vec<f64>) -> Result<Self> {
        let s = Self { x0, ages };
        s.check()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.ages.len()
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn ages(&self) -> &[f64] {
        &self.ages
    }

    pub fn is_idle(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn is_regeneration(&self) -> bool {
        self.x0 == 0.0 && self.ages == [0.0]
    }

    /// Verifies finiteness, nonnegativity, nonincreasing ages and
    /// `x0 <= ages[n-1]`.
    pub fn check(&self) -> Result<()> {
        if !(self.x0.is_finite() && self.x0 >= 0.0) {
            return Err(Error::InvalidState(format!("x0 = {}", self.x0)));
        }
        if let Some(a) = self.ages.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::InvalidState(format!("age {a}")));
        }
        if self.ages.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidState(format!(
                "ages must be nonincreasing: {:?}",
                self.ages
            )));
        }
        if let Some(&last) = self.ages.last() {
            if self.x0 > last {
                return Err(Error::InvalidState(format!(
                    "x0 = {} exceeds the youngest age {last}",
                    self.x0
                )));
            }
        }
        Ok(())
    }

    /// Ages every coordinate by `u >= 0`.
    pub fn shift(&self, u: f64) -> Result<Self> {
        if !(u >= 0.0 && u.is_finite()) {
            return Err(param("u", format!("shift must be finite and nonnegative, got {u}")));
        }
        Ok(self.shifted(u))
    }

    pub(crate) fn shifted(&self, u: f64) -> Self {
        Self {
            x0: self.x0 + u,
            ages: self.ages.iter().map(|a| a + u).collect(),
        }
    }

    /// Appends a zero-age customer and resets `x0`.
    pub fn apply_arrival(&self) -> Self {
        let mut ages = Vec::with_capacity(self.ages.len() + 1);
        ages.extend_from_slice(&self.ages);
        ages.push(0.0);
        Self { x0: 0.0, ages }
    }

    /// Removes customer `i` (0-based); later customers move down one slot.
    pub fn apply_departure(&self, i: usize) -> Result<Self> {
        if i >= self.ages.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.ages.len(),
            });
        }
        let mut ages = self.ages.clone();
        ages.remove(i);
        Ok(Self { x0: self.x0, ages })
    }
}

impl fmt::Display for FullState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}", self.n(), self.x0)?;
        for (i, a) in self.ages.iter().enumerate() {
            write!(f, "{}{a}", if i == 0 { "; " } else { ", " })?;
        }
        write!(f, ")")
    }
}

/// Certified constants: `h_i >= K/(1+x_i)` and `lambda0 <= lambda <= lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub k: f64,
    pub lambda0: f64,
    pub lambda_max: f64,
}

impl Envelope {
    pub fn new(k: f64, lambda0: f64, lambda_max: f64) -> Result<Self> {
        let e = Self {
            k,
            lambda0,
            lambda_max,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 2.0 && self.k.is_finite()) {
            return Err(param("K", format!("must be finite and > 2, got {}", self.k)));
        }
        if !(self.lambda0 > 0.0) {
            return Err(param("lambda0", format!("must be positive, got {}", self.lambda0)));
        }
        if !(self.lambda_max >= self.lambda0 && self.lambda_max.is_finite()) {
            return Err(param(
                "Lambda",
                format!(
                    "must be finite and >= lambda0 = {}, got {}",
                    self.lambda0, self.lambda_max
                ),
            ));
        }
        Ok(())
    }

    /// Loading of the comparison system, `Lambda / (K - 1)`.
    pub fn rho(&self) -> f64 {
        self.lambda_max / (self.k - 1.0)
    }

    pub fn service_floor(&self, age: f64) -> f64 {
        self.k / (1.0 + age)
    }
}

/// Arrival and service intensities as functions of the full state.
///
/// The clock methods describe the hazards along the deterministic shift
/// from `state`; the defaults evaluate the rate functions on shifted states
/// and integrate numerically. Implementations with closed forms should
/// override them.
pub trait Intensity: Send + Sync {
    fn arrival_rate(&self, state: &FullState) -> f64;

    /// Hazard of customer `i` (0-based).
    fn service_rate(&self, state: &FullState, i: usize) -> f64;

    fn envelope(&self) -> Envelope;

    fn name(&self) -> String {
        "custom".into()
    }

    fn arrival_clock<'a>(&'a self, state: &'a FullState) -> HazardClock<'a> {
        HazardClock::custom(state.x0(), move |u| self.arrival_rate(&state.shifted(u)))
    }

    fn service_clock<'a>(&'a self, state: &'a FullState, i: usize) -> HazardClock<'a> {
        HazardClock::custom(state.ages()[i], move |u| {
            self.service_rate(&state.shifted(u), i)
        })
    }
}

type ArrivalFn = dyn Fn(&FullState) -> f64 + Send + Sync;
type ServiceFn = dyn Fn(&FullState, usize) -> f64 + Send + Sync;

/// A user-supplied intensity pair with its claimed envelope.
#[derive(Clone)]
pub struct IntensitySpec {
    arrival: Arc<ArrivalFn>,
    service: Arc<ServiceFn>,
    envelope: Envelope,
    name: String,
}

impl IntensitySpec {
    pub fn new(
        envelope: Envelope,
        arrival: impl Fn(&FullState) -> f64 + Send + Sync + 'static,
        service: impl Fn(&FullState, usize) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        envelope.validate()?;
        Ok(Self {
            arrival: Arc::new(arrival),
            service: Arc::new(service),
            envelope,
            name: "custom".into(),
        })
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl fmt::Debug for IntensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntensitySpec")
            .field("name", &self.name)
            .field("envelope", &self.envelope)
            .finish_non_exhaustive()
    }
}

impl Intensity for IntensitySpec {
    fn arrival_rate(&self, state: &FullState) -> f64 {
        (self.arrival)(state)
    }

    fn service_rate(&self, state: &FullState, i: usize) -> f64 {
        (self.service)(state, i)
    }

    fn envelope(&self) -> Envelope {
        self.envelope
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Built-in intensity families with closed-form hazards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// `lambda = Lambda`, `h_i = K/(1+x_i)`: the classical M|G|inf system
    /// with service survival `(1+s)^-K`.
    MgInfinity { lambda: f64, k: f64 },
    /// `lambda = lambda_c`, `h_i = mu`, with `mu >= K` so the service
    /// envelope holds.
    MmInfinity { lambda: f64, mu: f64, k: f64 },
    /// `lambda = lambda0 + (Lambda - lambda0)/(1 + n + x0)`,
    /// `h_i = K/(1+x_i) * (1 + a n/(1+n))`.
    StateModulated {
        lambda0: f64,
        lambda_max: f64,
        k: f64,
        a: f64,
    },
}

pub const FAMILY_NAMES: [&str; 3] = ["mg-infinity", "mm-infinity", "state-modulated"];

impl Family {
    pub fn mg_infinity(lambda: f64, k: f64) -> Result<Self> {
        Envelope::new(k, lambda, lambda)?;
        Ok(Family::MgInfinity { lambda, k })
    }

    pub fn mm_infinity(lambda: f64, mu: f64, k: f64) -> Result<Self> {
        Envelope::new(k, lambda, lambda)?;
        if !(mu >= k && mu.is_finite()) {
            return Err(param("mu", format!("must be finite and >= K = {k}, got {mu}")));
        }
        Ok(Family::MmInfinity { lambda, mu, k })
    }

    pub fn state_modulated(lambda0: f64, lambda_max: f64, k: f64, a: f64) -> Result<Self> {
        Envelope::new(k, lambda0, lambda_max)?;
        if !(a >= 0.0 && a.is_finite()) {
            return Err(param("a", format!("must be finite and >= 0, got {a}")));
        }
        Ok(Family::StateModulated {
            lambda0,
            lambda_max,
            k,
            a,
        })
    }

    /// Builds a family from its name and named parameters. Recognized keys:
    /// `Lambda`, `K` (mg-infinity); `lambda`, `mu`, `K` (mm-infinity);
    /// `lambda0`, `Lambda`, `K`, `a` (state-modulated).
    pub fn from_params(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &'static str| {
            params
                .get(key)
                .copied()
                .ok_or_else(|| param(key, format!("missing for family `{name}`")))
        };
        let allowed: &[&str] = match name {
            "mg-infinity" => &["Lambda", "K"],
            "mm-infinity" => &["lambda", "mu", "K"],
            "state-modulated" => &["lambda0", "Lambda", "K", "a"],
            other => {
                return Err(param(
                    "family",
                    format!("unknown `{other}`, expected one of {FAMILY_NAMES:?}"),
                ))
            }
        };
        if let Some(extra) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(param(
                "family",
                format!("unexpected parameter `{extra}` for `{name}`, allowed {allowed:?}"),
            ));
        }
        match name {
            "mg-infinity" => Family::mg_infinity(get("Lambda")?, get("K")?),
            "mm-infinity" => Family::mm_infinity(get("lambda")?, get("mu")?, get("K")?),
            _ => Family::state_modulated(get("lambda0")?, get("Lambda")?, get("K")?, get("a")?),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Family::MgInfinity { .. } => FAMILY_NAMES[0],
            Family::MmInfinity { .. } => FAMILY_NAMES[1],
            Family::StateModulated { .. } => FAMILY_NAMES[2],
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            Family::MgInfinity { lambda, k } => vec![("Lambda", lambda), ("K", k)],
            Family::MmInfinity { lambda, mu, k } => vec![("lambda", lambda), ("mu", mu), ("K", k)],
            Family::StateModulated {
                lambda0,
                lambda_max,
                k,
                a,
            } => vec![("lambda0", lambda0), ("Lambda", lambda_max), ("K", k), ("a", a)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    fn service_scale(&self, n: usize) -> f64 {
        match *self {
            Family::StateModulated { a, .. } => 1.0 + a * n as f64 / (1.0 + n as f64),
            _ => 1.0,
        }
    }
}

impl Intensity for Family {
    fn arrival_rate(&self, state: &FullState) -> f64 {
        match *self {
            Family::MgInfinity { lambda, .. } | Family::MmInfinity { lambda, .. } => lambda,
            Family::StateModulated {
                lambda0,
                lambda_max,
                ..
            } => lambda0 + (lambda_max - lambda0) / (1.0 + state.n() as f64 + state.x0()),
        }
    }

    fn service_rate(&self, state: &FullState, i: usize) -> f64 {
        match *self {
            Family::MmInfinity { mu, .. } => mu,
            Family::MgInfinity { k, .. } | Family::StateModulated { k, .. } => {
                k * self.service_scale(state.n()) / (1.0 + state.ages()[i])
            }
        }
    }

    fn envelope(&self) -> Envelope {
        match *self {
            Family::MgInfinity { lambda, k } => Envelope {
                k,
                lambda0: lambda,
                lambda_max: lambda,
            },
            Family::MmInfinity { lambda, k, .. } => Envelope {
                k,
                lambda0: lambda,
                lambda_max: lambda,
            },
            Family::StateModulated {
                lambda0,
                lambda_max,
                k,
                ..
            } => Envelope {
                k,
                lambda0,
                lambda_max,
            },
        }
    }

    fn name(&self) -> String {
        self.family_name().into()
    }

    fn arrival_clock<'a>(&'a self, state: &'a FullState) -> HazardClock<'a> {
        match *self {
            Family::MgInfinity { lambda, .. } | Family::MmInfinity { lambda, .. } => {
                HazardClock::constant(lambda)
            }
            Family::StateModulated {
                lambda0,
                lambda_max,
                ..
            } => HazardClock::hyperbolic(
                lambda0,
                lambda_max - lambda0,
                1.0 + state.n() as f64,
                state.x0(),
            ),
        }
    }

    fn service_clock<'a>(&'a self, state: &'a FullState, i: usize) -> HazardClock<'a> {
        match *self {
            Family::MmInfinity { mu, .. } => HazardClock::constant(mu),
            Family::MgInfinity { k, .. } | Family::StateModulated { k, .. } => {
                HazardClock::pareto(k * self.service_scale(state.n()), state.ages()[i])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    ArrivalBelowFloor,
    ArrivalAboveCeiling,
    ServiceBelowEnvelope,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub state: FullState,
    pub kind: ViolationKind,
    /// Customer index for service violations.
    pub index: Option<usize>,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub trials: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const ENVELOPE_RTOL: f64 = 1e-12;

/// Envelope violations of `spec` at a single state.
pub fn check_envelope<I: Intensity + ?Sized>(spec: &I, state: &FullState) -> Vec<Violation> {
    let env = spec.envelope();
    let mut out = Vec::new();
    let mut push = |kind, index, value, bound| {
        out.push(Violation {
            state: state.clone(),
            kind,
            index,
            value,
            bound,
        })
    };
    let lam = spec.arrival_rate(state);
    if !lam.is_finite() {
        push(ViolationKind::NonFinite, None, lam, f64::NAN);
    } else if lam < env.lambda0 * (1.0 - ENVELOPE_RTOL) {
        push(ViolationKind::ArrivalBelowFloor, None, lam, env.lambda0);
    } else if lam > env.lambda_max * (1.0 + ENVELOPE_RTOL) {
        push(ViolationKind::ArrivalAboveCeiling, None, lam, env.lambda_max);
    }
    for (i, &age) in state.ages().iter().enumerate() {
        let h = spec.service_rate(state, i);
        let floor = env.service_floor(age);
        if !h.is_finite() {
            push(ViolationKind::NonFinite, Some(i), h, floor);
        } else if h < floor * (1.0 - ENVELOPE_RTOL) {
            push(ViolationKind::ServiceBelowEnvelope, Some(i), h, floor);
        }
    }
    out
}

/// Random valid state: up to `max_n` customers with heavy-tailed ages.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, max_n: usize) -> FullState {
    let n = rng.random_range(0..=max_n);
    // Inverse-CDF draws from survival (1+s)^-1.5.
    let mut heavy = || rng.random::<f64>().powf(-1.0 / 1.5) - 1.0;
    let mut ages: Vec<f64> = (0..n).map(|_| heavy()).collect();
    ages.sort_by(|a, b| b.total_cmp(a));
    let x0 = match ages.last() {
        Some(&youngest) => {
            let h = heavy();
            youngest * h / (1.0 + h)
        }
        None => heavy(),
    };
    FullState { x0, ages }
}

/// Checks the envelope on `trials` states drawn by `sampler`.
pub fn validate_intensity_spec<I, R, S>(
    spec: &I,
    mut sampler: S,
    trials: usize,
    rng: &mut R,
) -> Result<ValidationReport>
where
    I: Intensity + ?Sized,
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> FullState,
{
    if trials == 0 {
        return Err(param("trials", "must be at least 1"));
    }
    spec.envelope().validate()?;
    let mut violations = Vec::new();
    for _ in 0..trials {
        let state = sampler(rng);
        state.check()?;
        violations.extend(check_envelope(spec, &state));
    }
    Ok(ValidationReport { trials, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;
    use proptest::prelude::*;

    fn st(x0: f64, ages: &[f64]) -> FullState {
        FullState::new(x0, ages.to_vec()).unwrap()
    }

    #[test]
    fn shift_examples() {
        assert_eq!(FullState::origin().shift(1.5).unwrap(), FullState::idle(1.5));
        let s = st(0.1, &[3.0, 0.5]).shift(0.4).unwrap();
        assert!((s.x0() - 0.5).abs() < 1e-15);
        assert!((s.ages()[0] - 3.4).abs() < 1e-15 && (s.ages()[1] - 0.9).abs() < 1e-15);
        let s = st(0.1, &[3.0, 0.5]);
        assert_eq!(s.shift(0.0).unwrap(), s);
        assert!(s.shift(-1.0).is_err());
    }

    #[test]
    fn arrival_examples() {
        let s = FullState::idle(2.3).apply_arrival();
        assert!(s.is_regeneration());
        assert_eq!(st(0.2, &[0.9]).apply_arrival(), st(0.0, &[0.9, 0.0]));
        let twice = FullState::origin().apply_arrival().apply_arrival();
        assert_eq!(twice.n(), 2);
        assert_ne!(twice, FullState::regeneration());
    }

    #[test]
    fn departure_examples() {
        // Second customer, 0-based index 1.
        let s = st(0.1, &[5.0, 3.0, 1.0]).apply_departure(1).unwrap();
        assert_eq!(s, st(0.1, &[5.0, 1.0]));
        assert_eq!(st(0.4, &[2.2]).apply_departure(0).unwrap(), FullState::idle(0.4));
        assert!(matches!(
            st(0.1, &[5.0, 3.0, 1.0]).apply_departure(4),
            Err(Error::IndexOutOfRange { index: 4, n: 3 })
        ));
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(FullState::new(0.0, vec![1.0, 2.0]).is_err());
        assert!(FullState::new(2.0, vec![1.0]).is_err());
        assert!(FullState::new(-1.0, vec![]).is_err());
        assert!(FullState::new(f64::NAN, vec![]).is_err());
    }

    #[test]
    fn arrival_then_departure_of_last_restores_ages() {
        let s = st(0.3, &[4.0, 1.0]);
        let back = s.apply_arrival().apply_departure(2).unwrap();
        assert_eq!(back.ages(), s.ages());
        assert_eq!(back.x0(), 0.0);
    }

    #[test]
    fn mg_infinity_matches_closed_forms() {
        let f = Family::mg_infinity(1.5, 3.0).unwrap();
        let s = st(0.2, &[2.0, 0.5]);
        assert_eq!(f.arrival_rate(&s), 1.5);
        for (i, &x) in s.ages().iter().enumerate() {
            assert!((f.service_rate(&s, i) - 3.0 / (1.0 + x)).abs() < 1e-15);
            let c = f.service_clock(&s, i);
            for u in [0.0, 0.5, 3.0] {
                assert!((c.rate(u) - 3.0 / (1.0 + x + u)).abs() < 1e-15);
                let h = 3.0 * ((1.0 + x + u) / (1.0 + x)).ln();
                assert!((c.cumulative(u).unwrap() - h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn builtin_clocks_agree_with_shifted_rates() {
        let f = Family::state_modulated(0.5, 1.0, 3.0, 1.0).unwrap();
        let s = st(0.2, &[2.0, 0.5]);
        let a = f.arrival_clock(&s);
        for u in [0.0, 0.7, 4.0] {
            let shifted = s.shift(u).unwrap();
            assert!((a.rate(u) - f.arrival_rate(&shifted)).abs() < 1e-14);
            for i in 0..2 {
                let c = f.service_clock(&s, i);
                assert!((c.rate(u) - f.service_rate(&shifted, i)).abs() < 1e-14);
            }
        }
        // The closed form agrees with the generic numeric clock.
        let numeric = HazardClock::custom(s.x0(), |u| f.arrival_rate(&s.shifted(u)));
        assert!((a.cumulative(3.0).unwrap() - numeric.cumulative(3.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn family_parameter_checks() {
        assert!(Family::mm_infinity(1.0, 2.0, 3.0).is_err());
        assert!(Family::mg_infinity(1.0, 2.0).is_err());
        assert!(Family::state_modulated(1.0, 0.5, 3.0, 0.0).is_err());
        assert!(Family::state_modulated(0.5, 1.0, 3.0, -1.0).is_err());
        let p: BTreeMap<String, f64> = [("Lambda".to_string(), 1.0), ("K".to_string(), 3.0)].into();
        assert_eq!(Family::from_params("mg-infinity", &p).unwrap(), Family::mg_infinity(1.0, 3.0).unwrap());
        assert!(Family::from_params("mm-infinity", &p).is_err());
        assert!(Family::from_params("nope", &p).is_err());
    }

    #[test]
    fn builtins_validate() {
        let mut rng = Streams::new(1).stream("validate", 0);
        for f in [
            Family::mg_infinity(1.0, 3.0).unwrap(),
            Family::mm_infinity(1.0, 3.0, 3.0).unwrap(),
            Family::state_modulated(0.5, 1.0, 3.0, 1.0).unwrap(),
        ] {
            let report = validate_intensity_spec(&f, |r| random_state(r, 20), 10_000, &mut rng).unwrap();
            assert!(report.passed(), "{}: {:?}", f.name(), report.violations.first());
        }
    }

    #[test]
    fn bad_specs_are_reported() {
        let env = Envelope::new(3.0, 0.5, 1.0).unwrap();
        let mut rng = Streams::new(1).stream("validate", 1);
        let too_fast = IntensitySpec::new(env, |_| 2.0, |s, i| 3.0 / (1.0 + s.ages()[i])).unwrap();
        let r = validate_intensity_spec(&too_fast, |r| random_state(r, 5), 1, &mut rng).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::ArrivalAboveCeiling);

        let slow = IntensitySpec::new(env, |_| 0.7, |s, i| 1.5 / (1.0 + s.ages()[i])).unwrap();
        let r = validate_intensity_spec(&slow, |r| random_state(r, 5), 100, &mut rng).unwrap();
        assert!(r.violations.iter().any(|v| v.kind == ViolationKind::ServiceBelowEnvelope));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Shift(f64),
        Arrive,
        Depart(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0.0..10.0f64).prop_map(Op::Shift),
            Just(Op::Arrive),
            (0usize..8).prop_map(Op::Depart),
        ]
    }

    proptest! {
        #[test]
        fn event_sequences_preserve_invariants(ops in prop::collection::vec(op(), 0..60)) {
            let mut s = FullState::origin();
            for o in ops {
                s = match o {
                    Op::Shift(u) => s.shift(u).unwrap(),
                    Op::Arrive => s.apply_arrival(),
                    Op::Depart(i) if s.n() > 0 => s.apply_departure(i % s.n()).unwrap(),
                    Op::Depart(_) => s,
                };
                prop_assert!(s.check().is_ok(), "{s}");
            }
        }

        #[test]
        fn random_states_are_valid(seed in any::<u64>()) {
            let mut rng = Streams::new(seed).stream("state", 0);
            prop_assert!(random_state(&mut rng, 12).check().is_ok());
        }
    }
}
