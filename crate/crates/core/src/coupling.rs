//! Domination pairing with the comparison system and the successful
//! coupling of two copies of the process.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::hazard::{sample_first_event, DensityTable, FirstEvent, MaximalCoupling, TableOptions};
use crate::model::{check_envelope, FullState, Intensity};
use crate::simulator::{clocks_of, EventKind, Stepper};
use crate::stats::SampleStats;

/// Departures of matched customers closer than this (relative to `1 + t`)
/// are treated as simultaneous.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationTrace {
    pub horizon: f64,
    pub times: Vec<f64>,
    /// `(n_t, n°_t)` after each recorded event, starting with `(0, 0)` at 0.
    pub n_pairs: Vec<(usize, usize)>,
    pub shared_arrivals: u64,
    pub thinned_arrivals: u64,
    /// Recorded times with `n_t > n°_t`.
    pub violations: u64,
}

impl DominationTrace {
    /// `(n_t, n°_t)` at time `t`.
    pub fn counts_at(&self, t: f64) -> (usize, usize) {
        let i = self.times.partition_point(|&s| s <= t);
        self.n_pairs[i.saturating_sub(1)]
    }

    pub fn max_counts(&self) -> (usize, usize) {
        self.n_pairs
            .iter()
            .fold((0, 0), |(a, b), &(n, m)| (a.max(n), b.max(m)))
    }

    /// Complete busy periods of the studied and the comparison process.
    pub fn busy_periods(&self) -> (Vec<f64>, Vec<f64>) {
        let pick = |which: fn(&(usize, usize)) -> usize| {
            let mut out = Vec::new();
            let mut start = None;
            for (t, p) in self.times.iter().zip(&self.n_pairs) {
                match (start, which(p)) {
                    (None, n) if n > 0 => start = Some(*t),
                    (Some(s), 0) => {
                        out.push(t - s);
                        start = None;
                    }
                    _ => {}
                }
            }
            out
        };
        (pick(|p| p.0), pick(|p| p.1))
    }
}

struct Tagged {
    id: u64,
    budget: f64,
    used: f64,
}

/// Runs the studied process X and its comparison system X° on one
/// probability space. A single Poisson(Lambda) stream feeds X°; each point is
/// admitted to X with probability `lambda(X)/Lambda`. A common customer
/// carries one unit-exponential hazard budget and leaves a system once its
/// accumulated hazard there reaches the budget, so the larger hazard in X
/// makes it leave X first.
pub fn dominate<I: Intensity + ?Sized, R: Rng + ?Sized>(
    spec: &I,
    horizon: f64,
    rng: &mut R,
) -> Result<DominationTrace> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(param("horizon", format!("must be finite and nonnegative, got {horizon}")));
    }
    let env = spec.envelope();
    env.validate()?;
    let inter = Exp::new(env.lambda_max).map_err(|e| param("Lambda", e.to_string()))?;

    let mut t = 0.0;
    let mut x = FullState::origin();
    let mut tagged: Vec<Tagged> = Vec::new();
    let mut shadow: Vec<(u64, f64)> = Vec::new();
    let mut next_id = 0u64;
    let mut next_arrival = inter.sample(rng);
    let mut trace = DominationTrace {
        horizon,
        times: vec![0.0],
        n_pairs: vec![(0, 0)],
        shared_arrivals: 0,
        thinned_arrivals: 0,
        violations: 0,
    };

    loop {
        let tol = TIE_TOLERANCE * (1.0 + t);
        let shadow_next = shadow
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, &(id, d))| (i, id, d));
        let limit = next_arrival
            .min(horizon)
            .min(shadow_next.map_or(f64::INFINITY, |s| s.2));
        // Earliest departure in X, looking slightly past `limit` to catch ties.
        let mut x_next: Option<(usize, f64)> = None;
        for (i, c) in tagged.iter().enumerate() {
            let cap = limit - t + tol;
            let clock = spec.service_clock(&x, i);
            if let Some(d) = clock.invert((c.budget - c.used).max(0.0), Some(cap))? {
                if x_next.is_none_or(|(_, b)| d < b) {
                    x_next = Some((i, d));
                }
            }
        }

        enum Next {
            XDeparture(usize),
            ShadowDeparture(usize),
            Arrival,
            End,
        }
        let x_time = x_next.map(|(_, d)| t + d);
        let next = match (x_next, shadow_next) {
            (Some((i, _)), Some((_, id, d))) if x_time.unwrap() <= d + tol && tagged[i].id == id => {
                Next::XDeparture(i)
            }
            (Some((i, d)), _) if t + d <= limit => Next::XDeparture(i),
            (_, Some((j, _, d))) if d <= next_arrival.min(horizon) => Next::ShadowDeparture(j),
            _ if next_arrival <= horizon => Next::Arrival,
            _ => Next::End,
        };
        let event_time = match next {
            Next::XDeparture(_) => x_time.unwrap(),
            Next::ShadowDeparture(j) => shadow[j].1,
            Next::Arrival => next_arrival,
            Next::End => horizon,
        }
        .max(t);
        let delay = event_time - t;
        for (i, c) in tagged.iter_mut().enumerate() {
            c.used += spec.service_clock(&x, i).cumulative(delay)?;
        }
        x = x.shifted(delay);
        t = event_time;

        match next {
            Next::End => break,
            Next::XDeparture(i) => {
                let c = tagged.remove(i);
                x = x.apply_departure(i)?;
                if let Some(j) = shadow.iter().position(|s| s.0 == c.id) {
                    if (shadow[j].1 - t).abs() <= tol {
                        shadow.remove(j);
                    }
                }
            }
            Next::ShadowDeparture(j) => {
                shadow.remove(j);
            }
            Next::Arrival => {
                let budget: f64 = Exp1.sample(rng);
                let u: f64 = rng.random();
                let admit = u * env.lambda_max < spec.arrival_rate(&x);
                let id = next_id;
                next_id += 1;
                shadow.push((id, t + (budget / env.k).exp_m1()));
                if admit {
                    x = x.apply_arrival();
                    tagged.push(Tagged { id, budget, used: 0.0 });
                    trace.shared_arrivals += 1;
                } else {
                    trace.thinned_arrivals += 1;
                }
                next_arrival = t + inter.sample(rng);
            }
        }
        let broken = check_envelope(spec, &x);
        if let Some(v) = broken.first() {
            return Err(Error::DominationBroken {
                state: x.clone(),
                reason: format!("{:?}: value {} vs bound {}", v.kind, v.value, v.bound),
            });
        }
        if x.n() > shadow.len() {
            trace.violations += 1;
        }
        trace.times.push(t);
        trace.n_pairs.push((x.n(), shadow.len()));
    }
    Ok(trace)
}

/// Which process moved at a pair event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mover {
    Y,
    YPrime,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairEvent {
    pub time: f64,
    pub mover: Mover,
    pub kind: EventKind,
    pub index: Option<usize>,
    pub y: FullState,
    pub y_prime: FullState,
}

/// A both-idle coupling attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Attempt {
    pub time: f64,
    pub kappa: f64,
    pub coupled: bool,
    /// Neither side carried a committed arrival from an earlier attempt.
    pub fresh: bool,
}

/// End of a busy period of Y'.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaMark {
    pub time: f64,
    pub y_idle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledTrace {
    pub horizon: f64,
    /// `None` when the pair had not merged by the horizon.
    pub tau: Option<f64>,
    pub y_initial: FullState,
    pub y_prime_initial: FullState,
    pub attempts: Vec<Attempt>,
    pub pair_events: Vec<PairEvent>,
    pub theta_marks: Vec<ThetaMark>,
}

impl CoupledTrace {
    pub fn censored(&self) -> bool {
        self.tau.is_none()
    }

    fn state_at(&self, t: f64, prime: bool) -> Result<FullState> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(param("t", format!("{t} outside [0, {}]", self.horizon)));
        }
        let idx = self.pair_events.partition_point(|e| e.time <= t);
        let (base_t, base) = match (idx, prime) {
            (0, false) => (0.0, &self.y_initial),
            (0, true) => (0.0, &self.y_prime_initial),
            (i, false) => (self.pair_events[i - 1].time, &self.pair_events[i - 1].y),
            (i, true) => (self.pair_events[i - 1].time, &self.pair_events[i - 1].y_prime),
        };
        Ok(base.shifted(t - base_t))
    }

    pub fn y_at(&self, t: f64) -> Result<FullState> {
        self.state_at(t, false)
    }

    /// Requires the path after `tau` to have been recorded when `t > tau`.
    pub fn y_prime_at(&self, t: f64) -> Result<FullState> {
        self.state_at(t, true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupleOptions {
    pub horizon: f64,
    /// Keep simulating the merged path after `tau` up to the horizon.
    pub follow_after_tau: bool,
    pub table: TableOptions,
}

impl CoupleOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            follow_after_tau: true,
            table: TableOptions::default(),
        }
    }
}

/// An arrival time fixed by a failed attempt, with the law it was drawn
/// from (measured from `since`).
struct Commit {
    at: f64,
    since: f64,
    law: DensityTable,
}

struct Side {
    state: FullState,
    commit: Option<Commit>,
}

impl Side {
    fn arrival_law<I: Intensity + ?Sized>(&self, spec: &I, t: f64, opts: &TableOptions) -> Result<DensityTable> {
        match &self.commit {
            Some(c) => Ok(c.law.condition_exceeding(t - c.since)?.normalized()),
            None => DensityTable::from_clock(&spec.arrival_clock(&self.state), opts),
        }
    }

    /// Next event of this side within `cap` from `t`.
    fn draw<I: Intensity + ?Sized, R: Rng + ?Sized>(
        &self,
        spec: &I,
        t: f64,
        cap: f64,
        rng: &mut R,
    ) -> Result<Option<FirstEvent>> {
        match &self.commit {
            None => {
                let clocks = clocks_of(spec, &self.state);
                sample_first_event(&clocks, Some(cap), rng)
            }
            Some(c) => {
                let arrival = c.at - t;
                let limit = cap.min(arrival);
                let service = if self.state.is_idle() {
                    None
                } else {
                    let clocks: Vec<_> = (0..self.state.n()).map(|i| spec.service_clock(&self.state, i)).collect();
                    sample_first_event(&clocks, Some(limit), rng)?.map(|e| FirstEvent {
                        delay: e.delay,
                        winner: e.winner + 1,
                    })
                };
                Ok(match service {
                    Some(e) if e.delay < arrival => Some(e),
                    _ if arrival <= cap => Some(FirstEvent {
                        delay: arrival.max(0.0),
                        winner: 0,
                    }),
                    _ => None,
                })
            }
        }
    }

    fn apply(&mut self, ev: &FirstEvent) -> Result<(EventKind, Option<usize>)> {
        Ok(if ev.winner == 0 {
            self.state = self.state.apply_arrival();
            self.commit = None;
            (EventKind::Arrival, None)
        } else {
            let i = ev.winner - 1;
            self.state = self.state.apply_departure(i)?;
            (EventKind::Departure, Some(i))
        })
    }
}

/// Successful coupling of Y (from `(0,0)`) and Y' (from `y_prime_initial`).
///
/// While either copy is busy, both evolve independently and every clock is
/// redrawn at every event. When both are idle, their residual arrival laws
/// are tabulated and maximally coupled; on success both jump to `(1,0;0)`
/// together at `tau`. A failed attempt fixes each copy's arrival time from
/// its residual law; later attempts condition that law on the elapsed
/// time, which keeps each marginal exact. After `tau` one path drives both.
pub fn couple<I: Intensity + ?Sized, R: Rng + ?Sized>(
    spec: &I,
    y_prime_initial: &FullState,
    opts: &CoupleOptions,
    rng: &mut R,
) -> Result<CoupledTrace> {
    let horizon = opts.horizon;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(param("horizon", format!("must be positive and finite, got {horizon}")));
    }
    y_prime_initial.check()?;
    let mut y = Side {
        state: FullState::origin(),
        commit: None,
    };
    let mut yp = Side {
        state: y_prime_initial.clone(),
        commit: None,
    };
    let mut trace = CoupledTrace {
        horizon,
        tau: None,
        y_initial: y.state.clone(),
        y_prime_initial: yp.state.clone(),
        attempts: Vec::new(),
        pair_events: Vec::new(),
        theta_marks: Vec::new(),
    };
    let mut t = 0.0;
    let mut attempt_due = y.state.is_idle() && yp.state.is_idle();

    loop {
        if attempt_due {
            attempt_due = false;
            let fresh = y.commit.is_none() && yp.commit.is_none();
            let f = y
                .arrival_law(spec, t, &opts.table)
                .map_err(|e| e.context(format!("step B law of Y at t={t}")))?;
            let g = yp
                .arrival_law(spec, t, &opts.table)
                .map_err(|e| e.context(format!("step B law of Y' at t={t}")))?;
            let mc = MaximalCoupling::new(&f, &g)?;
            let d = mc.draw(rng);
            trace.attempts.push(Attempt {
                time: t,
                kappa: mc.kappa(),
                coupled: d.coupled,
                fresh,
            });
            if d.coupled {
                let at = t + d.first;
                if at > horizon {
                    return Ok(trace);
                }
                y.state = y.state.shifted(at - t).apply_arrival();
                yp.state = yp.state.shifted(at - t).apply_arrival();
                t = at;
                trace.tau = Some(t);
                trace.pair_events.push(PairEvent {
                    time: t,
                    mover: Mover::Both,
                    kind: EventKind::Arrival,
                    index: None,
                    y: y.state.clone(),
                    y_prime: yp.state.clone(),
                });
                break;
            }
            let residual = |j: usize, law: &DensityTable| {
                mc.residual(j).map(|r| r.normalized()).unwrap_or_else(|| law.clone())
            };
            y.commit = Some(Commit {
                at: t + d.first,
                since: t,
                law: residual(0, &f),
            });
            yp.commit = Some(Commit {
                at: t + d.second,
                since: t,
                law: residual(1, &g),
            });
        }

        let cap = horizon - t;
        let ey = y.draw(spec, t, cap, rng).map_err(|e| e.context(format!("step A for Y at t={t}")))?;
        let ep = yp
            .draw(spec, t, cap, rng)
            .map_err(|e| e.context(format!("step A for Y' at t={t}")))?;
        let (mover, ev) = match (ey, ep) {
            (Some(a), Some(b)) if b.delay < a.delay => (Mover::YPrime, b),
            (Some(a), _) => (Mover::Y, a),
            (None, Some(b)) => (Mover::YPrime, b),
            (None, None) => return Ok(trace),
        };
        y.state = y.state.shifted(ev.delay);
        yp.state = yp.state.shifted(ev.delay);
        t += ev.delay;
        let (kind, index) = match mover {
            Mover::Y => y.apply(&ev)?,
            _ => yp.apply(&ev)?,
        };
        trace.pair_events.push(PairEvent {
            time: t,
            mover,
            kind,
            index,
            y: y.state.clone(),
            y_prime: yp.state.clone(),
        });
        if kind == EventKind::Departure {
            if mover == Mover::YPrime && yp.state.is_idle() {
                trace.theta_marks.push(ThetaMark {
                    time: t,
                    y_idle: y.state.is_idle(),
                });
            }
            attempt_due = y.state.is_idle() && yp.state.is_idle();
        }
    }

    if opts.follow_after_tau {
        let mut stepper = Stepper::new(spec, y.state.clone(), t)?;
        while let Some(e) = stepper
            .step(horizon, rng)
            .map_err(|e| e.context("step C"))?
        {
            if e.kind == EventKind::Departure && e.state_after.is_idle() {
                trace.theta_marks.push(ThetaMark {
                    time: e.time,
                    y_idle: true,
                });
            }
            trace.pair_events.push(PairEvent {
                time: e.time,
                mover: Mover::Both,
                kind: e.kind,
                index: e.index,
                y: e.state_after.clone(),
                y_prime: e.state_after,
            });
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub used: usize,
    /// Traces still apart at the horizon; the estimate is then a lower bound.
    pub censored: usize,
}

/// Sample mean of `tau^r` over traces that merged.
pub fn tau_moment_estimate(traces: &[CoupledTrace], r: f64) -> Result<TauEstimate> {
    let taus: Vec<f64> = traces.iter().filter_map(|c| c.tau).collect();
    if taus.is_empty() {
        return Err(Error::NoData(format!(
            "all {} coupling traces are censored",
            traces.len()
        )));
    }
    let s = SampleStats::new(taus.iter().map(|t| t.powf(r)));
    Ok(TauEstimate {
        estimate: s.mean,
        std_error: s.std_error(),
        used: taus.len(),
        censored: traces.len() - taus.len(),
    })
}

/// CSV with header `run,tau,censored,attempts`.
pub fn write_coupling_csv<W: Write>(traces: &[CoupledTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "tau", "censored", "attempts"])?;
    for (i, c) in traces.iter().enumerate() {
        w.write_record([
            i.to_string(),
            c.tau.map(|t| t.to_string()).unwrap_or_default(),
            c.censored().to_string(),
            c.attempts.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with header `run,max_n,max_n_circ,violations`.
pub fn write_domination_csv<W: Write>(traces: &[DominationTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "max_n", "max_n_circ", "violations"])?;
    for (i, d) in traces.iter().enumerate() {
        let (a, b) = d.max_counts();
        w.write_record([i.to_string(), a.to_string(), b.to_string(), d.violations.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;
    use crate::rng::Streams;

    #[test]
    fn mg_infinity_dominates_itself_exactly() {
        let f = Family::mg_infinity(1.0, 3.0).unwrap();
        for i in 0..20 {
            let mut rng = Streams::new(2).stream("dom", i);
            let d = dominate(&f, 100.0, &mut rng).unwrap();
            assert_eq!(d.thinned_arrivals, 0);
            assert!(d.n_pairs.iter().all(|(a, b)| a == b), "run {i}");
        }
    }

    #[test]
    fn state_modulated_is_dominated() {
        let f = Family::state_modulated(0.5, 1.0, 3.0, 1.0).unwrap();
        for i in 0..20 {
            let mut rng = Streams::new(2).stream("dom", i);
            let d = dominate(&f, 100.0, &mut rng).unwrap();
            assert_eq!(d.violations, 0);
            assert!(d.thinned_arrivals > 0);
        }
    }

    #[test]
    fn broken_envelope_is_detected() {
        use crate::model::{Envelope, IntensitySpec};
        let env = Envelope::new(3.0, 0.5, 1.0).unwrap();
        let weak = IntensitySpec::new(env, |_| 1.0, |s, i| 1.0 / (1.0 + s.ages()[i])).unwrap();
        let mut rng = Streams::new(2).stream("dom", 0);
        assert!(matches!(dominate(&weak, 50.0, &mut rng), Err(Error::DominationBroken { .. })));
    }

    #[test]
    fn merged_paths_stay_identical() {
        let f = Family::state_modulated(0.5, 1.0, 3.0, 1.0).unwrap();
        let start = FullState::new(0.0, vec![2.0, 0.5]).unwrap();
        let mut merged = 0;
        for i in 0..20 {
            let mut rng = Streams::new(4).stream("couple", i);
            let c = couple(&f, &start, &CoupleOptions::new(200.0), &mut rng).unwrap();
            if let Some(tau) = c.tau {
                merged += 1;
                let first = c.pair_events.iter().position(|e| e.time >= tau).unwrap();
                assert!(c.pair_events[first].y.is_regeneration());
                for e in &c.pair_events[first..] {
                    assert_eq!(e.y, e.y_prime);
                }
            }
            assert!(c.attempts.iter().all(|a| a.kappa > 0.0 && a.kappa <= 1.0));
        }
        assert!(merged >= 18);
    }

    #[test]
    fn idle_start_attempts_immediately() {
        let f = Family::mg_infinity(1.0, 3.0).unwrap();
        let mut rng = Streams::new(4).stream("couple", 0);
        let c = couple(&f, &FullState::origin(), &CoupleOptions::new(50.0), &mut rng).unwrap();
        let a = c.attempts[0];
        assert_eq!(a.time, 0.0);
        assert!(a.fresh);
        // Identical laws couple with certainty.
        assert!(a.coupled && (a.kappa - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tau_estimate_examples() {
        let mk = |tau: Option<f64>| CoupledTrace {
            horizon: 10.0,
            tau,
            y_initial: FullState::origin(),
            y_prime_initial: FullState::origin(),
            attempts: vec![],
            pair_events: vec![],
            theta_marks: vec![],
        };
        let e = tau_moment_estimate(&[mk(Some(2.0)), mk(Some(2.0))], 2.0).unwrap();
        assert_eq!((e.estimate, e.std_error), (4.0, 0.0));
        let e = tau_moment_estimate(&[mk(Some(3.0)), mk(None)], 0.0).unwrap();
        assert_eq!((e.estimate, e.censored), (1.0, 1));
        assert!(matches!(tau_moment_estimate(&[mk(None)], 1.0), Err(Error::NoData(_))));
    }
}
