//! Event-driven simulation of the full-state process.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::hazard::{sample_first_event, HazardClock};
use crate::model::{FullState, Intensity};
use crate::rng::Streams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Arrival,
    Departure,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Departure => "departure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Departing customer (0-based, pre-departure numbering).
    pub index: Option<usize>,
    pub state_after: FullState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub initial: FullState,
    pub start: f64,
    pub horizon: f64,
    pub events: Vec<Event>,
    /// Identifier of the random stream that produced the path.
    pub seed: String,
}

impl Trajectory {
    /// State at time `t` in `[start, horizon]`.
    pub fn state_at(&self, t: f64) -> Result<FullState> {
        if !(t >= self.start && t <= self.horizon) {
            return Err(param("t", format!("{t} outside [{}, {}]", self.start, self.horizon)));
        }
        let idx = self.events.partition_point(|e| e.time <= t);
        let (base_time, base) = match idx {
            0 => (self.start, &self.initial),
            i => (self.events[i - 1].time, &self.events[i - 1].state_after),
        };
        Ok(base.shifted(t - base_time))
    }

    pub fn final_state(&self) -> FullState {
        self.state_at(self.horizon).expect("horizon is inside the path")
    }

    /// Time spent with `n` customers over `[start, horizon]`.
    pub fn occupancy_time(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        let mut t = self.start;
        let mut n = self.initial.n();
        for e in &self.events {
            *out.entry(n).or_insert(0.0) += e.time - t;
            t = e.time;
            n = e.state_after.n();
        }
        *out.entry(n).or_insert(0.0) += self.horizon - t;
        out
    }

    /// CSV with header `time,kind,index,n,x0`; `index` is empty for arrivals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "kind", "index", "n", "x0"])?;
        for e in &self.events {
            w.write_record([
                e.time.to_string(),
                e.kind.as_str().to_string(),
                e.index.map(|i| i.to_string()).unwrap_or_default(),
                e.state_after.n().to_string(),
                e.state_after.x0().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One-event-at-a-time driver. Every step redraws all clocks from the
/// current state.
pub struct Stepper<'s, I: Intensity + ?Sized> {
    spec: &'s I,
    state: FullState,
    time: f64,
}

impl<'s, I: Intensity + ?Sized> Stepper<'s, I> {
    pub fn new(spec: &'s I, initial: FullState, start: f64) -> Result<Self> {
        initial.check()?;
        Ok(Self {
            spec,
            state: initial,
            time: start,
        })
    }

    pub fn state(&self) -> &FullState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances to the next event if it happens no later than `until`;
    /// otherwise ages the state to `until` and returns `None`.
    pub fn step<R: Rng + ?Sized>(&mut self, until: f64, rng: &mut R) -> Result<Option<Event>> {
        let cap = until - self.time;
        if !(cap >= 0.0) {
            return Err(param("until", format!("{until} is before current time {}", self.time)));
        }
        let first = {
            let clocks = clocks_of(self.spec, &self.state);
            sample_first_event(&clocks, Some(cap), rng)
                .map_err(|e| e.context(format!("event draw at t={} in state {}", self.time, self.state)))?
        };
        let Some(first) = first else {
            self.state = self.state.shifted(cap);
            self.time = until;
            return Ok(None);
        };
        let aged = self.state.shifted(first.delay);
        let (kind, index, next) = if first.winner == 0 {
            (EventKind::Arrival, None, aged.apply_arrival())
        } else {
            let i = first.winner - 1;
            (EventKind::Departure, Some(i), aged.apply_departure(i)?)
        };
        self.time += first.delay;
        self.state = next;
        Ok(Some(Event {
            time: self.time,
            kind,
            index,
            state_after: self.state.clone(),
        }))
    }

    /// Runs until `t`, discarding events.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<()> {
        while self.step(t, rng)?.is_some() {}
        Ok(())
    }
}

/// Arrival clock first, then one service clock per customer.
pub fn clocks_of<'a, I: Intensity + ?Sized>(spec: &'a I, state: &'a FullState) -> Vec<HazardClock<'a>> {
    let mut clocks = Vec::with_capacity(state.n() + 1);
    clocks.push(spec.arrival_clock(state));
    clocks.extend((0..state.n()).map(|i| spec.service_clock(state, i)));
    clocks
}

pub fn simulate<I: Intensity + ?Sized, R: Rng + ?Sized>(
    spec: &I,
    initial: &FullState,
    horizon: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(param("horizon", format!("must be finite and nonnegative, got {horizon}")));
    }
    let mut stepper = Stepper::new(spec, initial.clone(), 0.0)?;
    let mut events = Vec::new();
    if horizon > 0.0 {
        while let Some(e) = stepper.step(horizon, rng)? {
            events.push(e);
        }
    }
    Ok(Trajectory {
        initial: initial.clone(),
        start: 0.0,
        horizon,
        events,
        seed: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cycle {
    pub theta: f64,
    pub zeta: Option<f64>,
    pub eta: Option<f64>,
}

impl Cycle {
    pub fn complete(&self) -> bool {
        self.zeta.is_some() && self.eta.is_some()
    }

    pub fn chi(&self) -> Option<f64> {
        Some(self.zeta? + self.eta?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CycleAnnotation {
    pub cycles: Vec<Cycle>,
}

impl CycleAnnotation {
    pub fn regeneration_times(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.theta).collect()
    }

    pub fn complete(&self) -> impl Iterator<Item = &Cycle> {
        self.cycles.iter().filter(|c| c.complete())
    }

    pub fn busy_periods(&self) -> Vec<f64> {
        self.complete().filter_map(|c| c.zeta).collect()
    }

    pub fn idle_periods(&self) -> Vec<f64> {
        self.complete().filter_map(|c| c.eta).collect()
    }

    pub fn regeneration_periods(&self) -> Vec<f64> {
        self.complete().filter_map(|c| c.chi()).collect()
    }

    /// CSV with header `theta,zeta,eta,complete`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "zeta", "eta", "complete"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cycles {
            w.write_record([
                c.theta.to_string(),
                opt(c.zeta),
                opt(c.eta),
                c.complete().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Regeneration times are arrivals into an empty system; a path that starts
/// in `(1,0;0)` also regenerates at its start.
pub fn detect_cycles(traj: &Trajectory) -> CycleAnnotation {
    let mut cycles: Vec<Cycle> = Vec::new();
    let mut busy_end: Option<f64> = None;
    if traj.initial.is_regeneration() {
        cycles.push(Cycle {
            theta: traj.start,
            zeta: None,
            eta: None,
        });
    }
    let mut prev_idle = traj.initial.is_idle();
    for e in &traj.events {
        match e.kind {
            EventKind::Arrival if prev_idle && e.state_after.n() == 1 => {
                if let (Some(last), Some(end)) = (cycles.last_mut(), busy_end) {
                    if last.zeta.is_some() {
                        last.eta = Some(e.time - end);
                    }
                }
                cycles.push(Cycle {
                    theta: e.time,
                    zeta: None,
                    eta: None,
                });
                busy_end = None;
            }
            EventKind::Departure if e.state_after.is_idle() => {
                if let Some(last) = cycles.last_mut() {
                    if last.zeta.is_none() {
                        last.zeta = Some(e.time - last.theta);
                    }
                }
                busy_end = Some(e.time);
            }
            _ => {}
        }
        prev_idle = e.state_after.is_idle();
    }
    CycleAnnotation { cycles }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BackwardRenewal {
    pub value: f64,
    /// No regeneration by `t`; `value` is the time since the path start.
    pub pre_regeneration: bool,
}

/// `t - max{theta_i <= t}`.
pub fn backward_renewal(traj: &Trajectory, annotation: &CycleAnnotation, t: f64) -> Result<BackwardRenewal> {
    if !(t >= traj.start && t <= traj.horizon) {
        return Err(param("t", format!("{t} outside [{}, {}]", traj.start, traj.horizon)));
    }
    let last = annotation
        .cycles
        .iter()
        .map(|c| c.theta)
        .take_while(|&th| th <= t)
        .last();
    Ok(match last {
        Some(th) => BackwardRenewal {
            value: t - th,
            pre_regeneration: false,
        },
        None => BackwardRenewal {
            value: t - traj.start,
            pre_regeneration: true,
        },
    })
}

/// One regeneration cycle started from `(1,0;0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleSample {
    pub zeta: f64,
    pub eta: f64,
}

/// Simulates one busy period from `(1,0;0)` and the idle period after it.
/// A cycle longer than `cap` is an error.
pub fn sample_cycle<I: Intensity + ?Sized, R: Rng + ?Sized>(
    spec: &I,
    cap: f64,
    rng: &mut R,
) -> Result<CycleSample> {
    let mut stepper = Stepper::new(spec, FullState::regeneration(), 0.0)?;
    let mut zeta = None;
    loop {
        let Some(e) = stepper.step(cap, rng)? else {
            return Err(Error::HorizonExceeded {
                target: cap,
                horizon: cap,
            }
            .context("regeneration cycle did not finish"));
        };
        match (zeta, e.kind) {
            (None, EventKind::Departure) if e.state_after.is_idle() => zeta = Some(e.time),
            (Some(z), EventKind::Arrival) => {
                return Ok(CycleSample {
                    zeta: z,
                    eta: e.time - z,
                })
            }
            _ => {}
        }
    }
}

/// Independent cycles, one substream per index.
pub fn sample_cycles<I: Intensity + ?Sized>(
    spec: &I,
    count: usize,
    cap: f64,
    streams: &Streams,
) -> Result<Vec<CycleSample>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream("cycle", i as u64);
            sample_cycle(spec, cap, &mut rng).map_err(|e| e.context(format!("cycle {i}")))
        })
        .collect()
}

/// Geometric binning of `x0`: bin 0 is `[0, upper/1000)`, the last bin is
/// `[upper, inf)`, the bins between are geometric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct X0Binning {
    pub upper: f64,
    pub bins: usize,
}

impl X0Binning {
    pub fn new(upper: f64, bins: usize) -> Result<Self> {
        if !(upper > 0.0 && upper.is_finite()) || bins < 3 {
            return Err(param("binning", format!("need upper > 0 and bins >= 3, got {upper}, {bins}")));
        }
        Ok(Self { upper, bins })
    }

    /// 20 bins on `[0, 10/lambda0]`.
    pub fn for_lambda0(lambda0: f64) -> Result<Self> {
        Self::new(10.0 / lambda0, 20)
    }

    pub fn edges(&self) -> Vec<f64> {
        let m = self.bins - 2;
        (0..=m)
            .map(|k| self.upper * 1000f64.powf(k as f64 / m as f64 - 1.0))
            .collect()
    }

    pub fn bin(&self, x0: f64) -> usize {
        self.edges().partition_point(|&e| e <= x0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMarginal {
    pub time: f64,
    pub replications: usize,
    pub binning: X0Binning,
    pub n_counts: BTreeMap<usize, u64>,
    pub joint_counts: BTreeMap<(usize, usize), u64>,
}

impl EmpiricalMarginal {
    fn from_states(time: f64, binning: X0Binning, states: &[FullState]) -> Self {
        let mut n_counts = BTreeMap::new();
        let mut joint_counts = BTreeMap::new();
        for s in states {
            *n_counts.entry(s.n()).or_insert(0) += 1;
            *joint_counts.entry((s.n(), binning.bin(s.x0()))).or_insert(0) += 1;
        }
        Self {
            time,
            replications: states.len(),
            binning,
            n_counts,
            joint_counts,
        }
    }

    pub fn n_frequency(&self, n: usize) -> f64 {
        *self.n_counts.get(&n).unwrap_or(&0) as f64 / self.replications as f64
    }
}

/// States of `replications` independent paths at each time in `times`
/// (nondecreasing). Replication `i` uses substream `(purpose, i)`.
pub fn ensemble_states<I: Intensity + ?Sized>(
    spec: &I,
    initial: &FullState,
    times: &[f64],
    replications: usize,
    streams: &Streams,
    purpose: &str,
) -> Result<Vec<Vec<FullState>>> {
    if replications == 0 {
        return Err(param("replications", "must be at least 1"));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(param("times", "must be finite, nonnegative and nondecreasing"));
    }
    let per_path: Vec<Vec<FullState>> = (0..replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.stream(purpose, i as u64);
            let mut stepper = Stepper::new(spec, initial.clone(), 0.0)?;
            times
                .iter()
                .map(|&t| {
                    stepper.advance_to(t, &mut rng)?;
                    Ok(stepper.state().clone())
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.context(format!("replication {i}")))
        })
        .collect::<Result<_>>()?;
    // Transpose to one vector per time, in replication order.
    Ok((0..times.len())
        .map(|k| per_path.iter().map(|p| p[k].clone()).collect())
        .collect())
}

pub fn ensemble_marginals<I: Intensity + ?Sized>(
    spec: &I,
    initial: &FullState,
    times: &[f64],
    replications: usize,
    binning: X0Binning,
    streams: &Streams,
    purpose: &str,
) -> Result<Vec<EmpiricalMarginal>> {
    let states = ensemble_states(spec, initial, times, replications, streams, purpose)?;
    Ok(times
        .iter()
        .zip(&states)
        .map(|(&t, s)| EmpiricalMarginal::from_states(t, binning, s))
        .collect())
}

pub fn ensemble_marginal<I: Intensity + ?Sized>(
    spec: &I,
    initial: &FullState,
    t: f64,
    replications: usize,
    binning: X0Binning,
    streams: &Streams,
) -> Result<EmpiricalMarginal> {
    Ok(ensemble_marginals(spec, initial, &[t], replications, binning, streams, "ensemble")?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;

    fn manual(events: &[(f64, EventKind, &[f64])], horizon: f64) -> Trajectory {
        Trajectory {
            initial: FullState::origin(),
            start: 0.0,
            horizon,
            events: events
                .iter()
                .map(|(t, k, ages)| Event {
                    time: *t,
                    kind: *k,
                    index: (*k == EventKind::Departure).then_some(0),
                    state_after: FullState::new(0.0, ages.to_vec()).unwrap(),
                })
                .collect(),
            seed: String::new(),
        }
    }

    #[test]
    fn cycle_example() {
        use EventKind::*;
        let t = manual(&[(1.0, Arrival, &[0.0]), (2.0, Departure, &[]), (5.0, Arrival, &[0.0])], 6.0);
        let c = detect_cycles(&t);
        assert_eq!(c.regeneration_times(), vec![1.0, 5.0]);
        assert_eq!(c.cycles[0].zeta, Some(1.0));
        assert_eq!(c.cycles[0].eta, Some(3.0));
        assert!(!c.cycles[1].complete());
        assert_eq!(c.regeneration_periods(), vec![4.0]);
    }

    #[test]
    fn trailing_busy_cycle_incomplete() {
        use EventKind::*;
        let t = manual(&[(1.0, Arrival, &[0.0]), (1.5, Arrival, &[0.5, 0.0])], 3.0);
        let c = detect_cycles(&t);
        assert_eq!(c.cycles.len(), 1);
        assert!(c.busy_periods().is_empty());
        assert!(detect_cycles(&manual(&[], 1.0)).cycles.is_empty());
    }

    #[test]
    fn backward_renewal_examples() {
        use EventKind::*;
        let t = manual(&[(1.0, Arrival, &[0.0]), (2.0, Departure, &[]), (5.0, Arrival, &[0.0])], 7.0);
        let c = detect_cycles(&t);
        let b = backward_renewal(&t, &c, 6.2).unwrap();
        assert!((b.value - 1.2).abs() < 1e-12 && !b.pre_regeneration);
        assert_eq!(backward_renewal(&t, &c, 5.0).unwrap().value, 0.0);
        let b = backward_renewal(&t, &c, 0.5).unwrap();
        assert!(b.pre_regeneration && b.value == 0.5);
    }

    #[test]
    fn zero_horizon_has_no_events() {
        let f = Family::mg_infinity(1.0, 3.0).unwrap();
        let mut rng = Streams::new(0).stream("sim", 0);
        let t = simulate(&f, &FullState::origin(), 0.0, &mut rng).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.final_state(), FullState::origin());
    }

    #[test]
    fn trajectories_respect_state_invariants() {
        let mut rng = Streams::new(5).stream("sim", 0);
        for f in [
            Family::mg_infinity(1.0, 3.0).unwrap(),
            Family::mm_infinity(1.0, 3.0, 3.0).unwrap(),
            Family::state_modulated(0.5, 1.0, 3.0, 1.0).unwrap(),
        ] {
            let t = simulate(&f, &FullState::origin(), 200.0, &mut rng).unwrap();
            assert!(!t.events.is_empty());
            let mut prev = 0.0;
            for e in &t.events {
                assert!(e.time > prev);
                prev = e.time;
                e.state_after.check().unwrap();
            }
        }
    }

    #[test]
    fn replay_is_identical() {
        let f = Family::state_modulated(0.5, 1.0, 3.0, 1.0).unwrap();
        let run = || {
            let mut rng = Streams::new(9).stream("sim", 3);
            simulate(&f, &FullState::origin(), 100.0, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn ensemble_at_zero_is_point_mass() {
        let f = Family::mg_infinity(1.0, 3.0).unwrap();
        let b = X0Binning::for_lambda0(1.0).unwrap();
        let m = ensemble_marginal(&f, &FullState::origin(), 0.0, 50, b, &Streams::new(1)).unwrap();
        assert_eq!(m.n_counts.get(&0), Some(&50));
        assert_eq!(m.joint_counts.len(), 1);
    }

    #[test]
    fn binning_layout() {
        let b = X0Binning::for_lambda0(0.5).unwrap();
        let e = b.edges();
        assert_eq!(e.len(), 19);
        assert!((e[0] - 0.02).abs() < 1e-12 && (e[18] - 20.0).abs() < 1e-12);
        assert_eq!(b.bin(0.0), 0);
        assert_eq!(b.bin(1e9), 19);
        assert_eq!(b.bin(20.0), 19);
    }

    #[test]
    fn csv_headers() {
        use EventKind::*;
        let t = manual(&[(1.0, Arrival, &[0.0]), (2.0, Departure, &[])], 3.0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("time,kind,index,n,x0\n1,arrival,,1,0\n2,departure,0,0,0\n"));
        let mut buf = Vec::new();
        detect_cycles(&t).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "theta,zeta,eta,complete\n1,1,,false\n");
    }
}
