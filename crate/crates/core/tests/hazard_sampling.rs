use isq_core::hazard::{
    cdf_from_intensity, coupled_draw, density_from_intensity, exponential_table, sample_first_event,
    DensityTable, HazardClock, MaximalCoupling, TableOptions,
};
use isq_core::stats::{ks_critical, ks_statistic, SampleStats};
use isq_core::Streams;

const N: usize = 100_000;

#[test]
fn single_constant_clock_mean() {
    let mut rng = Streams::new(11).stream("first-event", 0);
    let clocks = [HazardClock::constant(4.0)];
    let s = SampleStats::new((0..N).map(|_| sample_first_event(&clocks, None, &mut rng).unwrap().unwrap().delay));
    assert!((s.mean - 0.25).abs() <= 3.0 * s.std_error(), "{s:?}");
}

#[test]
fn two_clocks_winner_and_delay() {
    let mut rng = Streams::new(12).stream("first-event", 0);
    let clocks = [HazardClock::constant(1.0), HazardClock::constant(3.0)];
    let draws: Vec<_> = (0..N)
        .map(|_| sample_first_event(&clocks, None, &mut rng).unwrap().unwrap())
        .collect();
    let wins = SampleStats::new(draws.iter().map(|d| (d.winner == 1) as u8 as f64));
    assert!((wins.mean - 0.75).abs() <= 3.0 * wins.std_error());
    let delay = SampleStats::new(draws.iter().map(|d| d.delay));
    assert!((delay.mean - 0.25).abs() <= 3.0 * delay.std_error());
}

fn ks_single_clock(clock: &HazardClock<'_>, seed: u64) -> (f64, f64) {
    let mut rng = Streams::new(seed).stream("ks", 0);
    let samples: Vec<f64> = (0..N)
        .map(|_| sample_first_event(std::slice::from_ref(clock), None, &mut rng).unwrap().unwrap().delay)
        .collect();
    let d = ks_statistic(&samples, |s| cdf_from_intensity(clock, s).unwrap());
    (d, ks_critical(0.01, N))
}

#[test]
fn single_clock_reproduces_its_cdf() {
    for (i, clock) in [
        HazardClock::pareto(3.0, 0.0),
        HazardClock::pareto(4.0, 2.5),
        HazardClock::hyperbolic(0.5, 0.5, 2.0, 1.0),
    ]
    .iter()
    .enumerate()
    {
        let (d, crit) = ks_single_clock(clock, 20 + i as u64);
        assert!(d < crit, "clock {i}: D = {d} >= {crit}");
    }
    // A purely numeric clock: rate 1 + sin^2.
    let numeric = HazardClock::custom(0.0, |u: f64| 1.0 + u.sin().powi(2));
    let mut rng = Streams::new(30).stream("ks", 0);
    let n = 20_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| sample_first_event(std::slice::from_ref(&numeric), None, &mut rng).unwrap().unwrap().delay)
        .collect();
    let d = ks_statistic(&samples, |s| cdf_from_intensity(&numeric, s).unwrap());
    assert!(d < ks_critical(0.01, n));
}

#[test]
fn cdf_derivative_matches_density() {
    let clocks = [
        HazardClock::constant(2.0),
        HazardClock::pareto(3.0, 0.0),
        HazardClock::pareto(5.0, 1.5),
        HazardClock::hyperbolic(0.5, 0.5, 2.0, 1.0),
    ];
    for (i, c) in clocks.iter().enumerate() {
        let mut prev = 0.0;
        for j in 0..60 {
            let s = 0.05 + 0.25 * j as f64;
            let cdf = cdf_from_intensity(c, s).unwrap();
            assert!(cdf >= prev && cdf <= 1.0);
            prev = cdf;
            let h = 1e-5 * (1.0 + s);
            let num = (cdf_from_intensity(c, s + h).unwrap() - cdf_from_intensity(c, s - h).unwrap()) / (2.0 * h);
            let dens = density_from_intensity(c, s).unwrap();
            assert!((num - dens).abs() <= 1e-6, "clock {i} s={s}: {num} vs {dens}");
        }
        assert!(cdf_from_intensity(c, 1e9).unwrap() > 1.0 - 1e-6);
    }
}

#[test]
fn exponential_coupling_frequency_and_marginals() {
    let opts = TableOptions::default();
    let f = exponential_table(1.0, &opts).unwrap();
    let g = exponential_table(2.0, &opts).unwrap();
    let mc = MaximalCoupling::new(&f, &g).unwrap();
    assert!((mc.kappa() - 0.75).abs() < 1e-5);
    let mut rng = Streams::new(40).stream("couple", 0);
    let draws: Vec<_> = (0..N).map(|_| mc.draw(&mut rng)).collect();
    let freq = SampleStats::new(draws.iter().map(|d| d.coupled as u8 as f64));
    assert!((freq.mean - 0.75).abs() <= 3.0 * freq.std_error());
    assert!(draws.iter().filter(|d| d.coupled).all(|d| d.first == d.second));
    let first: Vec<f64> = draws.iter().map(|d| d.first).collect();
    let second: Vec<f64> = draws.iter().map(|d| d.second).collect();
    let crit = ks_critical(0.01, N);
    assert!(ks_statistic(&first, |s| 1.0 - (-s).exp()) < crit);
    assert!(ks_statistic(&second, |s| 1.0 - (-2.0 * s).exp()) < crit);
}

#[test]
fn battery_marginals_are_preserved() {
    let opts = TableOptions::default();
    let laws = [
        HazardClock::pareto(3.0, 0.0),
        HazardClock::pareto(3.0, 4.0),
        HazardClock::hyperbolic(0.5, 0.5, 1.0, 0.0),
        HazardClock::constant(0.7),
    ];
    let tables: Vec<DensityTable> = laws.iter().map(|c| DensityTable::from_clock(c, &opts).unwrap()).collect();
    let n = 50_000;
    let crit = ks_critical(0.01, n);
    for (i, j) in [(0, 1), (2, 3), (0, 3)] {
        let mut rng = Streams::new(50).stream("battery", (i * 10 + j) as u64);
        let mc = MaximalCoupling::new(&tables[i], &tables[j]).unwrap();
        let draws: Vec<_> = (0..n).map(|_| mc.draw(&mut rng)).collect();
        let a: Vec<f64> = draws.iter().map(|d| d.first).collect();
        let b: Vec<f64> = draws.iter().map(|d| d.second).collect();
        let da = ks_statistic(&a, |s| cdf_from_intensity(&laws[i], s).unwrap());
        let db = ks_statistic(&b, |s| cdf_from_intensity(&laws[j], s).unwrap());
        assert!(da < crit && db < crit, "pair ({i},{j}): {da}, {db} vs {crit}");
        let freq = SampleStats::new(draws.iter().map(|d| d.coupled as u8 as f64));
        assert!((freq.mean - mc.kappa()).abs() <= 3.0 * freq.std_error() + 1e-9);
    }
}

#[test]
fn idle_period_coupling_beats_envelope_ratio() {
    // Arrival laws with hazards inside [0.5, 1].
    let opts = TableOptions::default();
    let a = DensityTable::from_clock(&HazardClock::hyperbolic(0.5, 0.5, 1.0, 0.0), &opts).unwrap();
    let b = DensityTable::from_clock(&HazardClock::hyperbolic(0.5, 0.5, 3.0, 2.0), &opts).unwrap();
    let mut rng = Streams::new(60).stream("idle", 0);
    let n = 20_000;
    let freq = SampleStats::new((0..n).map(|_| coupled_draw(&a, &b, &mut rng).unwrap().coupled as u8 as f64));
    assert!(freq.mean >= 0.5 - 3.0 * freq.std_error());
}
