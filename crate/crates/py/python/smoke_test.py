"""Smoke test for the isq extension module. Run after installing the wheel."""

import math

import isq


def main():
    env = isq.Envelope(4.0, 0.5, 1.0)
    assert math.isclose(env.rho(), 1.0 / 3.0)

    fam = isq.Family.state_modulated(0.5, 1.0, 4.0, 1.0)
    assert fam.name == "state-modulated"
    assert fam.params()["a"] == 1.0
    s = isq.FullState(0.2, [1.0, 0.2])
    assert s.n == 2
    assert 0.5 <= fam.arrival_rate(s) <= 1.0
    assert fam.service_rate(s, 0) >= 4.0 / 2.0

    traj = isq.simulate(fam, 50.0, seed=7)
    assert len(traj) == len(traj.times) > 0
    again = isq.simulate(fam, 50.0, seed=7)
    assert traj.times == again.times
    assert traj.state_at(50.0).n == traj.counts[-1]

    mg = isq.MgAnalytics(1.0, 3.0)
    assert math.isclose(mg.busy_mean(), math.exp(0.5) - 1.0, rel_tol=1e-12)
    assert math.isclose(mg.g_integral(1.0), 0.375, rel_tol=1e-12)
    assert mg.busy_moment_bound(1.0) >= mg.busy_mean()

    report = isq.convergence_constant(env, 2.0)
    assert math.isfinite(report["c1"]) and report["c1"] > 0
    assert len(report["curve"]) == 129

    dom = isq.dominate(fam, 100.0, seed=3)
    assert dom["violations"] == 0
    assert all(a <= b for a, b in dom["n_pairs"])

    pair = isq.couple(isq.Family.mg_infinity(1.0, 3.0), 1000.0, seed=4)
    assert pair["tau"] is not None

    xs = isq.sample_pareto(3.0, 20000, seed=5)
    below_one = sum(x <= 1.0 for x in xs) / len(xs)
    assert abs(below_one - 0.875) < 0.01

    kappa, draws = isq.coupled_exponentials(1.0, 2.0, 20000, seed=6)
    assert abs(kappa - 0.75) < 1e-5
    freq = sum(c for _, _, c in draws) / len(draws)
    assert abs(freq - 0.75) < 0.02

    try:
        isq.Envelope(2.0, 0.5, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("K <= 2 must be rejected")

    print("isq smoke test passed")


if __name__ == "__main__":
    main()
