"""Exponentially-weighted forecaster, online logistic-regression tuning,
discontinuity location, and dispersion estimation."""

import numpy as np
import pytest

from algotune.instances import ValidationError, gen_clustering, gen_logreg
from algotune.linkage import alpha_utility_curve, enumerate_boundaries_m1
from algotune.online import (
    DispersionReport,
    estimate_dispersion,
    hedge_run,
    locate_discontinuities,
    online_logreg_run,
)


def stream(T, seed0=0, **kw):
    kw.setdefault("n", 6)
    kw.setdefault("L", 1)
    kw.setdefault("k", 2)
    return [gen_clustering(seed=seed0 + t, **kw) for t in range(T)]


def replay_oracle(grid_values, eta, H, seed, maximize):
    """Independent weight-loop replay consuming randomness identically."""
    rng = np.random.default_rng(seed)
    T, G = grid_values.shape
    w = np.full(G, 1.0 / G)
    idx = np.empty(T, dtype=int)
    for t in range(T):
        idx[t] = rng.choice(G, p=w)
        signed = grid_values[t] if maximize else -grid_values[t]
        w = w * np.exp(eta * signed / H)
        w /= w.sum()
    return idx


class TestHedge:
    def test_matches_replay_oracle(self):
        run = hedge_run(stream(60), "clustering-M1", np.linspace(0.5, 4, 9), seed=11)
        idx = replay_oracle(run.grid_values, run.eta, run.H, 11, maximize=True)
        assert run.choice_indices == tuple(idx)

    def test_regret_trace_definition(self):
        run = hedge_run(stream(40), "clustering-M1", [0.7, 1.3, 2.6], seed=3)
        cum = np.cumsum(run.grid_values, axis=0)
        chosen = np.cumsum(run.chosen_values)
        want = cum.max(axis=1) - chosen
        assert np.allclose(run.regret_trace, want, atol=1e-12)
        assert run.regret == run.regret_trace[-1]

    def test_deterministic_given_seed(self):
        a = hedge_run(stream(30), "clustering-M1", [1.0, 2.0], seed=5)
        b = hedge_run(stream(30), "clustering-M1", [1.0, 2.0], seed=5)
        assert a.choice_indices == b.choice_indices
        assert np.array_equal(a.grid_values, b.grid_values)
        c = hedge_run(stream(30), "clustering-M1", [1.0, 2.0], seed=6)
        assert a.choice_indices != c.choice_indices

    def test_eta_zero_plays_uniform(self):
        run = hedge_run(stream(1500), "clustering-M1", [0.7, 1.3, 2.6], eta=0.0, seed=9)
        counts = np.bincount(run.choice_indices, minlength=3)
        assert np.all(np.abs(counts - 500) < 100)

    def test_constant_utilities_keep_weights_uniform(self):
        # right plateau of any curve: pick a degenerate 2-point grid with
        # equal utilities every round by duplicating the same parameter
        run = hedge_run(stream(1200), "clustering-M1", [1.7, 1.7], eta=5.0, seed=4)
        assert np.array_equal(run.grid_values[:, 0], run.grid_values[:, 1])
        counts = np.bincount(run.choice_indices, minlength=2)
        assert abs(counts[0] - 600) < 80

    def test_default_eta_and_bound(self):
        T, G = 300, 50
        run = hedge_run(stream(T), "clustering-M1", np.linspace(0.5, 4, G), seed=1)
        assert run.eta == pytest.approx(np.sqrt(8 * np.log(G) / T))
        assert run.regret <= 2 * np.sqrt(T * np.log(G))

    def test_logreg_losses_clipped(self):
        ins = [gen_logreg(seed=s, m=30, p=4, m_val=20) for s in range(12)]
        run = hedge_run(ins, "logreg", [0.1, 0.6, 1.1], seed=0, H=0.1)
        assert run.maximize is False
        assert run.clip_count > 0
        assert run.grid_values.max() <= 0.1 + 1e-15

    def test_rejections(self):
        with pytest.raises(ValidationError):
            hedge_run([], "clustering-M1", [1.0])
        with pytest.raises(ValidationError):
            hedge_run(stream(3), "clustering-M1", [])
        with pytest.raises(ValidationError):
            hedge_run(stream(3), "no-task", [1.0])
        with pytest.raises(ValidationError):
            hedge_run(stream(3), "clustering-M1", [1.0], eta=-0.1)


class TestOnlineLogreg:
    def test_exact_discretization_at_t16(self):
        ins = [gen_logreg(seed=s, m=20, p=3, m_val=10) for s in range(16)]
        run = online_logreg_run(ins, 0.1, 1.1, T=16, seed=2)
        lams = np.array([p.lam for p in run.params])
        assert lams[0] == pytest.approx(0.1)
        assert lams[-1] == pytest.approx(1.1)
        assert np.allclose(np.diff(lams), 16 ** -0.75)
        assert run.audit["eps"] == pytest.approx(16 ** -0.25)

    def test_audit_quadratic_gap_and_decomposition(self):
        ins = [gen_logreg(seed=500 + s, m=40, p=4, m_val=25) for s in range(32)]
        run = online_logreg_run(ins, 0.1, 1.1, T=32, seed=7)
        a = run.audit
        assert a["gap_within_quadratic"]
        assert a["max_surrogate_gap"] <= a["C_fit"] * a["eps"] ** 2
        assert a["decomposition_ok"]
        assert a["true_regret_audit"] <= (
            a["surrogate_regret_audit"] + a["decomposition_slack"] + 1e-9)
        assert len(a["rounds"]) == 32  # all rounds audited at this T
        assert all(0.1 <= l <= 1.1 for l in a["lambdas"])

    def test_audit_subsamples_long_runs(self):
        ins = [gen_logreg(seed=s, m=20, p=3, m_val=10) for s in range(80)]
        run = online_logreg_run(ins, 0.1, 1.1, T=80, seed=1)
        assert len(run.audit["rounds"]) == 32
        assert run.audit["rounds"] == sorted(run.audit["rounds"])

    def test_deterministic_given_seed(self):
        ins = [gen_logreg(seed=s, m=20, p=3, m_val=10) for s in range(16)]
        a = online_logreg_run(ins, 0.1, 1.1, T=16, seed=3)
        b = online_logreg_run(ins, 0.1, 1.1, T=16, seed=3)
        assert a.choice_indices == b.choice_indices
        assert np.array_equal(a.grid_values, b.grid_values)
        assert a.regret == b.regret

    def test_rejections(self):
        ins = [gen_logreg(seed=s, m=20, p=3, m_val=10) for s in range(20)]
        with pytest.raises(ValidationError):
            online_logreg_run(ins, 0.1, 1.1, T=8)
        with pytest.raises(ValidationError):
            online_logreg_run(ins[:10], 0.1, 1.1, T=20)
        with pytest.raises(ValidationError):
            online_logreg_run(ins, 1.1, 0.1, T=16)
        with pytest.raises(ValidationError):
            online_logreg_run(ins, 0.0, 1.1, T=16)


class TestLocateDiscontinuities:
    def test_constant_curve_empty(self):
        assert locate_discontinuities(lambda x: 3.14, 0.0, 1.0, 128).size == 0

    def test_single_step(self):
        locs = locate_discontinuities(lambda x: 0.0 if x < 0.5 else 1.0, 0.0, 1.0, 513)
        assert locs.shape == (1,)
        assert abs(locs[0] - 0.5) <= 1e-8

    def test_hundred_random_plantings(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            c = float(rng.uniform(0.1, 0.9))
            h = float(rng.uniform(0.5, 3.0))
            locs = locate_discontinuities(
                lambda x, c=c, h=h: h if x >= c else 0.0, 0.0, 1.0, 1024)
            assert locs.shape == (1,)
            assert abs(locs[0] - c) <= 1e-8

    def test_two_jumps(self):
        f = lambda x: (x >= 0.25) * 1.0 + (x >= 0.75) * 2.0
        locs = locate_discontinuities(f, 0.0, 1.0, 1024)
        assert locs.shape == (2,)
        assert abs(locs[0] - 0.25) <= 1e-8 and abs(locs[1] - 0.75) <= 1e-8

    def test_lipschitz_allowance_suppresses_ramps(self):
        ramp = lambda x: 2.0 * x
        assert locate_discontinuities(ramp, 0.0, 1.0, 256, L_lip=2.0).size == 0
        assert locate_discontinuities(ramp, 0.0, 1.0, 256, L_lip=0.0).size > 0

    def test_clustering_jumps_match_enumerated_roots(self):
        found_any = False
        for s in range(6):
            ins = gen_clustering(seed=s, n=6, L=1, k=2)
            curve = alpha_utility_curve(ins, beta=(1.0,))
            jumps = locate_discontinuities(curve, 0.5, 4.0, 2048)
            roots = enumerate_boundaries_m1(ins, (1.0,), 0.5, 4.0)
            for j in jumps:
                assert min(abs(j - r) for r in roots) < 1e-6
            found_any = found_any or jumps.size > 0
        assert found_any

    def test_rejections(self):
        with pytest.raises(ValidationError):
            locate_discontinuities(lambda x: x, 1.0, 0.0, 16)
        with pytest.raises(ValidationError):
            locate_discontinuities(lambda x: x, 0.0, 1.0, 1)


class TestDispersion:
    def test_no_jumps_all_zero(self):
        rep = estimate_dispersion([lambda x: 1.0] * 5, [0.01, 0.1], 0.0, 1.0, 64)
        assert rep.max_counts == (0, 0)
        assert rep.ratios == (0.0, 0.0)

    def test_fixed_jump_concentration(self):
        step = lambda x: 0.0 if x < 0.5 else 1.0
        rep = estimate_dispersion([step] * 40, [0.01, 0.05, 0.2], 0.0, 1.0, 256)
        assert rep.max_counts == (40, 40, 40)
        assert rep.T == 40

    def test_counts_monotone_in_eps(self):
        curves = [alpha_utility_curve(gen_clustering(seed=s, n=6, L=1, k=2), beta=(1.0,))
                  for s in range(30)]
        rep = estimate_dispersion(curves, [0.005, 0.02, 0.08, 0.32], 0.5, 4.0, 1024)
        assert list(rep.max_counts) == sorted(rep.max_counts)
        jumps_per_round = max((len(r) for r in rep.locations_per_round), default=0)
        assert max(rep.max_counts) <= rep.T * max(1, jumps_per_round)

    def test_ratio_definition(self):
        step = lambda x: 0.0 if x < 0.5 else 1.0
        rep = estimate_dispersion([step] * 10, [0.25], 0.0, 1.0, 128)
        assert rep.ratios[0] == pytest.approx(10 / (0.25 * 10))

    def test_rows_and_rejections(self):
        rep = estimate_dispersion([lambda x: 0.0], [0.1], 0.0, 1.0, 32)
        assert rep.rows() == [{"eps": 0.1, "max_count": 0, "ratio": 0.0}]
        with pytest.raises(ValidationError):
            estimate_dispersion([lambda x: 0.0], [], 0.0, 1.0)
        with pytest.raises(ValidationError):
            estimate_dispersion([lambda x: 0.0], [-0.1], 0.0, 1.0)
