import math
import warnings

import numpy as np
import pytest
from scipy import optimize

import vrharq.optimizer as opt
from oracles import chase_f2_grid, eta_grid, ir_f2_grid, single_outage
from vrharq.channel import ChannelModel, ergodic_stats
from vrharq.optimizer import (
    GridWarning,
    Surrogate,
    build_dp_tables,
    dp_surrogate_eta,
    optimize_fixed_rate,
    optimize_vr,
    optimize_vr_chase,
    optimize_vr_ir,
    surrogate_outage,
)
from vrharq.outage import RedundancyPolicy, Scheme

RAYLEIGH_10 = ChannelModel.from_db(1.0, 10.0)


@pytest.fixture(scope="module")
def ir_tables_k3():
    return build_dp_tables(RAYLEIGH_10, 3, 100)


class TestFixedRate:
    def test_harq_i_independent_of_k(self):
        base = optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_I, 1)
        for K in (2, 4):
            r = optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_I, K)
            assert r.eta == pytest.approx(base.eta, abs=1e-8)
            assert r.policy.rho[0] == pytest.approx(base.policy.rho[0], rel=1e-3)

    def test_single_attempt_schemes_coincide(self):
        a = optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_I, 1)
        b = optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_IR, 1)
        assert b.eta == pytest.approx(a.eta, abs=1e-5)

    def test_ir_k2_against_diagonal_grid(self):
        c = ergodic_stats(RAYLEIGH_10).c_bar
        r = np.geomspace(0.05, 5.0, 400) / c
        f1 = single_outage(1.0, RAYLEIGH_10.scale, r)
        f2 = np.array([ir_f2_grid(1.0, RAYLEIGH_10.scale, np.array([x]), np.array([x]))[0, 0] for x in r])
        best = np.max((1 - f2) / (r + f1 * r))
        got = optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_IR, 2)
        assert got.eta == pytest.approx(best, abs=1e-3)
        assert got.eta >= best - 1e-5

    def test_chase_k_limit(self):
        with pytest.raises(ValueError):
            optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_CHASE, 5)
        with pytest.raises(ValueError):
            optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_IR, 0)


class TestDpTables:
    def test_base_case(self):
        t = build_dp_tables(RAYLEIGH_10, 1, 60)
        np.testing.assert_array_equal(t.v[0], t.x_grid)
        assert t.x_grid[-1] == 1.0 and t.x_grid[0] > 0

    def test_invariants(self, ir_tables_k3):
        t = ir_tables_k3
        assert t.x_grid.size == 100 and t.x_grid[-1] == 3.0
        np.testing.assert_array_equal(t.v[0], t.x_grid)
        for k in range(1, t.K):
            assert np.all(t.v[k] <= t.v[k - 1] + 1e-9)
            assert np.all(t.v[k] >= 0)
            assert np.all((t.arg_rho[k] >= 0) & (t.arg_rho[k] <= t.x_grid + 1e-12))

    def test_grid_points_range(self):
        with pytest.raises(ValueError):
            build_dp_tables(RAYLEIGH_10, 2, 20)

    def test_v3_against_brute_force(self, ir_tables_k3):
        # V_3(X) = min over X1 <= X2 <= X of X1 + (X2 - X1) f1(X1) + (X - X2) f2(X2)
        t = ir_tables_k3
        f1 = lambda x: surrogate_outage(t.xi, 1, x)
        f2 = lambda x: surrogate_outage(t.xi, 2, x)
        rng = np.random.default_rng(7)
        idx = rng.choice(t.x_grid.size, 20, replace=False)
        for g in idx:
            X = t.x_grid[g]
            u = np.linspace(0, X, 801)
            X1, X2 = np.meshgrid(u, u, indexing="ij")
            cost = X1 + (X2 - X1) * f1(X1) + (X - X2) * f2(X2)
            cost[X2 < X1] = np.inf
            i, j = np.unravel_index(np.argmin(cost), cost.shape)

            def obj(p):
                a, b = np.clip(p, 0, X)
                if b < a:
                    return np.inf
                return a + (b - a) * f1(a) + (X - b) * f2(b)

            res = optimize.minimize(obj, [u[i], u[j]], method="Nelder-Mead",
                                    options={"xatol": 1e-10, "fatol": 1e-14})
            brute = min(cost[i, j], res.fun)
            assert t.v[2, g] == pytest.approx(brute, abs=1e-4)

    def test_dp_optimal_on_its_objective(self):
        t = build_dp_tables(RAYLEIGH_10, 3, 100)
        rp = opt.backtrack(t, opt._best_x(t))
        X = rp.sum()
        best = dp_surrogate_eta(t.xi, rp)
        rng = np.random.default_rng(11)
        w = rng.dirichlet(np.ones(3), 10_000) * X
        rival = max(dp_surrogate_eta(t.xi, p) for p in w)
        assert best >= rival - 1e-6

    def test_sqrt_k_surrogate_option(self):
        x = np.array([0.5, 1.0, 2.0])
        b = surrogate_outage(2.0, 4, x, Surrogate.BOUND)
        s = surrogate_outage(2.0, 4, x, Surrogate.SQRT_K)
        assert b[1] == s[1] == 0.5
        assert s[2] < b[2] and s[0] > b[0]
        assert surrogate_outage(2.0, 1, 0.0) == 1.0


class TestVrIr:
    def test_single_attempt_is_fixed_rate(self):
        a = optimize_vr_ir(RAYLEIGH_10, 1)
        b = optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_IR, 1)
        assert a.policy == b.policy

    def test_k4_profile_decreases_then_increases(self):
        r = optimize_vr_ir(RAYLEIGH_10, 4)
        rp = r.policy.normalized(ergodic_stats(RAYLEIGH_10).c_bar)
        assert rp[0] == rp.max()
        k_min = int(np.argmin(rp))
        assert 0 < k_min < 3
        assert np.all(np.diff(rp[k_min:]) > 0)

    def test_beats_fixed_rate(self):
        for K in (2, 4):
            assert optimize_vr_ir(RAYLEIGH_10, K).eta > optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_IR, K).eta

    def test_reported_not_far_below_prediction(self):
        r = optimize_vr_ir(RAYLEIGH_10, 3)
        assert r.reported.eta >= r.predicted_eta_bound - 2e-3
        assert r.reported.eta <= ergodic_stats(RAYLEIGH_10).c_bar

    def test_refine_reaches_exhaustive_optimum_k2(self):
        c = ergodic_stats(RAYLEIGH_10).c_bar
        r = np.geomspace(0.05, 5.0, 200) / c
        f1 = single_outage(1.0, RAYLEIGH_10.scale, r)
        best = eta_grid(r, r, f1, ir_f2_grid(1.0, RAYLEIGH_10.scale, r, r)).max()
        got = optimize_vr_ir(RAYLEIGH_10, 2, refine=True)
        assert got.eta >= best - 1e-4

    def test_grid_warning(self, monkeypatch):
        monkeypatch.setattr(opt, "GRID_WARN_TOL", 0.0)
        with pytest.warns(GridWarning):
            r = optimize_vr_ir(RAYLEIGH_10, 3, grid_points=50)
        assert any("grid" in d for d in r.diagnostics)


class TestMultiStart:
    def test_harq_i_never_beats_fixed_rate(self):
        fr = optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_I, 2)
        vr = optimize_vr(RAYLEIGH_10, Scheme.HARQ_I, 2, starts=3, seed=5)
        assert vr.eta <= fr.eta + 1e-4
        # and it finds the fixed-rate point
        assert vr.policy.rho[0] == pytest.approx(fr.policy.rho[0], rel=1e-2)

    def test_deterministic(self):
        a = optimize_vr(RAYLEIGH_10, Scheme.HARQ_I, 3, starts=2, seed=1)
        b = optimize_vr(RAYLEIGH_10, Scheme.HARQ_I, 3, starts=2, seed=1)
        assert a.policy == b.policy and a.eta == b.eta

    def test_chase_single_attempt(self):
        a = optimize_vr_chase(RAYLEIGH_10, 1)
        b = optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_I, 1)
        assert a.eta == pytest.approx(b.eta, abs=1e-6)

    def test_chase_k2_against_exhaustive_grid(self):
        c = ergodic_stats(RAYLEIGH_10).c_bar
        r = np.geomspace(0.1, 4.0, 100) / c
        f1 = single_outage(1.0, RAYLEIGH_10.scale, r)
        best = eta_grid(r, r, f1, chase_f2_grid(1.0, RAYLEIGH_10.scale, r, r)).max()
        got = optimize_vr_chase(RAYLEIGH_10, 2)
        assert got.eta == pytest.approx(best, abs=1e-3)
        eta_i = optimize_fixed_rate(RAYLEIGH_10, Scheme.HARQ_I, 2).eta
        eta_ir = optimize_vr_ir(RAYLEIGH_10, 2, refine=True).eta
        assert eta_i <= got.eta <= eta_ir

    def test_chase_k_limit(self):
        with pytest.raises(ValueError):
            optimize_vr_chase(RAYLEIGH_10, 5)
