import math

import numpy as np
import pytest

from conftest import three_sigma
from homesale.closed_form import MarketParams, thinned_payoff
from homesale.oracle import mc_path_payoff, sigma0_table2_path, table2_context
from homesale.path_payoff import (ExponentialWithdrawals, NoWithdrawals,
                                  PathContext, UniformOffers,
                                  below_list_probability,
                                  conditional_payoff_changing_list,
                                  conditional_payoff_constant_list,
                                  conditional_payoff_no_list, crossing_survival,
                                  expected_payoff, surviving_offer_tail)
from homesale.stochastic import CirParams, DemandParams, RatePath, substream


@pytest.fixture
def decay_ctx():
    """Simulation defaults: decaying list on the zero-vol rate path."""
    return table2_context(sigma0_table2_path(2.5))


@pytest.fixture
def const_ctx():
    return table2_context(sigma0_table2_path(2.5), constant_list=True)


def flat_rate_ctx(schedule=None, withdrawals=None, reservation=140.0,
                  demand=None, horizon=2.5):
    """Constant rate 0.1; defaults give a constant offer intensity of 5."""
    n = int(horizon / 0.005)
    path = RatePath(0.005, np.full(n + 1, 0.1))
    if schedule is None:
        schedule = lambda T: 200.0 * np.ones_like(np.asarray(T, dtype=float))
    return PathContext(
        path=path, list_schedule=schedule,
        offers=UniformOffers(100.0, 200.0),
        withdrawals=withdrawals if withdrawals is not None else ExponentialWithdrawals(5.0),
        reservation=reservation,
        demand=demand if demand is not None else DemandParams(0.0, 1000.0))


def pooled_offers(ctx, t, n_offers, seed):
    """iid (arrival, value, delay) triples with arrival density lam/Lambda."""
    rng = substream(seed, "pooled")
    grid = np.linspace(0.0, t, 1001)
    bound = float(np.max(ctx.intensity(grid))) * 1.000001
    arrivals = []
    while sum(a.size for a in arrivals) < n_offers:
        cand = rng.uniform(0.0, t, 4 * n_offers)
        keep = rng.uniform(0.0, 1.0, cand.size) * bound < ctx.intensity(cand)
        arrivals.append(cand[keep])
    a = np.concatenate(arrivals)[:n_offers]
    values = ctx.offers.sample(rng, n_offers)
    delays = ctx.withdrawals.sample(rng, n_offers)
    return a, values, delays


class TestBelowListProbability:
    def test_list_at_top_of_support(self):
        ctx = flat_rate_ctx()
        assert below_list_probability(ctx, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_constant_list_collapses_to_cdf(self):
        L = 180.0
        ctx = flat_rate_ctx(schedule=lambda T: L * np.ones_like(np.asarray(T, dtype=float)))
        assert below_list_probability(ctx, 1.0) == pytest.approx(0.8, rel=1e-10)

    def test_against_pooled_simulation(self, decay_ctx):
        a, values, _ = pooled_offers(decay_ctx, 1.0, 400_000, seed=3)
        hits = (values < np.asarray(decay_ctx.list_schedule(a))).astype(float)
        three_sigma("below-list prob", below_list_probability(decay_ctx, 1.0),
                    hits.mean(), hits.std(ddof=1) / math.sqrt(hits.size))

    def test_rejects_zero_mass(self):
        ctx = flat_rate_ctx()
        with pytest.raises(ValueError):
            below_list_probability(ctx, 0.0)


class TestSurvivingOfferTail:
    def test_zero_above_initial_list(self, decay_ctx):
        assert surviving_offer_tail(decay_ctx, 1.0, 200.0) == 0.0
        assert surviving_offer_tail(decay_ctx, 1.0, 250.0) == 0.0

    def test_no_withdrawals_constant_list(self):
        ctx = flat_rate_ctx(
            schedule=lambda T: 180.0 * np.ones_like(np.asarray(T, dtype=float)),
            withdrawals=NoWithdrawals())
        # value band (140, 180) of a uniform on (100, 200)
        assert surviving_offer_tail(ctx, 1.0, 0.0) == pytest.approx(0.4, rel=1e-10)

    def test_against_pooled_simulation(self, decay_ctx):
        y = 150.0
        t = 1.0
        a, values, delays = pooled_offers(decay_ctx, t, 400_000, seed=4)
        L_a = np.asarray(decay_ctx.list_schedule(a))
        product = values * ((values >= 140.0) & (values < L_a)) * (delays >= t - a)
        hits = (product > y).astype(float)
        three_sigma("survivor tail", surviving_offer_tail(decay_ctx, t, y),
                    hits.mean(), hits.std(ddof=1) / math.sqrt(hits.size))

    def test_dominated_by_below_list_probability(self, decay_ctx):
        phi = below_list_probability(decay_ctx, 1.5)
        ys = np.linspace(0.0, 210.0, 64)
        tails = surviving_offer_tail(decay_ctx, 1.5, ys)
        assert np.all(tails <= phi + 1e-12)
        assert np.all(tails >= 0.0)
        assert np.all(np.diff(tails) <= 1e-12)


class TestCrossingSurvival:
    def test_zero_and_one_offers(self, decay_ctx):
        assert crossing_survival(decay_ctx, 1.0, 0) == 1.0
        assert crossing_survival(decay_ctx, 1.0, 1) == \
            below_list_probability(decay_ctx, 1.0)

    def test_three_offer_runs(self, decay_ctx):
        from homesale.stochastic import sample_nhpp

        t = 0.3
        rng = substream(11, "three-offer")
        grid = np.linspace(0.0, t, 301)
        bound = float(np.max(decay_ctx.intensity(grid))) * 1.000001
        hits = []
        for _ in range(30_000):
            arrivals = sample_nhpp(decay_ctx.intensity, t, bound, rng)
            if arrivals.size != 3:
                continue
            values = decay_ctx.offers.sample(rng, 3)
            hits.append(float(np.all(values < np.asarray(decay_ctx.list_schedule(arrivals)))))
        hits = np.array(hits)
        assert hits.size > 2000
        three_sigma("no-crossing given 3 offers", crossing_survival(decay_ctx, t, 3),
                    hits.mean(), hits.std(ddof=1) / math.sqrt(hits.size))


class TestConditionalPayoffs:
    def test_changing_equals_constant_for_constant_schedule(self, const_ctx):
        for t in (0.5, 1.0, 2.0):
            a = conditional_payoff_changing_list(const_ctx, t)
            b = conditional_payoff_constant_list(const_ctx, t)
            assert a == pytest.approx(b, rel=1e-10)

    def test_tiny_horizon_pays_nothing(self, decay_ctx):
        # the payoff decays linearly with the horizon near zero
        assert conditional_payoff_changing_list(decay_ctx, 1e-6) < 2e-3
        assert conditional_payoff_no_list(decay_ctx, 1e-6) < 2e-3
        assert conditional_payoff_changing_list(decay_ctx, 1e-8) < 2e-5

    def test_no_list_embeds_closed_form(self):
        # constant rate and intensity, uniform values, exponential
        # withdrawals: the quadrature evaluation must land on the exact
        # algebra of the waiting-only model
        ctx = flat_rate_ctx()
        m = MarketParams(5.0, 5.0, 0.1, 100.0, 200.0)
        want = thinned_payoff(2.0, m, 140.0)
        got = conditional_payoff_no_list(ctx, 2.0)
        assert got == pytest.approx(want, rel=1e-7)

    def test_constant_list_at_top_of_support_embeds_closed_form(self):
        ctx = flat_rate_ctx()
        m = MarketParams(5.0, 5.0, 0.1, 100.0, 200.0)
        want = thinned_payoff(2.0, m, 140.0)
        assert conditional_payoff_constant_list(ctx, 2.0) == pytest.approx(want, rel=1e-7)

    def test_reservation_at_list_ignores_withdrawals(self):
        # empty in-band region: only the crossing branch remains, which
        # never depends on the withdrawal law
        sched = lambda T: 180.0 * np.ones_like(np.asarray(T, dtype=float))
        a = conditional_payoff_constant_list(
            flat_rate_ctx(schedule=sched, reservation=180.0), 1.5)
        b = conditional_payoff_constant_list(
            flat_rate_ctx(schedule=sched, reservation=180.0,
                          withdrawals=NoWithdrawals()), 1.5)
        assert a == pytest.approx(b, rel=1e-12)

    def test_no_list_zero_when_reservation_tops_support(self):
        sched = lambda T: 220.0 * np.ones_like(np.asarray(T, dtype=float))
        ctx = flat_rate_ctx(schedule=sched, reservation=220.0)
        assert conditional_payoff_no_list(ctx, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_monte_carlo_no_list(self, decay_ctx):
        est = mc_path_payoff(decay_ctx, 1.0, "none", 200_000, seed=21)
        three_sigma("no-list payoff", conditional_payoff_no_list(decay_ctx, 1.0),
                    est.mean, est.stderr)

    def test_monte_carlo_constant_list(self, const_ctx):
        est = mc_path_payoff(const_ctx, 1.0, "constant", 200_000, seed=22)
        three_sigma("constant-list payoff",
                    conditional_payoff_constant_list(const_ctx, 1.0),
                    est.mean, est.stderr)

    def test_bounded(self, decay_ctx, const_ctx):
        for t in (0.25, 1.0, 2.0):
            for v in (conditional_payoff_changing_list(decay_ctx, t),
                      conditional_payoff_constant_list(const_ctx, t),
                      conditional_payoff_no_list(decay_ctx, t)):
                assert 0.0 <= v <= 200.0

    def test_quadrature_converged_at_default_nodes(self, decay_ctx):
        for fn in (conditional_payoff_changing_list, conditional_payoff_no_list):
            coarse = fn(decay_ctx, 2.0, n_nodes=201)
            fine = fn(decay_ctx, 2.0, n_nodes=401)
            assert abs(coarse - fine) / fine < 1e-6


def test_poisson_count_weighting_identity():
    # the code paths sum over offer counts through the closed exponential
    # form; verify it against the truncated series
    for q in (0.3, 0.9):
        for big_lam in (1.0, 10.0):
            series = sum(math.exp(-big_lam + n * math.log(big_lam) - math.lgamma(n + 1))
                         * q ** n for n in range(200))
            assert series == pytest.approx(math.exp(big_lam * (q - 1.0)), rel=1e-8)


class TestExpectedPayoff:
    def ctx_factory(self):
        demand = DemandParams(0.5, 1000.0)
        offers = UniformOffers(100.0, 200.0)
        withdrawals = ExponentialWithdrawals(10.0)
        sched = lambda T: 140.0 + 60.0 * np.exp(-np.asarray(T, dtype=float))

        def factory(path):
            return PathContext(path=path, list_schedule=sched, offers=offers,
                               withdrawals=withdrawals, reservation=140.0,
                               demand=demand)

        return factory

    def test_zero_vol_collapses_to_single_path(self, sim_cir):
        frozen = CirParams(sim_cir.kappa, sim_cir.theta, 0.0, sim_cir.r0)
        mean, stderr = expected_payoff(self.ctx_factory(), frozen, 1.0, 16, seed=1,
                                       mode="none")
        assert stderr == 0.0
        path = sigma0_table2_path(1.5)
        single = conditional_payoff_no_list(table2_context(path), 1.0)
        assert mean == pytest.approx(single, rel=1e-10)

    def test_seed_stability(self, sim_cir):
        m1, s1 = expected_payoff(self.ctx_factory(), sim_cir, 1.0, 300, seed=1,
                                 mode="changing")
        m2, s2 = expected_payoff(self.ctx_factory(), sim_cir, 1.0, 300, seed=2,
                                 mode="changing")
        assert abs(m1 - m2) <= 3.0 * math.hypot(s1, s2)

    def test_clt_scaling(self, sim_cir):
        _, s1 = expected_payoff(self.ctx_factory(), sim_cir, 1.0, 300, seed=3,
                                mode="none")
        _, s2 = expected_payoff(self.ctx_factory(), sim_cir, 1.0, 600, seed=3,
                                mode="none")
        assert s2 / s1 == pytest.approx(1.0 / math.sqrt(2.0), rel=0.2)

    def test_workers_do_not_change_results(self, sim_cir):
        serial = expected_payoff(self.ctx_factory(), sim_cir, 0.5, 64, seed=4,
                                 mode="none")
        threaded = expected_payoff(self.ctx_factory(), sim_cir, 0.5, 64, seed=4,
                                   mode="none", workers=4)
        assert serial == threaded

    def test_rejects_single_path(self, sim_cir):
        with pytest.raises(ValueError):
            expected_payoff(self.ctx_factory(), sim_cir, 1.0, 1, seed=0)
