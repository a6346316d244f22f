from __future__ import annotations

import math

import numpy as np
import pytest

from ifl import (
    BoxGeometry,
    ChainConfig,
    EmptySeriesError,
    Field,
    GibbsModel,
    PrecisionOperator,
    SeriesTooShortError,
    anharmonic_potential,
    autocorrelation_time,
    local_energy_delta,
    metropolis_step,
    nearest_neighbor_kernel,
    quadratic_potential,
    quenched_mean,
    run_chain,
    tail_estimate,
    wilson_interval,
)
from ifl.mcmc import _tau_details
from conftest import make_disorder


def model_for(n: int, potential=None, eta: Field | None = None) -> GibbsModel:
    geom = BoxGeometry(N=n, range=1)
    return GibbsModel(
        geom,
        nearest_neighbor_kernel(),
        potential or quadratic_potential(),
        eta if eta is not None else Field.zeros(geom),
        Field.zeros(geom),
    )


class TestChainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChainConfig(sweeps=10, burn_in=10)
        with pytest.raises(ValueError):
            ChainConfig(sweeps=10, burn_in=2, proposal_width=0.0)
        with pytest.raises(ValueError):
            ChainConfig(sweeps=10, burn_in=2, thinning=0)


class TestEngines:
    def test_batched_equals_sequential(self):
        # the DAG-level batching must reproduce the per-site permutation
        # order exactly, not just in distribution
        model = model_for(3, anharmonic_potential(0.5), make_disorder(BoxGeometry(3, 1), 0.5, 1))
        cc = ChainConfig(sweeps=300, burn_in=80, seed=1234)
        a = run_chain(cc, model, engine="python")
        b = run_chain(cc, model, engine="batched")
        assert np.array_equal(a.series, b.series)
        assert a.acceptance_rate == b.acceptance_rate

    def test_deterministic_given_seed(self):
        model = model_for(2)
        cc = ChainConfig(sweeps=200, burn_in=50, seed=77)
        a = run_chain(cc, model)
        b = run_chain(cc, model)
        assert np.array_equal(a.series, b.series)

    def test_different_seeds_differ(self):
        model = model_for(2)
        a = run_chain(ChainConfig(sweeps=200, burn_in=50, seed=1), model)
        b = run_chain(ChainConfig(sweeps=200, burn_in=50, seed=2), model)
        assert not np.array_equal(a.series, b.series)

    def test_thinning_and_count(self):
        model = model_for(1)
        r = run_chain(ChainConfig(sweeps=1050, burn_in=50, seed=3, thinning=10), model)
        assert r.n_samples == 100

    def test_snapshots(self):
        model = model_for(1)
        r = run_chain(ChainConfig(sweeps=300, burn_in=100, seed=4), model, snapshot_every=50)
        assert len(r.snapshots) == 4
        assert r.snapshots[0].shape == (model.geometry.n_interior,)

    def test_extreme_start_relaxes_without_overflow(self):
        # huge energies saturate to deterministic reject/accept, no warnings
        geom = BoxGeometry(N=1, range=1)
        init = Field.from_interior(geom, np.full(geom.n_interior, 1e3))
        model = model_for(1)
        with np.errstate(over="raise"):
            r = run_chain(ChainConfig(sweeps=500, burn_in=0, seed=5), model, init=init)
        assert abs(r.series[-1]) < 1e3


class TestMetropolisStep:
    def test_mutates_on_accept_only(self):
        model = model_for(0)
        rng = np.random.default_rng(9)
        phi = Field.zeros(model.geometry)
        flat = model.geometry.flat_index(0, 0)
        for _ in range(200):
            before = phi.values[flat]
            _, accepted = metropolis_step(phi, (0, 0), 1.0, model, rng)
            if not accepted:
                assert phi.values[flat] == before

    def test_stationary_variance_single_site(self):
        # quadratic, zero disorder: unit Gaussian marginal
        model = model_for(0)
        r = run_chain(ChainConfig(sweeps=1_000_000, burn_in=10_000, seed=21), model)
        assert r.series.var() == pytest.approx(1.0, abs=0.01)
        assert 0.2 < r.acceptance_rate < 0.8

    def test_energy_drift_from_far_start(self):
        # from phi=50 the energy gradient dominates: the chain drifts down
        # to the bulk within a few hundred steps and never overflows
        model = model_for(0)
        rng = np.random.default_rng(10)
        geom = model.geometry
        phi = Field.zeros(geom)
        flat = geom.flat_index(0, 0)
        phi.values[flat] = 50.0
        with np.errstate(over="raise"):
            for _ in range(500):
                metropolis_step(phi, (0, 0), 2.0, model, rng)
        assert abs(phi.values[flat]) < 10.0


class TestDetailedBalance:
    def test_discrete_toy_chain_reversible(self):
        # N=0 model, phi restricted to a 5-point grid with +-1-step proposals;
        # stationary counts must satisfy the flow-reversal identity
        model = model_for(0)
        geom = model.geometry
        eta = Field.zeros(geom)
        eta.values[geom.flat_index(0, 0)] = 0.3
        model = GibbsModel(geom, model.kernel, model.potential, eta, model.bc)
        step = 0.8
        rng = np.random.default_rng(31)
        zero = Field.zeros(geom)

        def delta_h(a: int, b: int) -> float:
            phi = Field.zeros(geom)
            phi.values[geom.flat_index(0, 0)] = a * step
            return local_energy_delta(
                phi, (0, 0), b * step, model.eta, model.bc, model.kernel, model.potential
            )

        counts = {}
        state = 0
        for _ in range(300_000):
            prop = state + (1 if rng.random() < 0.5 else -1)
            if -2 <= prop <= 2:
                dh = delta_h(state, prop)
                if dh <= 0 or rng.random() < math.exp(-dh):
                    counts[(state, prop)] = counts.get((state, prop), 0) + 1
                    state = prop
        for a in range(-2, 2):
            fwd = counts.get((a, a + 1), 0)
            bwd = counts.get((a + 1, a), 0)
            assert abs(fwd - bwd) <= 3.5 * math.sqrt(fwd + bwd + 1)


class TestQuenchedSymmetry:
    def test_sign_flip_mirrors_one_sided_probability(self):
        # P(phi_0 >= 0) under eta equals P(phi_0 <= 0) under -eta
        geom = BoxGeometry(N=1, range=1)
        eta = make_disorder(geom, 0.5, 41)
        pot = anharmonic_potential(0.5)
        kernel = nearest_neighbor_kernel()
        m_plus = GibbsModel(geom, kernel, pot, eta, Field.zeros(geom))
        m_minus = GibbsModel(geom, kernel, pot, Field(geom, -eta.values), Field.zeros(geom))
        r_plus = run_chain(ChainConfig(sweeps=60_000, burn_in=5_000, seed=51), m_plus)
        r_minus = run_chain(ChainConfig(sweeps=60_000, burn_in=5_000, seed=52), m_minus)
        p1 = float(np.mean(r_plus.series >= 0.0))
        p2 = float(np.mean(r_minus.series <= 0.0))
        se = 2.0 / math.sqrt(
            min(tail_estimate(r_plus.series, 0.0).n_effective,
                tail_estimate(r_minus.series, 0.0).n_effective)
        )
        assert abs(p1 - p2) <= 3.0 * se


class TestAgainstGaussianMean:
    def test_sample_mean_matches_quenched_mean(self):
        kernel = nearest_neighbor_kernel()
        geom = BoxGeometry(N=4, range=1)
        op = PrecisionOperator(geom, kernel)
        bc = Field.zeros(geom)
        for seed in range(5):
            eta = make_disorder(geom, 1.0, 60 + seed)
            model = GibbsModel(geom, kernel, quadratic_potential(), eta, bc)
            mean = quenched_mean(op, eta, bc)
            r = run_chain(
                ChainConfig(sweeps=12_000, burn_in=2_000, seed=70 + seed),
                model,
                init=mean,
            )
            tau = autocorrelation_time(r.series)
            n_eff = r.series.size / (2 * tau)
            se = r.series.std() / math.sqrt(n_eff)
            assert abs(r.series.mean() - mean.at(0, 0)) <= 4.0 * se


class TestTailEstimate:
    def test_empty_series(self):
        with pytest.raises(EmptySeriesError):
            tail_estimate(np.array([]), 1.0)

    def test_r_zero_is_certain(self):
        est = tail_estimate(np.random.default_rng(1).standard_normal(500), 0.0)
        assert est.p_hat == 1.0
        assert est.ci_high == 1.0

    def test_no_exceedance_still_informative(self):
        est = tail_estimate(np.random.default_rng(2).standard_normal(500) * 0.1, 5.0)
        assert est.p_hat == 0.0
        assert est.ci_high > 0.0
        assert est.ci_low == 0.0

    def test_invariants(self):
        series = np.random.default_rng(3).standard_normal(5000)
        est = tail_estimate(series, 1.0)
        assert est.ci_low <= est.p_hat <= est.ci_high
        assert est.n_effective <= est.n_samples
        assert est.tau_int >= 0.5

    def test_one_sided(self):
        series = np.random.default_rng(4).standard_normal(5000) + 10.0
        est = tail_estimate(series, 0.0, two_sided=False)
        assert est.p_hat == 1.0


class TestAutocorrelation:
    def test_too_short(self):
        with pytest.raises(SeriesTooShortError):
            autocorrelation_time(np.ones(50))

    def test_iid_value(self):
        series = np.random.default_rng(11).standard_normal(100_000)
        assert autocorrelation_time(series) == pytest.approx(0.5, abs=0.1)

    def test_constant_series_capped_and_flagged(self):
        details = _tau_details(np.ones(500))
        assert details.tau == 250.0
        assert details.capped

    def test_ar1_analytic_value(self):
        rho = 0.9
        rng = np.random.default_rng(12)
        n = 200_000
        eps = rng.standard_normal(n) * math.sqrt(1 - rho * rho)
        series = np.empty(n)
        series[0] = 0.0
        for i in range(1, n):
            series[i] = rho * series[i - 1] + eps[i]
        assert autocorrelation_time(series) == pytest.approx(9.5, abs=1.5)


class TestWilson:
    def test_bounds(self):
        lo, hi = wilson_interval(0.5, 100)
        assert 0.0 <= lo <= 0.5 <= hi <= 1.0

    def test_never_degenerate_at_zero(self):
        lo, hi = wilson_interval(0.0, 50)
        assert lo == 0.0
        assert hi > 0.0
