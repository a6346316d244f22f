from __future__ import annotations

import math

import numpy as np
import pytest

from ifl import (
    BoxGeometry,
    Field,
    NonpositiveCurvatureError,
    PrecisionOperator,
    dirichlet_form,
    entropy_bound,
    exact_shift_kl,
    hitting_probability,
    test_profile,
    theorem_floor,
)
from ifl.lattice import neighbor_table
from ifl.profiles import ENTROPY_OFFSET, EntropyBudget
from conftest import random_profile

FLOOR_AT_ZERO = 0.5 * math.exp(-2.0 * ENTROPY_OFFSET)


def hitting_oracle_n1(kernel) -> dict[tuple[int, int], float]:
    """Independent 8-unknown dense solve of the N=1 Dirichlet system."""
    sites = [(x, y) for x in (-1, 0, 1) for y in (-1, 0, 1) if (x, y) != (0, 0)]
    index = {s: i for i, s in enumerate(sites)}
    a = np.eye(8)
    b = np.zeros(8)
    for s, i in index.items():
        for (dx, dy), w in zip(kernel.offsets, kernel.weights):
            nbr = (s[0] + dx, s[1] + dy)
            if nbr == (0, 0):
                b[i] += w
            elif nbr in index:
                a[i, index[nbr]] -= w
    h = np.linalg.solve(a, b)
    return {s: h[i] for s, i in index.items()}


class TestHittingProbability:
    def test_boundary_conditions(self, nn_kernel):
        geom = BoxGeometry(N=3, range=1)
        h = hitting_probability(geom, nn_kernel)
        assert h.at(0, 0) == 1.0
        assert np.all(h.values[geom.collar_flat] == 0.0)

    def test_n1_closed_form(self, nn_kernel):
        # edge sites: 1/3, corner sites: 1/6 (two-unknown symmetry reduction)
        geom = BoxGeometry(N=1, range=1)
        h = hitting_probability(geom, nn_kernel)
        for s in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            assert h.at(*s) == pytest.approx(1.0 / 3.0, abs=1e-10)
        for s in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            assert h.at(*s) == pytest.approx(1.0 / 6.0, abs=1e-10)

    def test_n1_dense_oracle(self, nn_kernel):
        geom = BoxGeometry(N=1, range=1)
        h = hitting_probability(geom, nn_kernel)
        for site, val in hitting_oracle_n1(nn_kernel).items():
            assert h.at(*site) == pytest.approx(val, abs=1e-10)

    def test_harmonicity_residual(self, nn_kernel):
        geom = BoxGeometry(N=5, range=1)
        h = hitting_probability(geom, nn_kernel)
        t = neighbor_table(geom, nn_kernel)
        avg = np.sum(t.weights * h.values[t.nbr_flat], axis=1)
        resid = np.abs(h.interior() - avg)
        resid[geom.origin_interior] = 0.0  # pinned site
        assert np.max(resid) <= 1e-10

    def test_maximum_principle(self, nn_kernel):
        geom = BoxGeometry(N=6, range=1)
        h = hitting_probability(geom, nn_kernel)
        vals = h.interior()
        assert vals.max() == h.at(0, 0) == 1.0
        assert vals.min() >= 0.0
        inside = np.delete(vals, geom.origin_interior)
        assert inside.max() < 1.0


class TestTestProfile:
    def test_zero_amplitude(self, nn_kernel):
        h = hitting_probability(BoxGeometry(N=2, range=1), nn_kernel)
        assert np.all(test_profile(h, 0.0).values == 0.0)

    def test_amplitude_at_origin(self, nn_kernel):
        h = hitting_probability(BoxGeometry(N=2, range=1), nn_kernel)
        assert test_profile(h, 3.0).at(0, 0) == 3.0

    def test_linearity(self, nn_kernel):
        h = hitting_probability(BoxGeometry(N=2, range=1), nn_kernel)
        assert np.array_equal(
            test_profile(h, 2.4).values * 2.0, test_profile(h, 4.8).values
        )


class TestDirichletForm:
    def test_zero_profile(self, nn_kernel):
        geom = BoxGeometry(N=1, range=1)
        assert dirichlet_form(Field.zeros(geom), nn_kernel, geom) == (0.0, 0.0)

    def test_single_site(self, nn_kernel):
        geom = BoxGeometry(N=0, range=1)
        prof = Field.from_interior(geom, np.array([3.0]))
        s_int, s_bd = dirichlet_form(prof, nn_kernel, geom)
        assert s_int == 0.0
        assert s_bd == pytest.approx(9.0, abs=1e-14)

    def test_collar_support_rejected(self, nn_kernel):
        geom = BoxGeometry(N=1, range=1)
        with pytest.raises(ValueError, match="collar"):
            dirichlet_form(Field(geom, np.ones(geom.n_sites)), nn_kernel, geom)

    def test_sums_equal_precision_energy(self, nn_kernel):
        # summation-by-parts identity against the sparse operator
        geom = BoxGeometry(N=4, range=1)
        op = PrecisionOperator(geom, nn_kernel)
        for seed in (1, 2, 3):
            prof = random_profile(geom, seed)
            s_int, s_bd = dirichlet_form(prof, nn_kernel, geom)
            x = prof.interior()
            assert s_int + s_bd == pytest.approx(float(x @ (op.matrix @ x)), abs=1e-10)

    def test_n1_hitting_energy_closed_form(self, nn_kernel):
        # with h = (1, 1/3 x4, 1/6 x4) only the pinned site carries flux:
        # <h, Q h> = 1 - 4*(1/4)*(1/3) = 2/3
        geom = BoxGeometry(N=1, range=1)
        h = hitting_probability(geom, nn_kernel)
        s_int, s_bd = dirichlet_form(h, nn_kernel, geom)
        assert s_int + s_bd == pytest.approx(2.0 / 3.0, abs=1e-10)


class TestEntropyBound:
    def test_zero_profile_floor(self, nn_kernel):
        geom = BoxGeometry(N=1, range=1)
        budget = entropy_bound(Field.zeros(geom), nn_kernel, geom, 1.0)
        assert budget.bound_B == 0.0
        assert budget.tail_floor == pytest.approx(FLOOR_AT_ZERO, abs=1e-15)
        # (1/2) exp(-2/e) = 0.239571, computed directly
        assert budget.tail_floor == pytest.approx(0.23957, abs=5e-5)

    def test_single_site_bound(self, nn_kernel):
        geom = BoxGeometry(N=0, range=1)
        r = 1.7
        prof = Field.from_interior(geom, np.array([r]))
        budget = entropy_bound(prof, nn_kernel, geom, 1.0)
        assert budget.bound_B == pytest.approx(r * r, abs=1e-12)
        assert budget.tail_floor == pytest.approx(
            0.5 * math.exp(-2.0 * (r * r + ENTROPY_OFFSET)), abs=1e-15
        )

    def test_nonpositive_curvature_rejected(self, nn_kernel):
        geom = BoxGeometry(N=1, range=1)
        with pytest.raises(NonpositiveCurvatureError):
            entropy_bound(Field.zeros(geom), nn_kernel, geom, 0.0)

    def test_quadratic_scaling_exact_for_power_of_two(self, nn_kernel):
        geom = BoxGeometry(N=3, range=1)
        prof = random_profile(geom, 5)
        doubled = Field(geom, 2.0 * prof.values)
        b1 = entropy_bound(prof, nn_kernel, geom, 1.3).bound_B
        b2 = entropy_bound(doubled, nn_kernel, geom, 1.3).bound_B
        assert b2 == 4.0 * b1

    def test_quadratic_scaling_general(self, nn_kernel):
        geom = BoxGeometry(N=3, range=1)
        prof = random_profile(geom, 6)
        lam = 1.7
        b1 = entropy_bound(prof, nn_kernel, geom, 1.0).bound_B
        b2 = entropy_bound(Field(geom, lam * prof.values), nn_kernel, geom, 1.0).bound_B
        assert b2 == pytest.approx(lam**2 * b1, rel=1e-12)

    def test_floor_decreasing_in_bound(self):
        budgets = [EntropyBudget.from_sums(s, 0.0, 1.0) for s in (0.0, 0.5, 1.0, 2.0)]
        floors = [b.tail_floor for b in budgets]
        assert all(a > b for a, b in zip(floors, floors[1:]))

    def test_kl_identity_quadratic(self, nn_kernel):
        # c=1 ties the symmetrization factor 2 to the exact Gaussian entropy
        geom = BoxGeometry(N=8, range=1)
        op = PrecisionOperator(geom, nn_kernel)
        for seed in (11, 12, 13):
            prof = random_profile(geom, seed)
            budget = entropy_bound(prof, nn_kernel, geom, 1.0)
            assert budget.bound_B == pytest.approx(
                2.0 * exact_shift_kl(op, prof), abs=1e-10
            )


class TestTheoremFloor:
    def test_requires_n_at_least_two(self, nn_kernel):
        with pytest.raises(ValueError):
            theorem_floor(BoxGeometry(N=1, range=1), nn_kernel, 1.0, 1.0)
        with pytest.raises(ValueError):
            theorem_floor(BoxGeometry(N=4, range=1), nn_kernel, 1.0, 0.0)

    def test_small_t_limit(self, nn_kernel):
        budget = theorem_floor(BoxGeometry(N=8, range=1), nn_kernel, 1.0, 1e-9)
        assert budget.tail_floor == pytest.approx(FLOOR_AT_ZERO, rel=1e-9)

    def test_floor_in_valid_range(self, nn_kernel):
        budget = theorem_floor(BoxGeometry(N=16, range=1), nn_kernel, 1.5, 0.5)
        assert 0.0 < budget.tail_floor <= 0.5
        assert budget.bound_B > 0.0

    def test_n_uniformity_with_reference_constant(self, nn_kernel):
        # fit c* at the N=16 reference with the standard 1.5 band allowance;
        # the floor at larger boxes then stays above exp(-c* T^2)
        t = 0.8
        ref = theorem_floor(BoxGeometry(N=16, range=1), nn_kernel, 1.0, t)
        c_star = 1.5 * (2.0 * ref.bound_B + 2.0 * ENTROPY_OFFSET + math.log(2.0)) / t**2
        for n in (32, 64, 128):
            floor = theorem_floor(BoxGeometry(N=n, range=1), nn_kernel, 1.0, t).tail_floor
            assert floor >= math.exp(-c_star * t * t)
