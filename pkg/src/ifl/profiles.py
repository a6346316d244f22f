"""Hitting-probability test profiles and the entropy lower bound.

``hitting_probability`` solves the discrete Dirichlet problem for
h(i) = P_i[walk hits the origin before leaving the box]; scaling it by an
amplitude R gives the profile whose Dirichlet energy controls the tail
probability of the field at the origin:

    P(|phi_0| >= R)  >=  (1/2) exp(-2 (B + 1/e)),
    B = c * S_int + c * S_bd,

where ``S_int = 1/2 sum_{i,j in box} p(i-j)(f_i - f_j)^2`` and
``S_bd = sum_{i in box, j outside} p(i-j) f_i^2`` are the two raw
Dirichlet sums of the profile and c is the potential's curvature ceiling.
``theorem_floor`` evaluates the bound at the amplitude R = T sqrt(ln N)
(natural logarithm; any base change is absorbed into constants).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatchError, NoConvergenceError, NonpositiveCurvatureError
from .lattice import BoxGeometry, Field, WalkKernel, neighbor_table

ENTROPY_OFFSET = math.exp(-1.0)


def hitting_probability(geometry: BoxGeometry, kernel: WalkKernel) -> Field:
    """Probability of hitting the origin before exiting the box, per start site.

    The solution satisfies h(0) = 1, h = 0 off the box, and is discretely
    harmonic (residual below 1e-10) everywhere else in the box.
    """
    geom = geometry
    if geom.N < 0 or geom.interior_pos[geom.flat_index(0, 0)] < 0:
        raise ValueError("origin must be interior")
    n = geom.n_interior
    origin = geom.origin_interior
    if n == 1:
        return Field.from_interior(geom, np.ones(1))

    t = neighbor_table(geom, kernel)
    keep = np.ones(n, dtype=bool)
    keep[origin] = False
    sub_of = np.cumsum(keep) - 1  # interior index -> reduced index

    k = t.weights.size
    rows_all = np.repeat(np.arange(n, dtype=np.int64), k)
    cols_all = t.nbr_pos.ravel()
    vals_all = np.broadcast_to(t.weights, (n, k)).ravel()

    live = keep[rows_all] & (cols_all < n)
    to_origin = live & (cols_all == origin)
    interior_pair = live & (cols_all != origin) & keep[np.clip(cols_all, 0, n - 1)]

    m = n - 1
    off = sp.coo_matrix(
        (-vals_all[interior_pair], (sub_of[rows_all[interior_pair]], sub_of[cols_all[interior_pair]])),
        shape=(m, m),
    )
    A = (sp.identity(m, format="csr") + off.tocsr()).tocsr()
    b = np.zeros(m)
    np.add.at(b, sub_of[rows_all[to_origin]], vals_all[to_origin])

    h_sub, info = spla.cg(A, b, rtol=1e-12, atol=0.0, maxiter=10 * n)
    if info != 0:
        raise NoConvergenceError(f"hitting-probability CG returned info={info}")
    resid = A @ h_sub - b
    if np.max(np.abs(resid)) > 1e-10:
        raise NoConvergenceError(f"harmonicity residual {np.max(np.abs(resid)):.3e} above 1e-10")

    h = np.empty(n)
    h[keep] = h_sub
    h[origin] = 1.0
    # exact solution is strictly positive; clip solver noise only
    return Field.from_interior(geom, np.clip(h, 0.0, 1.0))


def test_profile(h: Field, R: float) -> Field:
    """Profile R*h: amplitude R at the origin, zero off the box."""
    return Field(h.geometry, R * h.values)


test_profile.__test__ = False  # name is the API, not a pytest case


def dirichlet_form(phibar: Field, kernel: WalkKernel, geometry: BoxGeometry) -> tuple[float, float]:
    """Raw Dirichlet sums (S_int, S_bd) of a profile vanishing on the collar."""
    if phibar.geometry != geometry:
        raise DimensionMismatchError("profile does not match the geometry")
    if np.any(phibar.values[geometry.collar_flat] != 0.0):
        raise ValueError("profile must vanish on the boundary collar")
    t = neighbor_table(geometry, kernel)
    center = phibar.values[geometry.interior_flat]
    nbr = phibar.values[t.nbr_flat]
    diff2 = (center[:, None] - nbr) ** 2
    # the table enumerates ordered pairs, exactly the double sum in S_int
    s_int = 0.5 * float(np.sum(np.where(t.nbr_interior, t.weights * diff2, 0.0)))
    s_bd = float(np.sum(np.where(~t.nbr_interior, t.weights * center[:, None] ** 2, 0.0)))
    return s_int, s_bd


@dataclass(frozen=True)
class EntropyBudget:
    """Dirichlet-energy budget of a shift profile and the tail floor it buys."""

    interior: float
    boundary: float
    bound_B: float
    tail_floor: float

    @classmethod
    def from_sums(cls, s_int: float, s_bd: float, c: float) -> "EntropyBudget":
        interior = c * s_int
        boundary = c * s_bd
        bound = interior + boundary
        floor = 0.5 * math.exp(-2.0 * (bound + ENTROPY_OFFSET))
        return cls(interior=interior, boundary=boundary, bound_B=bound, tail_floor=floor)


def entropy_bound(
    phibar: Field, kernel: WalkKernel, geometry: BoxGeometry, c: float
) -> EntropyBudget:
    """Entropy budget of shifting the measure by ``phibar`` under ceiling ``c``."""
    if not c > 0:
        raise NonpositiveCurvatureError(f"curvature ceiling must be positive, got {c!r}")
    s_int, s_bd = dirichlet_form(phibar, kernel, geometry)
    return EntropyBudget.from_sums(s_int, s_bd, c)


def theorem_floor(geometry: BoxGeometry, kernel: WalkKernel, c: float, T: float) -> EntropyBudget:
    """Tail floor for |phi_0| >= T sqrt(ln N) from the hitting profile at R = T sqrt(ln N)."""
    if geometry.N < 2:
        raise ValueError("need N >= 2 so that ln N > 0")
    if not T > 0:
        raise ValueError("T must be positive")
    h = hitting_probability(geometry, kernel)
    R = T * math.sqrt(math.log(geometry.N))
    phibar = test_profile(h, R)
    return entropy_bound(phibar, kernel, geometry, c)


def scale_amplitude(geometry: BoxGeometry, T: float) -> float:
    """The threshold R = T sqrt(ln N) used by the floor and the tail experiments."""
    return T * math.sqrt(math.log(geometry.N))
