"""Box geometry, walk kernels, pair potentials, fields and the Hamiltonian.

The model lives on the square box of sidelength ``2N+1`` centered at the
origin of the 2D integer lattice.  Sites within ``range`` of the box (in
max-norm) form the frozen boundary collar; arrays are laid out row-major
over the padded square of sidelength ``2(N+range)+1``.  A spin
configuration assigns one real value per padded site; collar values are
read from the boundary-condition field and never updated.

The energy of a configuration ``phi`` with disorder ``eta`` and boundary
condition ``bc`` is

    H = 1/2 sum_{i,j in box} p(i-j) V(phi_i - phi_j)
        + sum_{i in box, j outside} p(i-j) V(phi_i - bc_j)
        - sum_{i in box} eta_i phi_i

so that the Gibbs weight of ``phi`` is ``exp(-H)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import (
    AsymmetricKernelError,
    DimensionMismatchError,
    NotNormalizedError,
    ReducibleKernelError,
    SelfJumpPresentError,
    SiteOutsideInteriorError,
)

Offset = tuple[int, int]


@dataclass(frozen=True)
class BoxGeometry:
    """Square box of half-sidelength ``N`` padded by a collar of width ``range``."""

    N: int
    range: int

    def __post_init__(self) -> None:
        if self.N < 0:
            raise ValueError("N must be non-negative")
        if self.range < 1:
            raise ValueError("kernel range must be positive")

    @cached_property
    def pad(self) -> int:
        return self.N + self.range

    @cached_property
    def side(self) -> int:
        """Sidelength of the padded square."""
        return 2 * self.pad + 1

    @cached_property
    def n_sites(self) -> int:
        return self.side * self.side

    @cached_property
    def n_interior(self) -> int:
        return (2 * self.N + 1) ** 2

    @cached_property
    def interior_flat(self) -> np.ndarray:
        """Padded-flat indices of interior sites, row-major."""
        xs = np.arange(self.side) - self.pad
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        mask = (np.abs(X) <= self.N) & (np.abs(Y) <= self.N)
        return np.flatnonzero(mask.ravel())

    @cached_property
    def collar_flat(self) -> np.ndarray:
        mask = np.ones(self.n_sites, dtype=bool)
        mask[self.interior_flat] = False
        return np.flatnonzero(mask)

    @cached_property
    def interior_pos(self) -> np.ndarray:
        """Map padded-flat index -> interior index, or -1 off the interior."""
        pos = np.full(self.n_sites, -1, dtype=np.int64)
        pos[self.interior_flat] = np.arange(self.n_interior)
        return pos

    @cached_property
    def interior_xy(self) -> tuple[np.ndarray, np.ndarray]:
        f = self.interior_flat
        return f // self.side - self.pad, f % self.side - self.pad

    @cached_property
    def origin_interior(self) -> int:
        """Interior index of the origin site."""
        return int(self.interior_pos[self.flat_index(0, 0)])

    def flat_index(self, x: int, y: int) -> int:
        if max(abs(x), abs(y)) > self.pad:
            raise IndexError(f"site ({x}, {y}) outside the padded square")
        return (x + self.pad) * self.side + (y + self.pad)

    def is_interior(self, x: int, y: int) -> bool:
        return max(abs(x), abs(y)) <= self.N


@dataclass(frozen=True)
class WalkKernel:
    """Finite-range symmetric step distribution on lattice offsets."""

    offsets: tuple[Offset, ...]
    weights: tuple[float, ...]
    range: int

    @cached_property
    def offset_array(self) -> np.ndarray:
        return np.asarray(self.offsets, dtype=np.int64)

    @cached_property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    def weight_of(self, offset: Offset) -> float:
        try:
            return self.weights[self.offsets.index(offset)]
        except ValueError:
            return 0.0


def validate_kernel(
    weights: Mapping[Offset, float] | Iterable[tuple[Offset, float]],
    range: int | None = None,
) -> WalkKernel:
    """Check kernel invariants and return the validated :class:`WalkKernel`.

    Enforced: symmetry ``p(v) == p(-v)``, normalization to 1 within 1e-12,
    positive weights, no self-jump, finite range, and irreducibility
    (reachability closure from the origin on a bounded patch must cover the
    patch).  Aperiodicity is deliberately not checked; the nearest-neighbor
    kernel is periodic and is still the reference example.
    """
    pairs = list(weights.items()) if isinstance(weights, Mapping) else list(weights)
    if not pairs:
        raise ValueError("kernel needs at least one offset")
    table: dict[Offset, float] = {}
    for off, w in pairs:
        off = (int(off[0]), int(off[1]))
        if off in table:
            raise ValueError(f"duplicate offset {off}")
        if not w > 0:
            raise ValueError(f"weight for offset {off} must be positive")
        table[off] = float(w)

    if (0, 0) in table:
        raise SelfJumpPresentError("the zero offset is not a walk step")
    for off, w in table.items():
        neg = (-off[0], -off[1])
        wneg = table.get(neg)
        if wneg is None or abs(w - wneg) > 1e-12 * max(1.0, abs(w)):
            raise AsymmetricKernelError(f"weight({off}) != weight({neg})")
    total = math.fsum(table.values())
    if abs(total - 1.0) > 1e-12:
        raise NotNormalizedError(f"kernel weights sum to {total!r}, not 1")

    max_norm = max(max(abs(dx), abs(dy)) for dx, dy in table)
    if range is None:
        range = max_norm
    elif max_norm > range:
        raise ValueError(f"offset max-norm {max_norm} exceeds declared range {range}")

    _check_irreducible(tuple(table), range)

    offs = tuple(sorted(table))
    return WalkKernel(offsets=offs, weights=tuple(table[o] for o in offs), range=range)


def _check_irreducible(offsets: tuple[Offset, ...], rng: int) -> None:
    # BFS from the origin by +-offsets on a bounded patch: an irreducible
    # kernel reaches the whole patch, a sublattice kernel leaves holes.
    radius = max(4, 4 * rng)
    side = 2 * radius + 1
    reached = np.zeros((side, side), dtype=bool)
    reached[radius, radius] = True
    frontier = [(0, 0)]
    while frontier:
        nxt = []
        for x, y in frontier:
            for dx, dy in offsets:
                nx, ny = x + dx, y + dy
                if max(abs(nx), abs(ny)) <= radius and not reached[nx + radius, ny + radius]:
                    reached[nx + radius, ny + radius] = True
                    nxt.append((nx, ny))
        frontier = nxt
    if not reached.all():
        raise ReducibleKernelError(
            "kernel offsets do not generate the lattice "
            f"({int(reached.sum())}/{side * side} patch sites reachable)"
        )


def nearest_neighbor_kernel() -> WalkKernel:
    """Weight 1/4 on each of the four nearest-neighbor steps."""
    return validate_kernel({(1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.25, (0, -1): 0.25})


@dataclass(frozen=True)
class PotentialSpec:
    """Even pair potential with a declared curvature ceiling.

    ``V`` and ``Vprime`` must accept numpy arrays.  ``scalar_V``, when
    given, is a pure-float fast path used by the small-lattice sampler.
    The ceiling ``curvature_ceiling`` is spot-checked by finite
    differences on a bounded grid at construction; no lower curvature
    bound is required (the potential may be non-convex).
    ``growth_exponent`` documents the superlinear growth guaranteeing a
    normalizable Gibbs weight; it is not verified symbolically.
    """

    name: str
    V: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    Vprime: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    curvature_ceiling: float
    growth_exponent: float
    scalar_V: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.curvature_ceiling > 0:
            raise ValueError("curvature ceiling must be positive")
        if not self.growth_exponent > 1:
            raise ValueError("growth exponent must exceed 1")
        self._spot_check()

    def _spot_check(self) -> None:
        t = np.linspace(-50.0, 50.0, 401)
        v = np.asarray(self.V(t), dtype=float)
        v_neg = np.asarray(self.V(-t), dtype=float)
        if np.max(np.abs(v - v_neg)) > 1e-10:
            raise ValueError(f"potential {self.name!r} is not even")
        h = 1e-3
        second = (self.V(t + h) - 2.0 * v + self.V(t - h)) / h**2
        worst = float(np.max(second))
        if worst > self.curvature_ceiling + 1e-6:
            raise ValueError(
                f"potential {self.name!r} exceeds its curvature ceiling: "
                f"V''<={worst:.6g} observed vs declared {self.curvature_ceiling:.6g}"
            )
        if abs(float(self.Vprime(0.0))) > 1e-10:
            raise ValueError("V'(0) must vanish for an even differentiable potential")


def quadratic_potential() -> PotentialSpec:
    """V(t) = t^2/2 with curvature ceiling 1 (the exactly-solvable case)."""
    return PotentialSpec(
        name="quadratic",
        V=lambda t: 0.5 * np.square(t),
        Vprime=lambda t: t,
        curvature_ceiling=1.0,
        growth_exponent=2.0,
        scalar_V=lambda t: 0.5 * t * t,
    )


def anharmonic_potential(beta: float) -> PotentialSpec:
    """V(t) = t^2/2 + beta(1 - cos t), ceiling 1 + beta; non-convex for beta > 1."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return PotentialSpec(
        name=f"anharmonic(beta={beta:g})",
        V=lambda t: 0.5 * np.square(t) + beta * (1.0 - np.cos(t)),
        Vprime=lambda t: t + beta * np.sin(t),
        curvature_ceiling=1.0 + beta,
        growth_exponent=2.0,
        scalar_V=lambda t: 0.5 * t * t + beta * (1.0 - math.cos(t)),
    )


@dataclass
class Field:
    """One real value per padded site of a geometry (interior plus collar)."""

    geometry: BoxGeometry
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.geometry.n_sites,):
            raise DimensionMismatchError(
                f"field has {self.values.shape} values, geometry needs ({self.geometry.n_sites},)"
            )

    @classmethod
    def zeros(cls, geometry: BoxGeometry) -> "Field":
        return cls(geometry, np.zeros(geometry.n_sites))

    @classmethod
    def from_interior(cls, geometry: BoxGeometry, interior_values: np.ndarray) -> "Field":
        """Field with the given interior values and zero collar."""
        vals = np.zeros(geometry.n_sites)
        vals[geometry.interior_flat] = interior_values
        return cls(geometry, vals)

    def interior(self) -> np.ndarray:
        return self.values[self.geometry.interior_flat]

    def at(self, x: int, y: int) -> float:
        return float(self.values[self.geometry.flat_index(x, y)])

    def copy(self) -> "Field":
        return Field(self.geometry, self.values.copy())


def flip_disorder(eta: Field) -> Field:
    """Pointwise sign flip of the disorder field (an involution)."""
    return Field(eta.geometry, -eta.values)


def zero_disorder(geometry: BoxGeometry) -> Field:
    return Field.zeros(geometry)


def gaussian_disorder(geometry: BoxGeometry, sigma: float, rng: np.random.Generator) -> Field:
    """I.i.d. centered Gaussian disorder of scale ``sigma`` on the interior."""
    return Field.from_interior(geometry, sigma * rng.standard_normal(geometry.n_interior))


def rademacher_disorder(geometry: BoxGeometry, eps: float, rng: np.random.Generator) -> Field:
    """I.i.d. +-eps disorder on the interior (symmetric, not integrable-dependent)."""
    signs = rng.integers(0, 2, geometry.n_interior) * 2 - 1
    return Field.from_interior(geometry, eps * signs.astype(np.float64))


@dataclass(frozen=True)
class NeighborTable:
    """Per-interior-site neighbor bookkeeping for one (geometry, kernel) pair."""

    nbr_flat: np.ndarray  # (n_interior, k) padded-flat index of site + offset
    nbr_interior: np.ndarray  # (n_interior, k) bool
    nbr_pos: np.ndarray  # (n_interior, k) interior index, n_interior where collar
    weights: np.ndarray  # (k,)


@lru_cache(maxsize=64)
def neighbor_table(geometry: BoxGeometry, kernel: WalkKernel) -> NeighborTable:
    x, y = geometry.interior_xy
    k = len(kernel.offsets)
    n = geometry.n_interior
    nbr_flat = np.empty((n, k), dtype=np.int64)
    for j, (dx, dy) in enumerate(kernel.offsets):
        nbr_flat[:, j] = (x + dx + geometry.pad) * geometry.side + (y + dy + geometry.pad)
    pos = geometry.interior_pos[nbr_flat]
    nbr_interior = pos >= 0
    nbr_pos = np.where(nbr_interior, pos, n)
    return NeighborTable(
        nbr_flat=nbr_flat,
        nbr_interior=nbr_interior,
        nbr_pos=nbr_pos,
        weights=kernel.weight_array.copy(),
    )


def _require_same_geometry(*fields: Field) -> BoxGeometry:
    geom = fields[0].geometry
    for f in fields[1:]:
        if f.geometry != geom:
            raise DimensionMismatchError("fields were built for different geometries")
    return geom


def total_energy(
    phi: Field,
    eta: Field,
    bc: Field,
    kernel: WalkKernel,
    potential: PotentialSpec,
) -> float:
    """Energy H(phi) whose Gibbs weight is exp(-H).

    Interior pairs are counted once with weight p(i-j); pairs from an
    interior site to the collar read the frozen boundary condition.
    """
    geom = _require_same_geometry(phi, eta, bc)
    t = neighbor_table(geom, kernel)
    center = phi.values[geom.interior_flat]
    nbr = np.where(t.nbr_interior, phi.values[t.nbr_flat], bc.values[t.nbr_flat])
    # ordered interior pairs are visited twice, hence the factor 1/2 there
    w = np.where(t.nbr_interior, 0.5 * t.weights, t.weights)
    energy = float(np.sum(w * potential.V(center[:, None] - nbr)))
    energy -= float(eta.values[geom.interior_flat] @ center)
    return energy


def local_energy_delta(
    phi: Field,
    site: Offset,
    new_value: float,
    eta: Field,
    bc: Field,
    kernel: WalkKernel,
    potential: PotentialSpec,
) -> float:
    """Energy change of setting ``phi[site] = new_value``, touching only its neighborhood."""
    geom = _require_same_geometry(phi, eta, bc)
    x, y = site
    if not geom.is_interior(x, y):
        raise SiteOutsideInteriorError(f"site {site} is not interior")
    t = neighbor_table(geom, kernel)
    flat = geom.flat_index(x, y)
    ii = int(geom.interior_pos[flat])
    nbf = t.nbr_flat[ii]
    psi = np.where(t.nbr_interior[ii], phi.values[nbf], bc.values[nbf])
    old = phi.values[flat]
    delta = float(np.sum(t.weights * (potential.V(new_value - psi) - potential.V(old - psi))))
    delta -= float(eta.values[flat]) * (new_value - old)
    return delta


@dataclass(frozen=True)
class GibbsModel:
    """Bundle of everything defining one quenched finite-volume measure."""

    geometry: BoxGeometry
    kernel: WalkKernel
    potential: PotentialSpec
    eta: Field
    bc: Field

    def __post_init__(self) -> None:
        if self.eta.geometry != self.geometry or self.bc.geometry != self.geometry:
            raise DimensionMismatchError("disorder/boundary fields do not match the geometry")
        if self.kernel.range > self.geometry.range:
            raise DimensionMismatchError(
                f"kernel range {self.kernel.range} exceeds collar width {self.geometry.range}"
            )

    def energy(self, phi: Field) -> float:
        return total_energy(phi, self.eta, self.bc, self.kernel, self.potential)

    def flipped(self) -> "GibbsModel":
        """Same model with the disorder sign flipped."""
        return GibbsModel(self.geometry, self.kernel, self.potential, flip_disorder(self.eta), self.bc)
