"""Experiment configuration: flat INI sections, validated and hashable.

Schema (all keys optional unless noted):

    [experiment]
    kind = gaussian-scaling | testfn-scaling | tail-check | oracle-validate   (required)
    seed = 20260808          master seed, overridable with --seed
    out  = results           output directory, overridable with --out

    [geometry]
    N = 16, 64               box half-sidelengths (required)

    [kernel]
    type = nearest-neighbor  or: offsets = dx dy weight; dx dy weight; ...
    range = 1

    [potential]
    name = quadratic | anharmonic
    beta = 0.5               anharmonic only
    curvature = 1.5          optional override of the declared ceiling

    [disorder]
    distribution = zero | gaussian | rademacher
    sigma = 0.5              gaussian scale
    epsilon = 1.0            rademacher magnitude
    draws = 1

    [chain]
    sweeps = 20000
    burn_in = 2000
    thinning = 1
    proposal_width = 1.0

    [tail]
    T = 0.5, 1.0

    [quadrature]
    cutoff = 12.0
    points_per_axis = 64
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

from .errors import ConfigError
from .lattice import (
    PotentialSpec,
    WalkKernel,
    anharmonic_potential,
    nearest_neighbor_kernel,
    quadratic_potential,
    validate_kernel,
)
from .quadrature import QuadratureSpec

KINDS = ("gaussian-scaling", "testfn-scaling", "tail-check", "oracle-validate")
DISORDER_KINDS = ("zero", "gaussian", "rademacher")


@dataclass(frozen=True)
class DisorderSpec:
    distribution: str = "zero"
    sigma: float = 1.0
    epsilon: float = 1.0
    draws: int = 1

    @property
    def parameter(self) -> float:
        if self.distribution == "gaussian":
            return self.sigma
        if self.distribution == "rademacher":
            return self.epsilon
        return 0.0


@dataclass(frozen=True)
class ChainSpec:
    sweeps: int = 20000
    burn_in: int = 2000
    thinning: int = 1
    proposal_width: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    out: str
    n_list: tuple[int, ...]
    kernel_pairs: tuple[tuple[tuple[int, int], float], ...]
    kernel_range: int
    potential_name: str
    potential_beta: float
    curvature: float
    disorder: DisorderSpec
    chain: ChainSpec
    t_list: tuple[float, ...]
    quadrature: QuadratureSpec
    threads: int = 1
    figures: bool = True
    source_items: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    def kernel(self) -> WalkKernel:
        return validate_kernel(dict(self.kernel_pairs), self.kernel_range)

    def potential(self) -> PotentialSpec:
        pot = _build_potential(self.potential_name, self.potential_beta)
        if self.curvature != pot.curvature_ceiling:
            pot = PotentialSpec(
                name=pot.name,
                V=pot.V,
                Vprime=pot.Vprime,
                curvature_ceiling=self.curvature,
                growth_exponent=pot.growth_exponent,
                scalar_V=pot.scalar_V,
            )
        return pot

    def hash(self) -> str:
        items = sorted(self.source_items)
        payload = "\n".join(f"{k} = {v}" for k, v in items)
        payload += f"\nseed = {self.seed}\nkind = {self.kind}"
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _build_potential(name: str, beta: float) -> PotentialSpec:
    if name == "quadratic":
        return quadratic_potential()
    if name == "anharmonic":
        return anharmonic_potential(beta)
    raise ConfigError(f"unknown potential {name!r}")


def _parse_int_list(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad integer list {raw!r}") from exc


def _parse_float_list(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad number list {raw!r}") from exc


def _parse_offsets(raw: str) -> dict[tuple[int, int], float]:
    table: dict[tuple[int, int], float] = {}
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        toks = chunk.split()
        if len(toks) != 3:
            raise ConfigError(f"kernel offset entry {chunk!r} must be 'dx dy weight'")
        try:
            table[(int(toks[0]), int(toks[1]))] = float(toks[2])
        except ValueError as exc:
            raise ConfigError(f"bad kernel offset entry {chunk!r}") from exc
    if not table:
        raise ConfigError("kernel offsets are empty")
    return table


def load_config(
    path: str,
    *,
    seed_override: int | None = None,
    out_override: str | None = None,
    threads: int = 1,
    figures: bool = True,
) -> ExperimentConfig:
    """Parse and validate an experiment configuration file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")

    def get(section: str, key: str, default: str | None = None) -> str | None:
        if parser.has_option(section, key):
            return parser.get(section, key).strip()
        return default

    kind = get("experiment", "kind")
    if kind not in KINDS:
        raise ConfigError(f"experiment kind must be one of {KINDS}, got {kind!r}")
    try:
        seed = int(get("experiment", "seed", "0"))
    except ValueError as exc:
        raise ConfigError("experiment seed must be an integer") from exc
    if seed_override is not None:
        seed = seed_override
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    out = out_override if out_override is not None else get("experiment", "out", "results")

    raw_n = get("geometry", "N")
    if raw_n is None:
        raise ConfigError("geometry section must list N values")
    n_list = _parse_int_list(raw_n)
    if not n_list or any(n < 0 for n in n_list):
        raise ConfigError("N values must be non-negative")

    ktype = get("kernel", "type", "nearest-neighbor")
    if ktype == "nearest-neighbor":
        pairs = {(1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.25, (0, -1): 0.25}
        krange_default = 1
    elif ktype == "custom":
        raw_off = get("kernel", "offsets")
        if raw_off is None:
            raise ConfigError("custom kernel needs an offsets entry")
        pairs = _parse_offsets(raw_off)
        krange_default = max(max(abs(dx), abs(dy)) for dx, dy in pairs)
    else:
        raise ConfigError(f"kernel type must be nearest-neighbor or custom, got {ktype!r}")
    krange = int(get("kernel", "range", str(krange_default)))

    pot_name = get("potential", "name", "quadratic")
    beta = float(get("potential", "beta", "0.5"))
    base_pot = _build_potential(pot_name, beta)
    curvature = float(get("potential", "curvature", str(base_pot.curvature_ceiling)))
    if curvature <= 0:
        raise ConfigError("curvature ceiling must be positive")

    dist = get("disorder", "distribution", "zero")
    if dist not in DISORDER_KINDS:
        raise ConfigError(f"disorder distribution must be one of {DISORDER_KINDS}")
    disorder = DisorderSpec(
        distribution=dist,
        sigma=float(get("disorder", "sigma", "1.0")),
        epsilon=float(get("disorder", "epsilon", "1.0")),
        draws=int(get("disorder", "draws", "1")),
    )
    if disorder.draws < 1:
        raise ConfigError("disorder draws must be at least 1")

    chain = ChainSpec(
        sweeps=int(get("chain", "sweeps", "20000")),
        burn_in=int(get("chain", "burn_in", "2000")),
        thinning=int(get("chain", "thinning", "1")),
        proposal_width=float(get("chain", "proposal_width", "1.0")),
    )
    if chain.burn_in >= chain.sweeps:
        raise ConfigError("chain burn_in must be smaller than sweeps")

    t_list = _parse_float_list(get("tail", "T", "0.5 1.0"))
    if any(t <= 0 for t in t_list):
        raise ConfigError("T values must be positive")

    quad = QuadratureSpec(
        cutoff=float(get("quadrature", "cutoff", "12.0")),
        points_per_axis=int(get("quadrature", "points_per_axis", "64")),
    )

    if kind in ("testfn-scaling", "tail-check") and any(n < 2 for n in n_list):
        raise ConfigError(f"{kind} requires every N >= 2")
    if kind == "oracle-validate" and any(n > 1 for n in n_list):
        raise ConfigError("oracle-validate runs on N <= 1 only")

    items = tuple(
        (f"{section}.{key}", value)
        for section in parser.sections()
        for key, value in parser.items(section)
    )

    try:
        validate_kernel(pairs, krange)
    except Exception as exc:
        raise ConfigError(f"invalid kernel: {exc}") from exc

    return ExperimentConfig(
        kind=kind,
        seed=seed,
        out=out,
        n_list=n_list,
        kernel_pairs=tuple(sorted((off, w) for off, w in pairs.items())),
        kernel_range=krange,
        potential_name=pot_name,
        potential_beta=beta,
        curvature=curvature,
        disorder=disorder,
        chain=chain,
        t_list=t_list,
        quadrature=quad,
        threads=threads,
        figures=figures,
        source_items=items,
    )
