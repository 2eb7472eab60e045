"""Physical parameters, core shear coupling, stability classification and
closed-form undamped modes of the five-field sandwich beam."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np

REL_EQ_TOL = 1e-12

STRONGLY_STABLE = "StronglyStable"
UNSTABLE = "Unstable"
OPEN_CASE = "OpenCase"

DAMPER_NAMES = ("a", "b", "c", "d", "e")
# Layer 1 <-> layer 3 mirror: the isometry (u1, y1, w, u3, y3) -> (u3, -y3, -w, u1, -y1)
# maps the damped system onto itself with a<->d, b<->e and c fixed.
_DAMPER_SWAP = {"a": "d", "b": "e", "c": "c", "d": "a", "e": "b"}

MODE_FAMILIES = ("T2.3", "T2.4", "T2.5")
POSITION_FIELDS = ("u1", "y1", "w", "u3", "y3")


class ConfigError(ValueError):
    """Invalid physical or numerical input; the message names the field."""


class HypothesisError(ValueError):
    """A closed-form mode was requested for a config violating its hypotheses."""


def _positive(owner: str, name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{owner}.{name} must be a finite positive number, got {value!r}")


def nearly_equal(x: float, y: float, rtol: float = REL_EQ_TOL) -> bool:
    return abs(x - y) <= rtol * max(abs(x), abs(y))


@dataclass(frozen=True)
class LayerParams:
    rho: float
    E: float
    G: float
    I: float
    h: float

    def __post_init__(self):
        for f in fields(self):
            _positive("layer", f.name, getattr(self, f.name))

    @property
    def speed2(self) -> float:
        """Squared longitudinal wave speed E/rho."""
        return self.E / self.rho

    @property
    def shear_freq2(self) -> float:
        """G h / (rho I), the shear-angle cutoff frequency squared."""
        return self.G * self.h / (self.rho * self.I)


def derived_constants(top: LayerParams, bottom: LayerParams, rho2: float, h2: float):
    """Return ``(rho_h, EI_total)`` for the given layers and core."""
    _positive("core", "rho2", rho2)
    _positive("core", "h2", h2)
    for name, layer in (("top", top), ("bottom", bottom)):
        for f in fields(layer):
            _positive(name, f.name, getattr(layer, f.name))
    rho_h = top.rho * top.h + rho2 * h2 + bottom.rho * bottom.h
    EI_total = top.E * top.I + bottom.E * bottom.I
    return rho_h, EI_total


@dataclass(frozen=True)
class BeamConfig:
    top: LayerParams
    bottom: LayerParams
    rho2: float
    h2: float
    L: float
    rho_h: float = field(init=False)
    EI_total: float = field(init=False)

    def __post_init__(self):
        _positive("beam", "L", self.L)
        rho_h, EI_total = derived_constants(self.top, self.bottom, self.rho2, self.h2)
        object.__setattr__(self, "rho_h", rho_h)
        object.__setattr__(self, "EI_total", EI_total)

    @classmethod
    def symmetric(cls, rho=1.0, E=1.0, G=1.0, I=1.0, h=1.0, rho2=1.0, h2=0.5, L=math.pi):
        layer = LayerParams(rho=rho, E=E, G=G, I=I, h=h)
        return cls(top=layer, bottom=layer, rho2=rho2, h2=h2, L=L)

    def with_layers(self, top: dict | None = None, bottom: dict | None = None) -> "BeamConfig":
        return replace(
            self,
            top=replace(self.top, **(top or {})),
            bottom=replace(self.bottom, **(bottom or {})),
        )

    def swapped(self) -> "BeamConfig":
        return replace(self, top=self.bottom, bottom=self.top)

    @property
    def equal_speeds(self) -> bool:
        return nearly_equal(self.top.speed2, self.bottom.speed2)

    @property
    def equal_shear(self) -> bool:
        return nearly_equal(self.top.G, self.bottom.G)

    @property
    def fully_symmetric(self) -> bool:
        return all(
            nearly_equal(getattr(self.top, f.name), getattr(self.bottom, f.name))
            for f in fields(LayerParams)
        )

    def to_dict(self) -> dict:
        return {
            "top": {f.name: getattr(self.top, f.name) for f in fields(LayerParams)},
            "bottom": {f.name: getattr(self.bottom, f.name) for f in fields(LayerParams)},
            "rho2": self.rho2,
            "h2": self.h2,
            "L": self.L,
            "rho_h": self.rho_h,
            "EI_total": self.EI_total,
        }


@dataclass(frozen=True)
class DampingPattern:
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    e: float = 0.0

    def __post_init__(self):
        for name in DAMPER_NAMES:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ConfigError(f"damping.{name} must be a finite nonnegative number, got {v!r}")

    def active_set(self) -> frozenset[str]:
        return frozenset(n for n in DAMPER_NAMES if getattr(self, n) > 0)

    def swapped(self) -> "DampingPattern":
        return DampingPattern(**{_DAMPER_SWAP[n]: getattr(self, n) for n in DAMPER_NAMES})

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in DAMPER_NAMES)

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in DAMPER_NAMES}


def shear_stress_tau(u1, u3, omega_x, y1, y3, config: BeamConfig):
    """Core shear stress; works pointwise on scalars or numpy arrays."""
    return (
        -u1
        + u3
        + config.h2 * omega_x
        - 0.5 * config.top.h * y1
        - 0.5 * config.bottom.h * y3
    )


@dataclass(frozen=True)
class StabilityVerdict:
    status: str
    predicted_ell: int | None = None
    rationale: tuple[str, ...] = ()
    sharp: bool = False

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "ell": self.predicted_ell,
            "sharp": self.sharp,
            "rationale": list(self.rationale),
        }


def _speed_tag(cfg: BeamConfig) -> str:
    return "equal-speeds" if cfg.equal_speeds else "unequal-speeds"


def _shear_tag(cfg: BeamConfig) -> str:
    return "equal-shear" if cfg.equal_shear else "unequal-shear"


def _classify_table(cfg: BeamConfig, active: frozenset[str]) -> StabilityVerdict | None:
    """Published verdict rows; ``None`` when the active pair is not treated."""
    pair = "".join(sorted(active))
    if pair == "ab":
        ell = 3 if cfg.equal_speeds else 5
        return StabilityVerdict(STRONGLY_STABLE, ell, ("T2.2.1", "T3.1", _speed_tag(cfg)), True)
    if pair == "ac":
        if cfg.equal_shear:
            return StabilityVerdict(UNSTABLE, None, ("T2.3", "equal-shear"), True)
        shear_freqs_equal = nearly_equal(cfg.top.shear_freq2, cfg.bottom.shear_freq2)
        if cfg.equal_speeds and not shear_freqs_equal:
            ell, tag = 2, "unequal-shear-frequencies"
        else:
            ell = 6
            tag = "equal-shear-frequencies" if cfg.equal_speeds else "unequal-speeds"
        return StabilityVerdict(
            STRONGLY_STABLE, ell, ("T2.2.2", "T3.2", "unequal-shear", _speed_tag(cfg), tag), True
        )
    if pair == "bc":
        if cfg.equal_speeds:
            return StabilityVerdict(UNSTABLE, None, ("T2.4", "equal-speeds"), True)
        return StabilityVerdict(STRONGLY_STABLE, 6, ("T2.2.3", "T3.3", "unequal-speeds"), True)
    if pair == "be":
        if cfg.equal_speeds:
            return StabilityVerdict(UNSTABLE, None, ("T2.4", "equal-speeds", _shear_tag(cfg)))
        if not cfg.equal_shear:
            return StabilityVerdict(STRONGLY_STABLE, None, ("T2.2.4", "unequal-speeds", "unequal-shear"))
        return StabilityVerdict(OPEN_CASE, None, ("unequal-speeds", "equal-shear"))
    if pair == "ae":
        return StabilityVerdict(STRONGLY_STABLE, None, ("T2.2.5",))
    if pair == "ad":
        if cfg.fully_symmetric:
            return StabilityVerdict(UNSTABLE, None, ("T2.5", "symmetric-layers"))
        return StabilityVerdict(OPEN_CASE, None, ("asymmetric-layers",))
    return None


def classify(config: BeamConfig, damping: DampingPattern) -> StabilityVerdict:
    """Classify a damping pattern against the published stability results.

    Only patterns with exactly two active dampers are classified. Pairs not
    covered directly are mapped through the layer-mirror symmetry; the
    mirrored verdict keeps its status and tags but is never marked sharp and
    carries no decay order.
    """
    active = damping.active_set()
    if len(active) != 2:
        return StabilityVerdict(OPEN_CASE)
    verdict = _classify_table(config, active)
    if verdict is not None:
        return verdict
    mirrored = _classify_table(config.swapped(), damping.swapped().active_set())
    if mirrored is None:
        return StabilityVerdict(OPEN_CASE)
    return StabilityVerdict(mirrored.status, None, ("layer-swap",) + mirrored.rationale, False)


@dataclass(frozen=True)
class ClosedFormMode:
    """Undamped standing wave ``exp(i lambda t) * amplitude * sin(n pi x / L)``.

    ``field_profiles`` maps each position field to its sine amplitude;
    velocities are ``i * lam`` times the positions.
    """

    theorem: str
    n: int
    lam: float
    L: float
    field_profiles: dict[str, float]

    @property
    def wavenumber(self) -> float:
        return self.n * math.pi / self.L

    def profile(self, name: str) -> Callable[[np.ndarray], np.ndarray]:
        amp = self.field_profiles.get(name, 0.0)
        k = self.wavenumber
        return lambda x: amp * np.sin(k * np.asarray(x, dtype=float))

    def profile_dx(self, name: str) -> Callable[[np.ndarray], np.ndarray]:
        amp = self.field_profiles.get(name, 0.0)
        k = self.wavenumber
        return lambda x: amp * k * np.cos(k * np.asarray(x, dtype=float))

    def functions(self) -> dict[str, Callable]:
        """Position profiles plus ``w_x`` (needed for Hermite interpolation)."""
        out = {name: self.profile(name) for name in POSITION_FIELDS}
        out["w_x"] = self.profile_dx("w")
        return out

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "n": self.n,
            "lambda": self.lam,
            "field_profiles": dict(self.field_profiles),
        }


def _check_family(theorem: str, n: int) -> None:
    if theorem not in MODE_FAMILIES:
        raise ValueError(f"unknown mode family {theorem!r}; expected one of {MODE_FAMILIES}")
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise ValueError(f"mode index n must be an integer >= 1, got {n!r}")


def closed_form_mode(theorem: str, n: int, config: BeamConfig) -> ClosedFormMode:
    _check_family(theorem, n)
    top, bot = config.top, config.bottom
    k2 = (n * math.pi / config.L) ** 2
    if theorem == "T2.3":
        if not config.equal_shear:
            raise HypothesisError("T2.3 requires equal shear moduli G1 == G3")
        lam = math.sqrt(k2 * bot.speed2 + top.G * bot.h / (bot.rho * bot.I))
        profiles = {"y3": 1.0, "y1": -bot.h / top.h}
    elif theorem == "T2.4":
        if not config.equal_speeds:
            raise HypothesisError("T2.4 requires equal wave speeds E1/rho1 == E3/rho3")
        lam = math.sqrt(bot.speed2) * n * math.pi / config.L
        profiles = {"u1": 1.0, "u3": 1.0}
    else:
        if not config.fully_symmetric:
            bad = [f.name for f in fields(LayerParams)
                   if not nearly_equal(getattr(top, f.name), getattr(bot, f.name))]
            raise HypothesisError(
                "T2.5 requires identical layers; unequal: " + ", ".join(f"{b}1 != {b}3" for b in bad)
            )
        lam = math.sqrt(k2 * top.speed2 + top.shear_freq2)
        profiles = {"y1": 1.0, "y3": -1.0}
    full = {name: float(profiles.get(name, 0.0)) for name in POSITION_FIELDS}
    return ClosedFormMode(theorem=theorem, n=int(n), lam=lam, L=config.L, field_profiles=full)


def dispersion_gap(theorem: str, n: int, config: BeamConfig) -> float:
    """|difference| of the squared frequencies demanded by the two nonzero
    field equations of a candidate mode."""
    _check_family(theorem, n)
    top, bot = config.top, config.bottom
    k2 = (n * math.pi / config.L) ** 2
    if theorem == "T2.4":
        return abs(top.speed2 - bot.speed2) * k2
    return abs((top.speed2 - bot.speed2) * k2 + top.shear_freq2 - bot.shear_freq2)
