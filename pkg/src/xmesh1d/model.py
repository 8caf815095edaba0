"""
Material parameters and model functions
=======================================

Degradation ``omega(d)`` and dissipation ``alpha(d)`` for the two damage
regularizations handled by the package:

- phase-field (``PHASE``): gradient-regularized, ``r = 1``, ``c = pi``
- lip-field (``LIP``): Lipschitz-constrained, ``r = 0``, ``c = 1``

Both families are calibrated so that the bar response is equivalent to a
linear cohesive law ``sigma = sigc (1 - w/wc)``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np


class ModelKind(enum.Enum):
    """Damage regularization variant."""

    PHASE = "phase"
    LIP = "lip"

    @property
    def r(self) -> int:
        """Weight of the damage-gradient term (1 phase-field, 0 lip-field)."""
        return 1 if self is ModelKind.PHASE else 0

    @property
    def c(self) -> float:
        """Normalization constant of the dissipation."""
        return math.pi if self is ModelKind.PHASE else 1.0

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, ModelKind):
            return value
        key = str(value).strip().lower()
        aliases = {"phase": cls.PHASE, "phase-field": cls.PHASE, "pf": cls.PHASE,
                   "lip": cls.LIP, "lip-field": cls.LIP}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown model {value!r} (expected 'phase' or 'lip')") from None


@dataclass(frozen=True)
class MaterialParams:
    """
    Bar geometry and material constants.

    Attributes:
        L: bar length [m]
        lc: regularization length [m]
        E: Young's modulus [Pa]
        Gc: fracture toughness [N/m]
        sigc: critical tensile stress [Pa]
    """

    L: float = 0.2
    lc: float = 0.04
    E: float = 3.0e10
    Gc: float = 120.0
    sigc: float = 3.0e6

    def __post_init__(self):
        for name in ("L", "lc", "E", "Gc", "sigc"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")


# Reference bar used throughout the numerical study
TABLE1 = MaterialParams(L=0.2, lc=0.04, E=3.0e10, Gc=120.0, sigc=3.0e6)
# Five-element study (gamma = 1/2)
TABLE2 = MaterialParams(L=0.22, lc=0.2, E=3.0e10, Gc=120.0, sigc=3.0e6)

GAMMA_MAX = {ModelKind.PHASE: 8.0 / (3.0 * math.pi), ModelKind.LIP: 0.5}


@dataclass(frozen=True)
class DerivedParams:
    """Quantities derived from :class:`MaterialParams`."""

    lch: float
    gamma: float
    wc: float
    Uc: float

    def convex(self, model: ModelKind) -> bool:
        """True when ``gamma`` is within the convexity bound of ``omega``."""
        return self.gamma <= GAMMA_MAX[ModelKind.parse(model)] * (1.0 + 1e-12)


def derive(params: MaterialParams, model: ModelKind | None = None) -> DerivedParams:
    """
    Characteristic length, ``gamma``, critical opening and onset elongation.

    A ``gamma`` outside the convexity bound of ``model`` only emits a
    ``RuntimeWarning``.
    """
    lch = params.E * params.Gc / params.sigc**2
    out = DerivedParams(
        lch=lch,
        gamma=params.lc / lch,
        wc=2.0 * params.Gc / params.sigc,
        Uc=params.L * params.sigc / params.E,
    )
    if model is not None and not out.convex(model):
        warnings.warn(
            f"gamma={out.gamma:.6g} exceeds the convexity bound "
            f"{GAMMA_MAX[ModelKind.parse(model)]:.6g} for {ModelKind.parse(model).value}",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


# ---------------------------------------------------------------------------
# Vectorized kernels (no domain checks; used inside the solver loops)
# ---------------------------------------------------------------------------

def alpha_v(model: ModelKind, d):
    d = np.asarray(d, dtype=float)
    if model is ModelKind.PHASE:
        return 2.0 * d - d * d
    return d.copy()


def dalpha_v(model: ModelKind, d):
    d = np.asarray(d, dtype=float)
    if model is ModelKind.PHASE:
        return 2.0 - 2.0 * d
    return np.ones_like(d)


def _omega_parts(model: ModelKind, d, gamma, second: bool = False):
    # omega = a / (a + b); returns a, a', b, b' (and a'', b'' on request)
    if model is ModelKind.PHASE:
        s = 1.0 - d
        a, da, dda = s * s, -2.0 * s, np.full_like(d, 2.0)
        k = 2.0 / (math.pi * gamma)
        b, db, ddb = k * (2.0 * d - d * d), k * (2.0 - 2.0 * d), np.full_like(d, -2.0 * k)
    else:
        q = 1.0 - d * d
        a, da, dda = q * q, -4.0 * d * q, 12.0 * d * d - 4.0
        b, db, ddb = (2.0 / gamma) * d, np.full_like(d, 2.0 / gamma), np.zeros_like(d)
    if second:
        return a, da, dda, b, db, ddb
    return a, da, b, db


def omega_v(model: ModelKind, d, gamma):
    d = np.asarray(d, dtype=float)
    a, _, b, _ = _omega_parts(model, d, gamma)
    out = a / (a + b)
    # exact degeneracy at full damage
    return np.where(d >= 1.0, 0.0, out)


def domega_v(model: ModelKind, d, gamma):
    d = np.asarray(d, dtype=float)
    a, da, b, db = _omega_parts(model, d, gamma)
    den = a + b
    out = (da * b - a * db) / (den * den)
    return np.where(d >= 1.0, 0.0, out)


def ddomega_v(model: ModelKind, d, gamma):
    d = np.asarray(d, dtype=float)
    a, da, dda, b, db, ddb = _omega_parts(model, d, gamma, second=True)
    den = a + b
    num = da * b - a * db
    out = ((dda * b - a * ddb) * den - 2.0 * num * (da + db)) / den**3
    return np.where(d >= 1.0, 0.0, out)


def ddalpha_v(model: ModelKind, d):
    d = np.asarray(d, dtype=float)
    return np.full_like(d, -2.0 if model is ModelKind.PHASE else 0.0)


# ---------------------------------------------------------------------------
# Checked scalar/array API
# ---------------------------------------------------------------------------

def _check_damage(d) -> np.ndarray:
    arr = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"damage must lie in [0, 1], got {d!r}")
    return arr


def _out(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


def omega(model: ModelKind | str, d, gamma: float):
    """
    Degradation function.

    Phase-field: ``(1-d)^2 / ((1-d)^2 + 2 alpha(d)/(pi gamma))``.
    Lip-field: ``(1-d^2)^2 / ((1-d^2)^2 + 2 alpha(d)/gamma)``.
    Returns exactly 0 at ``d = 1``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    arr = _check_damage(d)
    return _out(omega_v(ModelKind.parse(model), arr, gamma), d)


def alpha(model: ModelKind | str, d):
    """Dissipation shape: ``2d - d^2`` (phase-field) or ``d`` (lip-field)."""
    arr = _check_damage(d)
    return _out(alpha_v(ModelKind.parse(model), arr), d)


@dataclass(frozen=True)
class ValidityReport:
    model: ModelKind
    ratio: float           # L/(pi lc) for phase-field, L/lc for lip-field
    lower: float
    upper: float
    cohesive_equivalent: bool   # damaged band fits inside the bar
    no_snapback: bool
    gamma_convex: bool

    @property
    def ok(self) -> bool:
        return self.cohesive_equivalent and self.no_snapback

    def describe(self) -> str:
        parts = [f"{self.model.value}: ratio={self.ratio:.6g} in [{self.lower:.6g}, {self.upper:.6g}]"]
        if not self.cohesive_equivalent:
            parts.append("bar shorter than the damaged band (cohesive equivalence lost)")
        if not self.no_snapback:
            parts.append("bar too long (snap-back regime)")
        if not self.gamma_convex:
            parts.append("gamma above convexity bound")
        return "; ".join(parts)


def validity(model: ModelKind | str, params: MaterialParams,
             derived: DerivedParams | None = None) -> ValidityReport:
    """Check the bar-length window ``1 <= L/(c' lc) <= 2/(c' gamma)``."""
    model = ModelKind.parse(model)
    derived = derived or derive(params)
    scale = math.pi if model is ModelKind.PHASE else 1.0
    ratio = params.L / (scale * params.lc)
    upper = 2.0 / (scale * derived.gamma)
    return ValidityReport(
        model=model,
        ratio=ratio,
        lower=1.0,
        upper=upper,
        cohesive_equivalent=ratio >= 1.0,
        no_snapback=ratio <= upper,
        gamma_convex=derived.convex(model),
    )
