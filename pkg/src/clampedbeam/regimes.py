"""The seven size regimes of the clamped patch and their limit-problem data.

The patch scale is restricted to ``r_eps = kappa * eps**p``. Trace vectors
use the fixed slot order::

    t = (zeta_2(0), zeta_3(0), zeta_1(0), c(0), zeta_2'(0), zeta_3'(0))
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

TRACE_SLOTS = ("zeta2", "zeta3", "zeta1", "c", "dzeta2", "dzeta3")
ZETA2, ZETA3, ZETA1, TWIST, DZETA2, DZETA3 = range(6)


class Regime(str, Enum):
    SUB_CUBIC = "SubCubic"
    CRITICAL_3 = "Critical3"
    CUBIC_TO_LINEAR = "CubicToLinear"
    CRITICAL_1 = "Critical1"
    LINEAR_TO_CUBE_ROOT = "LinearToCubeRoot"
    CRITICAL_THIRD = "CriticalThird"
    SUPER_CUBE_ROOT = "SuperCubeRoot"

    @property
    def is_critical(self):
        return self in (Regime.CRITICAL_3, Regime.CRITICAL_1, Regime.CRITICAL_THIRD)


ORDER = list(Regime)

_CONSTRAINTS = {
    Regime.SUB_CUBIC: frozenset(),
    Regime.CRITICAL_3: frozenset(),
    Regime.CUBIC_TO_LINEAR: frozenset({ZETA2, ZETA3}),
    Regime.CRITICAL_1: frozenset({ZETA2, ZETA3}),
    Regime.LINEAR_TO_CUBE_ROOT: frozenset({ZETA2, ZETA3, ZETA1}),
    Regime.CRITICAL_THIRD: frozenset({ZETA2, ZETA3, ZETA1}),
    Regime.SUPER_CUBE_ROOT: frozenset(range(6)),
}

# trace slots carrying the penalty in each critical regime
ACTIVE_SLOTS = {
    Regime.CRITICAL_3: (ZETA2, ZETA3),
    Regime.CRITICAL_1: (ZETA1,),
    Regime.CRITICAL_THIRD: (TWIST, DZETA2, DZETA3),
}


def as_fraction(p):
    """Exact rational exponent from an int, Fraction, or string like ``"1/3"``.

    Floats are converted exactly from their decimal representation, so
    ``1/3`` must be given as a string or Fraction to land on a critical size.
    """
    if isinstance(p, Fraction):
        return p
    if isinstance(p, float):
        return Fraction(repr(p))
    return Fraction(p)


@dataclass(frozen=True)
class RegimeSpec:
    tag: Regime
    kappa: float
    p: Fraction
    rho: float | None = None

    def r_eps(self, eps):
        return self.kappa * eps ** float(self.p)

    @property
    def is_critical(self):
        return self.tag.is_critical

    def header(self):
        rho = "-" if self.rho is None else f"{self.rho:.6g}"
        return f"regime={self.tag.value} kappa={self.kappa:g} p={self.p} rho={rho}"


def classify(kappa, p):
    """Regime of ``r_eps = kappa * eps**p`` by exact comparison of ``p`` with 3, 1, 1/3."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    p = as_fraction(p)
    if p < 0:
        raise ValueError("exponent p must be nonnegative")
    third = Fraction(1, 3)
    if p > 3:
        return RegimeSpec(Regime.SUB_CUBIC, kappa, p)
    if p == 3:
        return RegimeSpec(Regime.CRITICAL_3, kappa, p, float(kappa))
    if p > 1:
        return RegimeSpec(Regime.CUBIC_TO_LINEAR, kappa, p)
    if p == 1:
        return RegimeSpec(Regime.CRITICAL_1, kappa, p, float(kappa))
    if p > third:
        return RegimeSpec(Regime.LINEAR_TO_CUBE_ROOT, kappa, p)
    if p == third:
        # (r_eps)^3 / eps -> kappa^3
        return RegimeSpec(Regime.CRITICAL_THIRD, kappa, p, float(kappa) ** 3)
    return RegimeSpec(Regime.SUPER_CUBE_ROOT, kappa, p)


def constraint_set(regime):
    """Trace slots forced to zero at ``y_1 = 0``."""
    tag = regime.tag if isinstance(regime, RegimeSpec) else Regime(regime)
    return _CONSTRAINTS[tag]


def corrector_eval(regime, capacitary, t, eps, r_eps, z):
    """Corrector strain ``P(z)`` at points ``z`` (n, 3) in stretched coordinates.

    Returns (n, 3, 3). Capacitary strains are extended by zero outside the
    truncated box.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    t = np.asarray(t, dtype=float)
    out = np.zeros((len(z), 3, 3))
    if not regime.is_critical or not np.any(t):
        return out
    if capacitary is None:
        raise ValueError(f"{regime.tag.value} needs capacitary potentials")
    if regime.tag is Regime.CRITICAL_3:
        coef = np.zeros(6)
        coef[1], coef[2] = t[ZETA2], t[ZETA3]
        scale = -1.0 / (eps**2 * r_eps)
    elif regime.tag is Regime.CRITICAL_1:
        coef = t[ZETA1] * capacitary.phi1_hat_coefficients()
        scale = -1.0 / (eps * r_eps)
    else:
        coef = capacitary.psi_hat_coefficients().T @ np.array([t[TWIST], t[DZETA2], t[DZETA3]])
        scale = -1.0 / eps
    return scale * capacitary.strain_combination(coef, z)
