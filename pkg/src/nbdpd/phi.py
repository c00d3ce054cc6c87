"""Generator functions ``phi_gamma`` indexing the norm-based Bregman family.

Every generator is a strictly increasing, convex map of ``z > 0`` that may
depend on the power parameter ``gamma``.  Built-in kinds have analytic first
and second ``z``-derivatives and an analytic ``gamma``-derivative; custom
generators supply callbacks and fall back to a central finite difference in
``gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from .errors import DomainError, ParameterError

LAMBDA2_EPS = 1e-10
GAMMA_FD_STEP = 1e-6
TOL_CONVEX = 1e-12
# below this |expm1(log z)| the increment uses a second-order Taylor expansion
_TAYLOR_CUTOFF = 1e-5


class PhiKind(str, Enum):
    IDENTITY = "identity"
    DENSITY_POWER = "density_power"
    POWER_KAPPA = "power_kappa"
    BRIDGE = "bridge"
    COMBINED = "combined"
    MIXTURE = "mixture"
    CUSTOM = "custom"


@dataclass(frozen=True)
class CustomPhi:
    """User-supplied generator.

    Each callback takes ``(z, gamma)``.  ``parameters`` optionally reports
    the generator's (possibly gamma-dependent) parameters so the small-gamma
    assumption check can test that they settle.
    """

    value: Callable[[np.ndarray, float], np.ndarray]
    deriv: Callable[[np.ndarray, float], np.ndarray]
    second_deriv: Callable[[np.ndarray, float], np.ndarray]
    gamma_deriv: Callable[[np.ndarray, float], np.ndarray] | None = None
    parameters: Callable[[float], Mapping[str, float]] | None = None
    name: str = "custom"


@dataclass(frozen=True)
class PhiSpec:
    kind: PhiKind
    gamma: float = 0.0
    kappa: float | None = None
    lambda1: float | None = None
    lambda2: float | None = None
    t: float | None = None
    custom: CustomPhi | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", PhiKind(self.kind))
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ParameterError(f"gamma must be finite and >= 0, got {self.gamma}")
        k = self.kind
        if k in (PhiKind.POWER_KAPPA, PhiKind.COMBINED):
            if self.kappa is None or not self.kappa >= 1:
                raise ParameterError(f"kappa must be >= 1, got {self.kappa}")
        if k in (PhiKind.BRIDGE, PhiKind.COMBINED):
            l1, l2 = self.lambda1, self.lambda2
            if l1 is None or l2 is None or l1 < 0 or l2 < 0:
                raise ParameterError(f"lambda1, lambda2 must be >= 0, got {l1}, {l2}")
            if l1 == 0 and l2 == 0:
                raise ParameterError("lambda1 and lambda2 cannot both be zero")
            if l1 == 0 and l2 < LAMBDA2_EPS:
                raise ParameterError("lambda2 -> 0 limit requires lambda1 > 0")
        if k is PhiKind.MIXTURE and (self.t is None or not 0 <= self.t <= 1):
            raise ParameterError(f"mixture weight t must lie in [0, 1], got {self.t}")
        if k is PhiKind.CUSTOM and self.custom is None:
            raise ParameterError("custom kind needs callbacks")

    # -- constructors -----------------------------------------------------
    @classmethod
    def identity(cls, gamma=0.0):
        return cls(PhiKind.IDENTITY, gamma)

    @classmethod
    def density_power(cls, gamma=0.0):
        return cls(PhiKind.DENSITY_POWER, gamma)

    @classmethod
    def power_kappa(cls, kappa, gamma=0.0):
        return cls(PhiKind.POWER_KAPPA, gamma, kappa=float(kappa))

    @classmethod
    def bridge(cls, lambda1, lambda2, gamma=0.0):
        return cls(PhiKind.BRIDGE, gamma, lambda1=float(lambda1), lambda2=float(lambda2))

    @classmethod
    def combined(cls, lambda1, lambda2, kappa, gamma=0.0):
        return cls(PhiKind.COMBINED, gamma, kappa=float(kappa),
                   lambda1=float(lambda1), lambda2=float(lambda2))

    @classmethod
    def mixture(cls, t, gamma=0.0):
        return cls(PhiKind.MIXTURE, gamma, t=float(t))

    @classmethod
    def from_callbacks(cls, value, deriv, second_deriv, gamma=0.0, *,
                       gamma_deriv=None, parameters=None, name="custom"):
        return cls(PhiKind.CUSTOM, gamma,
                   custom=CustomPhi(value, deriv, second_deriv, gamma_deriv, parameters, name))

    def with_gamma(self, gamma: float) -> "PhiSpec":
        return replace(self, gamma=float(gamma))

    @property
    def label(self) -> str:
        if self.kind is PhiKind.CUSTOM:
            return self.custom.name
        params = ",".join(f"{k}={v:g}" for k, v in self.parameters().items())
        return f"{self.kind.value}({params})" if params else self.kind.value

    def parameters(self, gamma: float | None = None) -> dict[str, float]:
        """Named parameters of the generator (evaluated at ``gamma`` for custom kinds)."""
        if self.kind is PhiKind.CUSTOM:
            if self.custom.parameters is None:
                return {}
            return dict(self.custom.parameters(self.gamma if gamma is None else gamma))
        names = ("kappa", "lambda1", "lambda2", "t")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        if self.kind is PhiKind.CUSTOM:
            raise ParameterError("custom generators are not serialisable")
        return {"kind": self.kind.value, **self.parameters(), "gamma": self.gamma}

    @classmethod
    def from_dict(cls, record: Mapping) -> "PhiSpec":
        rec = dict(record)
        try:
            kind = PhiKind(str(rec.pop("kind")).lower())
        except (KeyError, ValueError) as exc:
            raise ParameterError(f"bad or missing phi kind in {record!r}") from exc
        if kind is PhiKind.CUSTOM:
            raise ParameterError("custom generators cannot be read from records")
        allowed = {"gamma", "kappa", "lambda1", "lambda2", "t"}
        unknown = set(rec) - allowed
        if unknown:
            raise ParameterError(f"unknown phi fields: {sorted(unknown)}")
        return cls(kind, **{k: float(v) for k, v in rec.items()})

    # -- evaluation -------------------------------------------------------
    def _bridge_limit(self) -> bool:
        return self.kind in (PhiKind.BRIDGE, PhiKind.COMBINED) and self.lambda2 < LAMBDA2_EPS

    def _outer_power(self) -> float:
        """Exponent applied to ``lambda1 + lambda2 z^(1+gamma)``."""
        kappa = 1.0 if self.kind is PhiKind.BRIDGE else self.kappa
        return kappa / (1.0 + self.gamma)

    def _limit_coef(self) -> float:
        # lambda2 -> 0:  phi -> b * lambda1^(b-1) * z^(1+gamma)
        b = self._outer_power()
        return b * self.lambda1 ** (b - 1.0)

    def value(self, z):
        z = _check_z(z)
        g, k = self.gamma, self.kind
        if k is PhiKind.IDENTITY:
            return _same(z, z)
        if k is PhiKind.DENSITY_POWER:
            return z ** (1 + g)
        if k is PhiKind.POWER_KAPPA:
            return z ** self.kappa
        if k is PhiKind.MIXTURE:
            return self.t * z ** (1 + g) + (1 - self.t) * z
        if k in (PhiKind.BRIDGE, PhiKind.COMBINED):
            if self._bridge_limit():
                return self._limit_coef() * z ** (1 + g)
            b, l1, l2 = self._outer_power(), self.lambda1, self.lambda2
            return ((l1 + l2 * z ** (1 + g)) ** b - l1 ** b) / l2
        return _same(z, self.custom.value(z, g))

    def deriv(self, z):
        z = _check_z(z)
        g, k = self.gamma, self.kind
        if k is PhiKind.IDENTITY:
            return np.ones_like(z) if isinstance(z, np.ndarray) else 1.0
        if k is PhiKind.DENSITY_POWER:
            return (1 + g) * z ** g
        if k is PhiKind.POWER_KAPPA:
            return self.kappa * z ** (self.kappa - 1)
        if k is PhiKind.MIXTURE:
            return self.t * (1 + g) * z ** g + (1 - self.t)
        if k in (PhiKind.BRIDGE, PhiKind.COMBINED):
            if self._bridge_limit():
                return self._limit_coef() * (1 + g) * z ** g
            b, l1, l2 = self._outer_power(), self.lambda1, self.lambda2
            kappa = b * (1 + g)
            return kappa * (l1 + l2 * z ** (1 + g)) ** (b - 1) * z ** g
        return _same(z, self.custom.deriv(z, g))

    def second_deriv(self, z):
        z = _check_z(z)
        g, k = self.gamma, self.kind
        if k is PhiKind.IDENTITY:
            return np.zeros_like(z) if isinstance(z, np.ndarray) else 0.0
        if k is PhiKind.DENSITY_POWER:
            return g * (1 + g) * z ** (g - 1)
        if k is PhiKind.POWER_KAPPA:
            return self.kappa * (self.kappa - 1) * z ** (self.kappa - 2)
        if k is PhiKind.MIXTURE:
            return self.t * g * (1 + g) * z ** (g - 1)
        if k in (PhiKind.BRIDGE, PhiKind.COMBINED):
            if self._bridge_limit():
                return self._limit_coef() * g * (1 + g) * z ** (g - 1)
            b, l1, l2 = self._outer_power(), self.lambda1, self.lambda2
            kappa = b * (1 + g)
            s = l1 + l2 * z ** (1 + g)
            return kappa * s ** (b - 2) * z ** (g - 1) * ((kappa - 1) * l2 * z ** (1 + g) + g * l1)
        return _same(z, self.custom.second_deriv(z, g))

    def gamma_deriv(self, z):
        """Partial derivative of ``phi_gamma(z)`` with respect to ``gamma``."""
        z = _check_z(z)
        g, k = self.gamma, self.kind
        lz = np.log(z)
        if k in (PhiKind.IDENTITY, PhiKind.POWER_KAPPA):
            return 0.0 * lz
        if k is PhiKind.DENSITY_POWER:
            return z ** (1 + g) * lz
        if k is PhiKind.MIXTURE:
            return self.t * z ** (1 + g) * lz
        if k in (PhiKind.BRIDGE, PhiKind.COMBINED):
            b, l1, l2 = self._outer_power(), self.lambda1, self.lambda2
            db = -b / (1 + g)
            if self._bridge_limit():
                c = self._limit_coef()
                dc = c * db * (1.0 / b + math.log(l1))
                return dc * z ** (1 + g) + c * z ** (1 + g) * lz
            s = l1 + l2 * z ** (1 + g)
            ds = l2 * z ** (1 + g) * lz
            d_sb = s ** b * (np.log(s) * db + b * ds / s)
            d_l1b = l1 ** b * math.log(l1) * db if l1 > 0 else 0.0
            return (d_sb - d_l1b) / l2
        if self.custom.gamma_deriv is not None:
            return _same(z, self.custom.gamma_deriv(z, g))
        h = GAMMA_FD_STEP
        lo = max(g - h, 0.0)
        hi = g + h
        return (self.custom.value(z, hi) - self.custom.value(z, lo)) / (hi - lo)

    def increment(self, log_z):
        """``phi_gamma(exp(log_z)) - phi_0(1)`` without cancellation near ``z = 1``.

        The divergence and loss formulas divide this quantity by ``gamma``;
        direct subtraction would lose all precision when ``gamma`` is tiny.
        """
        log_z = np.asarray(log_z, dtype=float)
        u = np.expm1(log_z)
        base = self._gamma_offset()
        small = np.abs(u) < _TAYLOR_CUTOFF
        taylor = self.deriv(1.0) * u + 0.5 * self.second_deriv(1.0) * u * u
        z = np.exp(log_z)
        direct = self.value(np.where(small, 1.0, z)) - self.value(1.0)
        out = base + np.where(small, taylor, direct)
        return float(out) if out.ndim == 0 else out

    def _gamma_offset(self) -> float:
        """``phi_gamma(1) - phi_0(1)``."""
        if self.kind in (PhiKind.IDENTITY, PhiKind.DENSITY_POWER,
                         PhiKind.POWER_KAPPA, PhiKind.MIXTURE):
            return 0.0
        return float(self.value(1.0) - self.with_gamma(0.0).value(1.0))

    # -- gamma -> 0 constants ---------------------------------------------
    def phi0_at_one(self) -> float:
        return float(self.with_gamma(0.0).value(1.0))

    def dphi0_at_one(self) -> float:
        """``phi'_0(1)``: the multiple of KL reached as gamma -> 0."""
        return float(self.with_gamma(0.0).deriv(1.0))

    def dgamma_at_one(self) -> float:
        """``d phi_gamma(1) / d gamma`` at ``gamma = 0``."""
        return float(self.with_gamma(0.0).gamma_deriv(1.0))


def _check_z(z):
    if isinstance(z, np.ndarray):
        if not np.all(z > 0):
            raise DomainError("phi is defined for z > 0 only")
        return z
    z = float(z)
    if not z > 0:
        raise DomainError(f"phi is defined for z > 0 only, got {z}")
    return z


def _same(z, out):
    return np.asarray(out, dtype=float) if isinstance(z, np.ndarray) else float(out)


# Functional aliases -------------------------------------------------------

def phi_value(spec: PhiSpec, z):
    return spec.value(z)


def phi_deriv(spec: PhiSpec, z):
    return spec.deriv(z)


def phi_second_deriv(spec: PhiSpec, z):
    return spec.second_deriv(z)


def phi_gamma_deriv(spec: PhiSpec, z):
    return spec.gamma_deriv(z)


# Validation ---------------------------------------------------------------

@dataclass
class ValidationReport:
    spec_label: str
    monotonicity_failures: list[float]
    convexity_failures: list[float]

    @property
    def valid(self) -> bool:
        return not (self.monotonicity_failures or self.convexity_failures)

    def __bool__(self):
        return self.valid


def default_grid(lo=1e-3, hi=100.0, n=200) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def validate_phi(spec: PhiSpec, grid=None, tol_convex: float = TOL_CONVEX) -> ValidationReport:
    """Check ``phi' > 0`` and ``phi'' >= -tol_convex`` on a grid of positive points."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ParameterError("validation grid must be nonempty, positive and strictly increasing")
    d1 = np.asarray(spec.deriv(grid), dtype=float)
    d2 = np.asarray(spec.second_deriv(grid), dtype=float)
    return ValidationReport(
        spec.label,
        grid[~(d1 > 0)].tolist(),
        grid[~(d2 >= -tol_convex)].tolist(),
    )


@dataclass
class AssumptionReport:
    """Small-gamma behaviour of a generator along ``z = ||q||_{1+gamma}``."""

    gammas: list[float]
    values: list[float]
    derivs: list[float]
    gamma_derivs: list[float]
    targets: tuple[float, float, float] | None
    flags: list[str]

    @property
    def ok(self) -> bool:
        return not self.flags

    @property
    def limits(self) -> tuple[float, float, float]:
        return self.values[-1], self.derivs[-1], self.gamma_derivs[-1]


def assumption_limits_check(
    spec: PhiSpec,
    q_norm_path: Callable[[float], float],
    gammas=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6),
    tol: float = 1e-4,
    param_rtol: float = 1e-2,
) -> AssumptionReport:
    """Follow ``phi_gamma``, ``phi'_gamma`` and ``d phi_gamma / d gamma`` at
    ``z = ||q||_{1+gamma}`` as gamma shrinks and compare with their
    ``gamma = 0`` values at ``z = 1``.

    Parameters reported by the generator are compared at ``gamma = 1e-3``
    and ``1e-6``; a relative change above ``param_rtol`` is flagged as a
    non-existent limit.
    """
    flags: list[str] = []
    vals, ders, gders = [], [], []
    for g in gammas:
        s = spec.with_gamma(g)
        try:
            z = float(q_norm_path(g))
            vals.append(float(s.value(z)))
            ders.append(float(s.deriv(z)))
            gders.append(float(s.gamma_deriv(z)))
        except (ArithmeticError, ValueError) as exc:
            flags.append(f"evaluation failed at gamma={g:g}: {exc}")
            vals.append(math.nan)
            ders.append(math.nan)
            gders.append(math.nan)

    params_a = spec.parameters(1e-3)
    params_b = spec.parameters(1e-6)
    for name in params_a:
        a, b = params_a[name], params_b.get(name, math.nan)
        if not abs(a - b) <= param_rtol * max(abs(a), abs(b), 1.0):
            flags.append(f"parameter {name} has no gamma -> 0 limit ({a:g} at 1e-3, {b:g} at 1e-6)")

    targets = None
    try:
        targets = (spec.phi0_at_one(), spec.dphi0_at_one(), spec.dgamma_at_one())
    except (ArithmeticError, ValueError) as exc:
        flags.append(f"gamma = 0 generator undefined: {exc}")

    if targets is not None:
        for name, seq, target in zip(("phi", "phi'", "dphi/dgamma"), (vals, ders, gders), targets):
            errs = [abs(v - target) for v in seq]
            if not all(map(math.isfinite, errs)) or not errs[-1] <= tol * (1 + abs(target)):
                flags.append(f"{name} does not converge to {target:g} (last error {errs[-1]:.3g})")
    return AssumptionReport(list(gammas), vals, ders, gders, targets, flags)
