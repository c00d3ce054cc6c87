"""Cross-entropies and divergences of the density-power family.

All formulas consume three integrals: the cross term ``<q p^gamma>`` (always
by quadrature) and the power moments ``<p^(1+gamma)>``, ``<q^(1+gamma)>``.
Divergences are obtained as ``d(q, p) - d(q, q)`` from the matching
cross-entropy; the separately coded divergence formulas (``*_formula``)
are kept as independent checks.

Quantities that are ``O(gamma)`` are carried as ``<q p^gamma> - 1`` and
``expm1(log <p^(1+gamma)>)`` so that dividing by a small ``gamma`` stays
accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .densities import DensityModel, PowerMoments
from .errors import DomainError, ParameterError
from .phi import LAMBDA2_EPS, PhiKind, PhiSpec
from .quadrature import DEFAULT_CONFIG, QuadConfig, integrate_strict

GAMMA_SWITCH = 1e-9


# --------------------------------------------------------------------------
# integral primitives

@dataclass(frozen=True)
class CrossTerms:
    """Integrals entering every formula for the pair ``(q, p)`` at ``gamma``."""

    gamma: float
    cross_m1: float          # <q p^gamma> - 1
    p: PowerMoments
    q: PowerMoments
    error: float

    @property
    def cross(self) -> float:
        return 1.0 + self.cross_m1

    @property
    def mp_m1(self) -> float:  # <p^(1+gamma)> - 1
        return math.expm1(self.p.log_m0)


def cross_integral(q: DensityModel, p: DensityModel, gamma: float,
                   config: QuadConfig = DEFAULT_CONFIG) -> tuple[float, float]:
    """Return ``(<q p^gamma> - 1, error estimate)``; assumes ``<q> = 1``."""
    cfg = config.over(*q.truncation())

    def f(x):
        return q.pdf(x) * np.expm1(gamma * p.log_density(x))

    res = integrate_strict(f, cfg, q.breakpoints())
    return res.value, res.error


def cross_terms(q: DensityModel, p: DensityModel, gamma: float,
                config: QuadConfig = DEFAULT_CONFIG) -> CrossTerms:
    if not gamma >= 0:
        raise ParameterError(f"gamma must be >= 0, got {gamma}")
    c, err = cross_integral(q, p, gamma, config)
    mp = p.power_moments(gamma, config)
    mq = q.power_moments(gamma, config)
    return CrossTerms(gamma, c, mp, mq, err + mp.quad_error + mq.quad_error)


def shannon_cross(q: DensityModel, p: DensityModel, config: QuadConfig = DEFAULT_CONFIG) -> float:
    """``-<q log p>``."""
    cfg = config.over(*q.truncation())

    def f(x):
        qx = q.pdf(x)
        lp = p.log_density(x)
        if np.any((qx > 0) & ~np.isfinite(lp)):
            raise DomainError("q is not absolutely continuous with respect to p")
        return np.where(qx > 0, -qx * np.where(np.isfinite(lp), lp, 0.0), 0.0)

    return integrate_strict(f, cfg, q.breakpoints()).value


def kl(q: DensityModel, p: DensityModel, config: QuadConfig = DEFAULT_CONFIG) -> float:
    """Kullback-Leibler divergence ``<q log(q / p)>``."""
    cfg = config.over(*q.truncation())

    def f(x):
        qx = q.pdf(x)
        lq = q.log_density(x)
        lp = p.log_density(x)
        pos = qx > 0
        if np.any(pos & ~np.isfinite(lp)):
            raise DomainError("q is not absolutely continuous with respect to p")
        diff = np.where(pos, lq - np.where(np.isfinite(lp), lp, 0.0), 0.0)
        return qx * diff

    return integrate_strict(f, cfg, q.breakpoints()).value


def _require_positive_gamma(gamma):
    if not gamma > 0:
        raise ParameterError(f"this cross-entropy needs gamma > 0, got {gamma}")


# --------------------------------------------------------------------------
# elementary cross-entropies from precomputed terms

def _dpce(t: CrossTerms) -> float:
    g = t.gamma
    return t.mp_m1 - (1 + g) / g * t.cross_m1


def _psce(t: CrossTerms) -> float:
    g = t.gamma
    if t.cross <= 0:
        raise DomainError("<q p^gamma> must be positive")
    return -math.expm1(math.log1p(t.cross_m1) - g * t.p.log_norm) / g


def _log_gamma_ce(t: CrossTerms) -> float:
    g = t.gamma
    if t.cross <= 0:
        raise DomainError("log of non-positive <q p^gamma>")
    return -(1 + g) / g * math.log1p(t.cross_m1) + t.p.log_m0


def _bhce(t: CrossTerms, kappa: float) -> float:
    g = t.gamma
    nk = math.exp(kappa * t.p.log_norm)
    return kappa / g * nk * (1 - 1 / kappa - t.cross / t.p.m0) + 1 / g


def _psbdpce(t: CrossTerms, l1: float, l2: float) -> float:
    g = t.gamma
    if l2 < LAMBDA2_EPS:
        return l1 ** (-g / (1 + g)) / (1 + g) * _dpce(t)
    num = l1 + l2 * t.cross
    den = (l1 + l2 * t.p.m0) ** (g / (1 + g))
    return -1 / (l2 * g) * (num / den - (l1 + l2) ** (1 / (1 + g)))


def _log_bdpce(t: CrossTerms, l1: float, l2: float) -> float:
    g = t.gamma
    if l2 < LAMBDA2_EPS:
        return _dpce(t) / l1
    arg = l1 + l2 * t.cross
    if arg <= 0:
        raise DomainError("log of non-positive lambda1 + lambda2 <q p^gamma>")
    return (-(1 + g) / (l2 * g) * math.log(arg)
            + math.log(l1 + l2 * t.p.m0) / l2
            + math.log(l1 + l2) / (l2 * g))


def _combined_ce(t: CrossTerms, l1: float, l2: float, kappa: float) -> float:
    g = t.gamma
    b = kappa / (1 + g)
    if l2 < LAMBDA2_EPS:
        return kappa * l1 ** (b - 1) / (1 + g) * _dpce(t)
    s = l1 + l2 * t.p.m0
    return (kappa / (l2 * g) * s ** b * (1 - 1 / kappa - (l1 + l2 * t.cross) / s)
            + (l1 + l2) ** b / (l2 * g))


def _nb_dpce(t: CrossTerms, phi: PhiSpec) -> float:
    g = t.gamma
    ln = t.p.log_norm
    n = math.exp(ln)
    first = -phi.increment(ln) / g
    second = -phi.deriv(n) * (t.cross_m1 - t.mp_m1) / (g * n ** g)
    return float(first + second)


# --------------------------------------------------------------------------
# V-functions (functional density power family) and H-functions (Holder family)

class VKind(str, Enum):
    LINEAR = "linear"
    LOG = "log"
    LN_ZETA = "ln_zeta"
    BRIDGE_LOG = "bridge_log"


@dataclass(frozen=True)
class VSpec:
    kind: VKind
    zeta: float | None = None
    lambda1: float | None = None
    lambda2: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", VKind(self.kind))
        if self.kind is VKind.LN_ZETA and (self.zeta is None or not 0 <= self.zeta <= 1):
            raise ParameterError(f"zeta must lie in [0, 1], got {self.zeta}")
        if self.kind is VKind.BRIDGE_LOG:
            if self.lambda1 is None or self.lambda2 is None or self.lambda1 < 0 or not self.lambda2 > 0:
                raise ParameterError("bridge_log needs lambda1 >= 0 and lambda2 > 0")

    @classmethod
    def linear(cls):
        return cls(VKind.LINEAR)

    @classmethod
    def log(cls):
        return cls(VKind.LOG)

    @classmethod
    def ln_zeta(cls, zeta):
        return cls(VKind.LN_ZETA, zeta=float(zeta))

    @classmethod
    def bridge_log(cls, lambda1, lambda2):
        return cls(VKind.BRIDGE_LOG, lambda1=float(lambda1), lambda2=float(lambda2))

    @property
    def label(self):
        if self.kind is VKind.LN_ZETA:
            return f"ln_zeta(zeta={self.zeta:g})"
        if self.kind is VKind.BRIDGE_LOG:
            return f"bridge_log(lambda1={self.lambda1:g},lambda2={self.lambda2:g})"
        return self.kind.value

    def v(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind is VKind.LINEAR:
            out = z
        elif self.kind is VKind.LOG or (self.kind is VKind.LN_ZETA and self.zeta == 0):
            out = np.log(z)
        elif self.kind is VKind.LN_ZETA:
            out = np.expm1(self.zeta * np.log(z)) / self.zeta
        else:
            out = np.log(self.lambda1 + self.lambda2 * z) / self.lambda2
        return float(out) if out.ndim == 0 else out

    def dv(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind is VKind.LINEAR:
            out = np.ones_like(z)
        elif self.kind is VKind.LOG:
            out = 1 / z
        elif self.kind is VKind.LN_ZETA:
            out = z ** (self.zeta - 1)
        else:
            out = 1 / (self.lambda1 + self.lambda2 * z)
        return float(out) if out.ndim == 0 else out

    def d2v(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind is VKind.LINEAR:
            out = np.zeros_like(z)
        elif self.kind is VKind.LOG:
            out = -1 / z ** 2
        elif self.kind is VKind.LN_ZETA:
            out = (self.zeta - 1) * z ** (self.zeta - 2)
        else:
            out = -self.lambda2 / (self.lambda1 + self.lambda2 * z) ** 2
        return float(out) if out.ndim == 0 else out

    def validate(self, grid=None, tol_convex=1e-12) -> list[str]:
        """Check that ``w(x) = v(exp(x))`` is increasing and convex on a grid of ``x``."""
        x = np.linspace(-20, 20, 401) if grid is None else np.asarray(grid, dtype=float)
        z = np.exp(x)
        w1 = self.dv(z) * z
        w2 = self.d2v(z) * z * z + w1
        problems = []
        if np.any(w1 <= 0):
            problems.append("w is not strictly increasing")
        if np.any(w2 < -tol_convex * np.maximum(1, np.abs(w1))):
            problems.append("w is not convex")
        return problems


class HKind(str, Enum):
    DP_LINEAR = "dp_linear"
    POWER_LOWER = "power_lower"
    BREGMAN_HOLDER = "bregman_holder"


@dataclass(frozen=True)
class HSpec:
    kind: HKind
    kappa: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", HKind(self.kind))
        if self.kind is HKind.BREGMAN_HOLDER and (self.kappa is None or not self.kappa >= 1):
            raise ParameterError(f"kappa must be >= 1, got {self.kappa}")

    @classmethod
    def dp_linear(cls):
        return cls(HKind.DP_LINEAR)

    @classmethod
    def power_lower(cls):
        return cls(HKind.POWER_LOWER)

    @classmethod
    def bregman_holder(cls, kappa):
        return cls(HKind.BREGMAN_HOLDER, float(kappa))

    @property
    def label(self):
        if self.kind is HKind.BREGMAN_HOLDER:
            return f"bregman_holder(kappa={self.kappa:g})"
        return self.kind.value

    def h(self, z, gamma):
        z = np.asarray(z, dtype=float)
        if self.kind is HKind.DP_LINEAR:
            out = gamma - (1 + gamma) * z
        elif self.kind is HKind.POWER_LOWER:
            out = -np.abs(z) ** (1 + gamma) * np.sign(z)
        else:
            k = self.kappa
            a = (1 + gamma) / k
            u = k * (z - 1) + 1  # exactly 1 at z = 1, so H(1) = -1 exactly
            out = -np.abs(u) ** a * np.sign(u)
        return float(out) if out.ndim == 0 else out

    def validate(self, gamma, grid=None, tol=1e-12) -> list[str]:
        z = np.linspace(0, 10, 1001) if grid is None else np.asarray(grid, dtype=float)
        problems = []
        if np.any(self.h(z, gamma) < -z ** (1 + gamma) - tol * (1 + z ** (1 + gamma))):
            problems.append("H(z) < -z^(1+gamma) somewhere on the grid")
        if abs(self.h(1.0, gamma) + 1) > 1e-12:
            problems.append("H(1) != -1")
        return problems


def _fdpce(t: CrossTerms, v: VSpec) -> float:
    g = t.gamma
    if t.cross <= 0 and v.kind is not VKind.LINEAR:
        raise DomainError("<q p^gamma> must be positive")
    if v.kind is VKind.LINEAR:
        return _dpce(t)
    return -(1 + g) / g * v.v(t.cross) + v.v(1.0) / g + v.v(t.p.m0)


def _hce(t: CrossTerms, h: HSpec) -> float:
    g = t.gamma
    return h.h(t.cross / t.p.m0, g) * t.p.m0 / g + 1 / g


# --------------------------------------------------------------------------
# public cross-entropy / divergence API

def _pair(ce: Callable[[CrossTerms], float], q, p, gamma, config):
    """Return ``(d(q, p), D(q, p), quad error)`` from one cross-entropy rule."""
    tp = cross_terms(q, p, gamma, config)
    tq = cross_terms(q, q, gamma, config)
    d_qp = ce(tp)
    return d_qp, d_qp - ce(tq), tp.error + tq.error


def nb_dpce(q, p, phi: PhiSpec, gamma: float | None = None, config=DEFAULT_CONFIG) -> float:
    phi = phi if gamma is None else phi.with_gamma(gamma)
    if phi.gamma < GAMMA_SWITCH:
        return phi.dphi0_at_one() * shannon_cross(q, p, config) - phi.dgamma_at_one()
    return _nb_dpce(cross_terms(q, p, phi.gamma, config), phi)


def nb_dpd(q, p, phi: PhiSpec, gamma: float | None = None, config=DEFAULT_CONFIG) -> float:
    phi = phi if gamma is None else phi.with_gamma(gamma)
    if phi.gamma < GAMMA_SWITCH:
        return phi.dphi0_at_one() * kl(q, p, config)
    return nb_dpce(q, p, phi, config=config) - nb_dpce(q, q, phi, config=config)


def dpce(q, p, gamma, config=DEFAULT_CONFIG):
    _require_positive_gamma(gamma)
    return _dpce(cross_terms(q, p, gamma, config))


def dpd(q, p, gamma, config=DEFAULT_CONFIG):
    return dpce(q, p, gamma, config) - dpce(q, q, gamma, config)


def psce(q, p, gamma, config=DEFAULT_CONFIG):
    _require_positive_gamma(gamma)
    return _psce(cross_terms(q, p, gamma, config))


def psd(q, p, gamma, config=DEFAULT_CONFIG):
    return psce(q, p, gamma, config) - psce(q, q, gamma, config)


def log_gamma_ce(q, p, gamma, config=DEFAULT_CONFIG):
    _require_positive_gamma(gamma)
    return _log_gamma_ce(cross_terms(q, p, gamma, config))


def log_gamma_div(q, p, gamma, config=DEFAULT_CONFIG):
    return log_gamma_ce(q, p, gamma, config) - log_gamma_ce(q, q, gamma, config)


def bhce(q, p, kappa, gamma, config=DEFAULT_CONFIG):
    _require_positive_gamma(gamma)
    if not kappa >= 1:
        raise ParameterError("kappa must be >= 1")
    return _bhce(cross_terms(q, p, gamma, config), kappa)


def bhd(q, p, kappa, gamma, config=DEFAULT_CONFIG):
    return bhce(q, p, kappa, gamma, config) - bhce(q, q, kappa, gamma, config)


def _check_lambdas(l1, l2):
    if l1 < 0 or l2 < 0 or (l1 == 0 and l2 == 0):
        raise ParameterError(f"need lambda1, lambda2 >= 0, not both zero; got {l1}, {l2}")
    if l1 == 0 and l2 < LAMBDA2_EPS:
        raise ParameterError("lambda2 -> 0 limit requires lambda1 > 0")


def psbdpce(q, p, lambda1, lambda2, gamma, config=DEFAULT_CONFIG):
    _require_positive_gamma(gamma)
    _check_lambdas(lambda1, lambda2)
    return _psbdpce(cross_terms(q, p, gamma, config), lambda1, lambda2)


def psbdpd(q, p, lambda1, lambda2, gamma, config=DEFAULT_CONFIG):
    return (psbdpce(q, p, lambda1, lambda2, gamma, config)
            - psbdpce(q, q, lambda1, lambda2, gamma, config))


def log_bdpce(q, p, lambda1, lambda2, gamma, config=DEFAULT_CONFIG):
    _require_positive_gamma(gamma)
    _check_lambdas(lambda1, lambda2)
    return _log_bdpce(cross_terms(q, p, gamma, config), lambda1, lambda2)


def log_bdpd(q, p, lambda1, lambda2, gamma, config=DEFAULT_CONFIG):
    return (log_bdpce(q, p, lambda1, lambda2, gamma, config)
            - log_bdpce(q, q, lambda1, lambda2, gamma, config))


def combined_ce(q, p, lambda1, lambda2, kappa, gamma, config=DEFAULT_CONFIG):
    _require_positive_gamma(gamma)
    _check_lambdas(lambda1, lambda2)
    if not kappa >= 1:
        raise ParameterError("kappa must be >= 1")
    return _combined_ce(cross_terms(q, p, gamma, config), lambda1, lambda2, kappa)


def combined_div(q, p, lambda1, lambda2, kappa, gamma, config=DEFAULT_CONFIG):
    return (combined_ce(q, p, lambda1, lambda2, kappa, gamma, config)
            - combined_ce(q, q, lambda1, lambda2, kappa, gamma, config))


def mixture_ce(q, p, t, gamma, config=DEFAULT_CONFIG):
    """Cross-entropy of the generator ``t z^(1+gamma) + (1 - t) z``."""
    _require_positive_gamma(gamma)
    return nb_dpce(q, p, PhiSpec.mixture(t, gamma), config=config)


def mixture_div(q, p, t, gamma, config=DEFAULT_CONFIG):
    return mixture_ce(q, p, t, gamma, config) - mixture_ce(q, q, t, gamma, config)


def fdpce(q, p, v: VSpec, gamma, config=DEFAULT_CONFIG):
    if gamma < GAMMA_SWITCH:
        return float(v.dv(1.0)) * shannon_cross(q, p, config)
    return _fdpce(cross_terms(q, p, gamma, config), v)


def fdpd(q, p, v: VSpec, gamma, config=DEFAULT_CONFIG):
    if gamma < GAMMA_SWITCH:
        return float(v.dv(1.0)) * kl(q, p, config)
    return fdpce(q, p, v, gamma, config) - fdpce(q, q, v, gamma, config)


def hce(q, p, h: HSpec, gamma, config=DEFAULT_CONFIG):
    _require_positive_gamma(gamma)
    return _hce(cross_terms(q, p, gamma, config), h)


def hd(q, p, h: HSpec, gamma, config=DEFAULT_CONFIG):
    """Holder divergence; ``hce(q, p) - hce(q, q)`` adds ``(<q^(1+gamma)> - 1) / gamma``."""
    return hce(q, p, h, gamma, config) - hce(q, q, h, gamma, config)


def xi_transform(z, lambda1, lambda2, gamma):
    """Strictly increasing map taking the PS-type bridge cross-entropy to the
    log-type one."""
    _require_positive_gamma(gamma)
    if lambda2 <= 0:
        raise ParameterError("xi needs lambda2 > 0")
    z = np.asarray(z, dtype=float)
    arg = -lambda2 * gamma * z + (lambda1 + lambda2) ** (1 / (1 + gamma))
    if np.any(arg <= 0):
        raise DomainError("xi is undefined where -lambda2 gamma z + (lambda1 + lambda2)^(1/(1+gamma)) <= 0")
    out = (-(1 + gamma) / (lambda2 * gamma) * np.log(arg)
           + math.log(lambda1 + lambda2) / (lambda2 * gamma))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# directly coded divergence formulas (independent of the d(q,p) - d(q,q) route)

def dpd_formula(q, p, gamma, config=DEFAULT_CONFIG):
    t = cross_terms(q, p, gamma, config)
    g = gamma
    return t.q.m0 / g - (1 + g) / g * t.cross + t.p.m0


def psd_formula(q, p, gamma, config=DEFAULT_CONFIG):
    t = cross_terms(q, p, gamma, config)
    return t.q.norm / gamma - t.cross / (gamma * t.p.norm ** gamma)


def log_gamma_div_formula(q, p, gamma, config=DEFAULT_CONFIG):
    t = cross_terms(q, p, gamma, config)
    g = gamma
    return t.q.log_m0 / g - (1 + g) / g * math.log(t.cross) + t.p.log_m0


def nb_dpd_formula(q, p, phi: PhiSpec, gamma=None, config=DEFAULT_CONFIG):
    phi = phi if gamma is None else phi.with_gamma(gamma)
    g = phi.gamma
    t = cross_terms(q, p, g, config)
    np_, nq = t.p.norm, t.q.norm
    return ((phi.value(nq) - phi.value(np_)) / g
            - phi.deriv(np_) * (t.cross - t.p.m0) / (g * np_ ** g))


def fdpd_formula(q, p, v: VSpec, gamma, config=DEFAULT_CONFIG):
    t = cross_terms(q, p, gamma, config)
    g = gamma
    return v.v(t.q.m0) / g - (1 + g) / g * v.v(t.cross) + v.v(t.p.m0)


def hd_formula(q, p, h: HSpec, gamma, config=DEFAULT_CONFIG):
    t = cross_terms(q, p, gamma, config)
    return h.h(t.cross / t.p.m0, gamma) * t.p.m0 / gamma + t.q.m0 / gamma


def combined_div_formula(q, p, lambda1, lambda2, kappa, gamma, config=DEFAULT_CONFIG):
    t = cross_terms(q, p, gamma, config)
    g, l1, l2 = gamma, lambda1, lambda2
    b = kappa / (1 + g)
    s = l1 + l2 * t.p.m0
    return (kappa / (l2 * g) * s ** b * (1 - 1 / kappa - (l1 + l2 * t.cross) / s)
            + (l1 + l2 * t.q.m0) ** b / (l2 * g))


def log_bdpd_formula(q, p, lambda1, lambda2, gamma, config=DEFAULT_CONFIG):
    t = cross_terms(q, p, gamma, config)
    g, l1, l2 = gamma, lambda1, lambda2
    return (math.log(l1 + l2 * t.q.m0) / (l2 * g)
            - (1 + g) / (l2 * g) * math.log(l1 + l2 * t.cross)
            + math.log(l1 + l2 * t.p.m0) / l2)


def hce_power_lower_formula(q, p, gamma, config=DEFAULT_CONFIG):
    """Power-transformed pseudo-spherical cross-entropy."""
    t = cross_terms(q, p, gamma, config)
    return -t.cross ** (1 + gamma) / (gamma * t.p.m0 ** gamma) + 1 / gamma


# --------------------------------------------------------------------------
# request / result records

class Family(str, Enum):
    NB_DPD = "nb_dpd"
    DPD = "dpd"
    PSD = "psd"
    LOG_GAMMA = "log_gamma"
    BHD = "bhd"
    BDPD_PS = "bdpd_ps"
    BDPD_LOG = "bdpd_log"
    COMBINED = "combined"
    MIXTURE = "mixture"
    FDPD = "fdpd"
    HD = "hd"
    KL = "kl"


@dataclass(frozen=True)
class DivergenceRequest:
    q: DensityModel
    p: DensityModel
    gamma: float
    family: Family
    params: dict = field(default_factory=dict)
    phi: PhiSpec | None = None
    v: VSpec | None = None
    h: HSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.gamma >= 0:
            raise ParameterError("gamma must be >= 0")
        if self.family is Family.NB_DPD and self.phi is None:
            raise ParameterError("nb_dpd needs a phi spec")
        if self.family is Family.FDPD and self.v is None:
            raise ParameterError("fdpd needs a v spec")
        if self.family is Family.HD and self.h is None:
            raise ParameterError("hd needs an H spec")


@dataclass(frozen=True)
class DivergenceResult:
    cross_entropy: float
    divergence: float
    quad_error: float


def _rule(req: DivergenceRequest) -> Callable[[CrossTerms], float]:
    f, prm = req.family, req.params

    def need(*names):
        try:
            return [float(prm[n]) for n in names]
        except KeyError as exc:
            raise ParameterError(f"family {f.value} needs parameter {exc}") from None

    if f is Family.NB_DPD:
        phi = req.phi.with_gamma(req.gamma)
        return lambda t: _nb_dpce(t, phi)
    if f is Family.DPD:
        return _dpce
    if f is Family.PSD:
        return _psce
    if f is Family.LOG_GAMMA:
        return _log_gamma_ce
    if f is Family.BHD:
        (kappa,) = need("kappa")
        return lambda t: _bhce(t, kappa)
    if f is Family.BDPD_PS:
        l1, l2 = need("lambda1", "lambda2")
        _check_lambdas(l1, l2)
        return lambda t: _psbdpce(t, l1, l2)
    if f is Family.BDPD_LOG:
        l1, l2 = need("lambda1", "lambda2")
        _check_lambdas(l1, l2)
        return lambda t: _log_bdpce(t, l1, l2)
    if f is Family.COMBINED:
        l1, l2, kappa = need("lambda1", "lambda2", "kappa")
        _check_lambdas(l1, l2)
        return lambda t: _combined_ce(t, l1, l2, kappa)
    if f is Family.MIXTURE:
        (tw,) = need("t")
        phi = PhiSpec.mixture(tw, req.gamma)
        return lambda t: _nb_dpce(t, phi)
    if f is Family.FDPD:
        return lambda t: _fdpce(t, req.v)
    if f is Family.HD:
        return lambda t: _hce(t, req.h)
    raise ParameterError(f"family {f.value} has no gamma > 0 rule")


def evaluate(req: DivergenceRequest, config: QuadConfig = DEFAULT_CONFIG) -> DivergenceResult:
    """Evaluate the cross-entropy and divergence named by ``req``."""
    q, p, g = req.q, req.p, req.gamma
    if req.family is Family.KL or g < GAMMA_SWITCH:
        if req.family is Family.KL:
            scale, offset = 1.0, 0.0
        elif req.family is Family.NB_DPD:
            scale, offset = req.phi.dphi0_at_one(), req.phi.dgamma_at_one()
        elif req.family is Family.FDPD:
            scale, offset = float(req.v.dv(1.0)), 0.0
        else:
            raise ParameterError(f"family {req.family.value} needs gamma > 0")
        ce = scale * shannon_cross(q, p, config) - offset
        return DivergenceResult(ce, scale * kl(q, p, config), 0.0)
    d_qp, div, err = _pair(_rule(req), q, p, g, config)
    return DivergenceResult(d_qp, div, err)
