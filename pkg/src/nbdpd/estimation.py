"""Minimum-divergence estimation as M-estimation.

The plug-in loss replaces ``<q p^gamma>`` by the sample mean of
``p_theta(x_i)^gamma`` while keeping the model-side power moments exact.
Its gradient equals ``mean(psi) / (gamma ||p||^(1+2 gamma))`` where ``psi``
is the per-observation estimating function returned by :func:`psi`.

:func:`solve` runs a damped Newton iteration on ``mean(psi) / gamma`` (the
``gamma -> 0`` limit of which is ``-phi'_0(1)`` times the score), with a
finite-difference Jacobian and a backtracking guard that never lets the
loss increase.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .densities import DensityModel, Exponential, Gaussian, family_class
from .divergences import GAMMA_SWITCH
from .errors import DomainError, ParameterError
from .phi import PhiSpec

log = logging.getLogger(__name__)

TOL_ROOT = 1e-8
MAX_ITER = 200
JAC_STEP = 1e-6
MAX_HALVINGS = 30
LOSS_SLACK = 1e-12
MULTISTART_PERTURBATION = 0.5


@dataclass(frozen=True)
class EmpiricalLossSpec:
    data: np.ndarray
    family: type[DensityModel]
    phi: PhiSpec
    gamma: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float).ravel()
        if data.size == 0 or not np.all(np.isfinite(data)):
            raise ParameterError("data must be a nonempty array of finite values")
        fam = family_class(self.family) if isinstance(self.family, str) else self.family
        if fam is Exponential and np.any(data < 0):
            raise DomainError("exponential model needs nonnegative data")
        if not self.gamma >= 0:
            raise ParameterError("gamma must be >= 0")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "phi", self.phi.with_gamma(self.gamma))

    def model(self, theta) -> DensityModel:
        return self.family.from_theta(np.asarray(theta, dtype=float))


@dataclass
class EstimationResult:
    theta_hat: np.ndarray
    iterations: int
    mean_psi_norm: float
    converged: bool
    loss: float
    trace: list[tuple[np.ndarray, float, float]] = field(default_factory=list, repr=False)
    starts: int = 1


def empirical_loss(spec: EmpiricalLossSpec, theta) -> float:
    model = spec.model(theta)
    lp = model.log_pdf(spec.data)
    phi, g = spec.phi, spec.gamma
    if g < GAMMA_SWITCH:
        return float(-phi.dphi0_at_one() * np.mean(lp) - phi.dgamma_at_one())
    mom = model.power_moments(g)
    ln = mom.log_norm
    n = math.exp(ln)
    a_m1 = float(np.mean(np.expm1(g * lp)))
    return float(-phi.increment(ln) / g
                 - phi.deriv(n) * (a_m1 - math.expm1(mom.log_m0)) / (g * n ** g))


def _psi_parts(x, model: DensityModel, phi: PhiSpec, g: float):
    """Return ``(coef_a, coef_b, centred, weighted, m1)`` with
    ``psi / gamma = -m1 coef_a centred - coef_b weighted``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mom = model.power_moments(g)
    n = mom.norm
    lp = model.log_pdf(x)
    s = model.score(x)
    pg = np.exp(g * lp)
    d1, d2 = phi.deriv(n), phi.second_deriv(n)
    # (p^gamma - <p^(1+gamma)>) / gamma without cancellation
    centred = (np.expm1(g * lp) - math.expm1(mom.log_m0)) / g
    coef_a = n * d2 - g * d1
    coef_b = d1 * mom.m0
    weighted = pg[:, None] * s - mom.m1[None, :]
    return coef_a, coef_b, centred, weighted, mom.m1


def psi(x, theta, family, phi: PhiSpec, gamma: float) -> np.ndarray:
    """Per-observation estimating function, shape ``(len(x), dim)``.

    ``psi = -<p^(1+g) s> (N phi''(N) - g phi'(N)) (p(x)^g - <p^(1+g)>)
            - g phi'(N) <p^(1+g)> (p(x)^g s(x) - <p^(1+g) s>)``
    with ``N = ||p||_{1+g}``; all moments at ``theta``.
    """
    if not gamma > 0:
        raise ParameterError("psi needs gamma > 0")
    fam = family_class(family) if isinstance(family, str) else family
    model = fam.from_theta(np.asarray(theta, dtype=float))
    phi = phi.with_gamma(gamma)
    a, b, centred, weighted, m1 = _psi_parts(x, model, phi, gamma)
    return -m1[None, :] * a * centred[:, None] * gamma - gamma * b * weighted


def mean_psi(spec: EmpiricalLossSpec, theta) -> np.ndarray:
    return psi(spec.data, theta, spec.family, spec.phi, spec.gamma).mean(axis=0)


def scaled_residual(spec: EmpiricalLossSpec, theta) -> np.ndarray:
    """``mean(psi) / gamma``; equals ``-phi'_0(1) mean(score)`` below the gamma switch."""
    model = spec.model(theta)
    g = spec.gamma
    if g < GAMMA_SWITCH:
        return -spec.phi.dphi0_at_one() * model.score(spec.data).mean(axis=0)
    a, b, centred, weighted, m1 = _psi_parts(spec.data, model, spec.phi, g)
    return -m1 * a * centred.mean() - b * weighted.mean(axis=0)


def _fd_jacobian(fun, theta, h=JAC_STEP):
    d = theta.size
    jac = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        jac[:, j] = (fun(theta + e) - fun(theta - e)) / (2 * h)
    return jac


def auto_init(spec: EmpiricalLossSpec) -> np.ndarray:
    x = spec.data
    if spec.family is Gaussian:
        med = float(np.median(x))
        mad = 1.4826 * float(np.median(np.abs(x - med)))
        if not mad > 0:
            mad = float(np.std(x)) or 1.0
        return np.array([med, math.log(mad)])
    if spec.family is Exponential:
        mean = float(np.mean(x))
        return np.array([-math.log(mean) if mean > 0 else 0.0])
    raise ParameterError(f"no automatic initialisation for {spec.family.__name__}")


def _safe_loss(spec, theta):
    try:
        val = empirical_loss(spec, theta)
    except (ArithmeticError, ValueError):
        return math.inf
    return val if math.isfinite(val) else math.inf


def _line_search(spec, theta, direction, loss0):
    alpha = 1.0
    for _ in range(MAX_HALVINGS + 1):
        cand = theta + alpha * direction
        lc = _safe_loss(spec, cand)
        if lc <= loss0 + LOSS_SLACK:
            return cand, lc
        alpha *= 0.5
    return None, None


def _newton(spec, theta0, tol, max_iter) -> EstimationResult:
    theta = np.array(theta0, dtype=float)
    resid = scaled_residual(spec, theta)
    loss = empirical_loss(spec, theta)
    rn = float(np.linalg.norm(resid))
    trace = [(theta.copy(), loss, rn)]
    it = 0
    while rn > tol and it < max_iter:
        cand = None
        try:
            jac = _fd_jacobian(lambda t: scaled_residual(spec, t), theta)
            step = -np.linalg.solve(jac, resid)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError("non-finite Newton step")
        except (np.linalg.LinAlgError, ArithmeticError, ValueError):
            step = None
        # resid is a positive multiple of the loss gradient
        if step is not None and float(step @ resid) < 0:
            cand, new_loss = _line_search(spec, theta, step, loss)
        if cand is None:
            grad_step = -resid / max(1.0, rn)
            cand, new_loss = _line_search(spec, theta, grad_step, loss)
        if cand is None:
            log.debug("line search failed at iteration %d (|resid|=%.3e)", it, rn)
            break
        it += 1
        theta, loss = cand, new_loss
        resid = scaled_residual(spec, theta)
        rn = float(np.linalg.norm(resid))
        trace.append((theta.copy(), loss, rn))
    return EstimationResult(theta, it, rn, rn <= tol, loss, trace)


def _perturbations(d: int) -> list[np.ndarray]:
    signs = [np.ones(d), -np.ones(d), np.array([(-1.0) ** (j + 1) for j in range(d)])]
    out = []
    for s in signs:
        if not any(np.array_equal(s, o) for o in out):
            out.append(s)
    return [MULTISTART_PERTURBATION * s for s in out]


def solve(spec: EmpiricalLossSpec, init: Sequence[float] | str = "auto",
          tol: float = TOL_ROOT, max_iter: int = MAX_ITER) -> EstimationResult:
    """Find a root of the estimating equation that is a local loss minimum.

    If the first run does not converge, three perturbed starts are tried and
    the lowest-loss converged root is kept.
    """
    theta0 = auto_init(spec) if isinstance(init, str) and init == "auto" else np.asarray(init, dtype=float)
    if theta0.shape != (len(spec.family.param_names),):
        raise ParameterError(f"init must have {len(spec.family.param_names)} components")
    best = _newton(spec, theta0, tol, max_iter)
    if best.converged:
        return best
    runs = [best]
    for delta in _perturbations(theta0.size):
        runs.append(_newton(spec, theta0 + delta, tol, max_iter))
    conv = [r for r in runs if r.converged]
    pool = conv or runs
    chosen = min(pool, key=lambda r: r.loss)
    chosen.starts = len(runs)
    return chosen


def mle(data, family) -> np.ndarray:
    """Closed-form maximum-likelihood estimate in the log parameterisation."""
    x = np.asarray(data, dtype=float)
    fam = family_class(family) if isinstance(family, str) else family
    if fam is Gaussian:
        return np.array([x.mean(), math.log(x.std())])
    if fam is Exponential:
        return np.array([-math.log(x.mean())])
    raise ParameterError(f"no closed-form MLE for {fam.__name__}")


# Functional density power (FDPD) estimating equations ---------------------

def fdpd_empirical_loss(data, theta, family, v, gamma: float) -> float:
    fam = family_class(family) if isinstance(family, str) else family
    model = fam.from_theta(np.asarray(theta, dtype=float))
    a_hat = float(np.mean(np.exp(gamma * model.log_pdf(data))))
    mom = model.power_moments(gamma)
    return -(1 + gamma) / gamma * v.v(a_hat) + v.v(mom.m0)


def fdpd_estimating_residual(data, theta, family, v, gamma: float) -> np.ndarray:
    """``-v'(A) mean(p^g s) + v'(<p^(1+g)>) <p^(1+g) s>`` with ``A = mean(p^g)``.

    Equals the FDPD plug-in loss gradient divided by ``1 + gamma``.
    """
    fam = family_class(family) if isinstance(family, str) else family
    model = fam.from_theta(np.asarray(theta, dtype=float))
    pg = np.exp(gamma * model.log_pdf(data))
    s = model.score(data)
    mom = model.power_moments(gamma)
    a_hat = float(pg.mean())
    b_hat = (pg[:, None] * s).mean(axis=0)
    return -v.dv(a_hat) * b_hat + v.dv(mom.m0) * mom.m1


def bridge_log_psi(x, theta, family, lambda1: float, lambda2: float, gamma: float) -> np.ndarray:
    """Additive estimating function of the log-type bridge divergence."""
    fam = family_class(family) if isinstance(family, str) else family
    model = fam.from_theta(np.asarray(theta, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pg = np.exp(gamma * model.log_pdf(x))
    s = model.score(x)
    mom = model.power_moments(gamma)
    return (-(pg[:, None] * s) * (lambda1 + lambda2 * mom.m0)
            + mom.m1[None, :] * (lambda1 + lambda2 * pg)[:, None])
