"""Built-in identity suite.

Each check returns the largest discrepancy it observed; a row passes when
that discrepancy is within its tolerance.  The suite covers the reduction
identities between cross-entropy families, the ``xi`` equivalence, the
small-``gamma`` continuity, and the estimating-equation identities.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import divergences as dv
from .densities import Gaussian
from .estimation import (EmpiricalLossSpec, bridge_log_psi, empirical_loss, fdpd_empirical_loss,
                         fdpd_estimating_residual, mean_psi)
from .phi import PhiSpec

DEFAULT_SEED = 20240601
REL_TOL = 1e-8


def random_gaussian_pairs(n: int, seed: int = DEFAULT_SEED) -> list[tuple[Gaussian, Gaussian]]:
    """Pairs with ``mu ~ U(-1, 1)`` and ``sigma ~ U(0.5, 2)`` on both sides."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        mq, mp = rng.uniform(-1, 1, 2)
        sq, sp = rng.uniform(0.5, 2, 2)
        out.append((Gaussian(float(mq), float(sq)), Gaussian(float(mp), float(sp))))
    return out


def builtin_phis() -> list[PhiSpec]:
    return [
        PhiSpec.identity(),
        PhiSpec.density_power(),
        PhiSpec.power_kappa(kappa=2.0),
        PhiSpec.bridge(lambda1=0.5, lambda2=0.5),
        PhiSpec.combined(lambda1=0.3, lambda2=0.7, kappa=2.5),
        PhiSpec.mixture(t=0.5),
    ]


def rel_err(a: float, b: float) -> float:
    scale = max(abs(b), 1e-300)
    return abs(a - b) / scale


@dataclass
class VerifySettings:
    n_pairs: int = 20
    seed: int = DEFAULT_SEED
    gamma: float = 0.5
    lambda1: float = 0.3
    lambda2: float = 0.7
    kappa: float = 2.5
    lambda2_shift: float = 0.0  # applied to the reference side only, for sensitivity tests

    @property
    def pairs(self):
        return random_gaussian_pairs(self.n_pairs, self.seed)


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float
    seconds: float = 0.0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)


@dataclass
class VerifyReport:
    rows: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def table(self) -> str:
        w = max(len(r.name) for r in self.rows)
        lines = [f"{'check':<{w}}  {'max error':>10}  {'tol':>8}  result"]
        for r in self.rows:
            lines.append(f"{r.name:<{w}}  {r.error:10.2e}  {r.tol:8.0e}  {'PASS' if r.passed else 'FAIL'}")
        lines.append(f"{sum(r.passed for r in self.rows)}/{len(self.rows)} checks passed")
        return "\n".join(lines)


Check = Callable[[VerifySettings], float]
REGISTRY: list[tuple[str, float, Check]] = []


def check(name: str, tol: float = REL_TOL):
    def deco(fn: Check) -> Check:
        REGISTRY.append((name, tol, fn))
        return fn
    return deco


def _max_over_pairs(s: VerifySettings, fn) -> float:
    return max(fn(q, p) for q, p in s.pairs)


@check("bhce(kappa=1+gamma) = dpce")
def _bhce_dpce(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: rel_err(dv.bhce(q, p, 1 + g, g), dv.dpce(q, p, g)))


@check("bhce(kappa=1) = psce")
def _bhce_psce(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: rel_err(dv.bhce(q, p, 1.0, g), dv.psce(q, p, g)))


@check("psbdpce(lambda1=0) = lambda2^(-g/(1+g)) psce")
def _ps_l1(s):
    g, l2 = s.gamma, s.lambda2
    ref = l2 + s.lambda2_shift
    return _max_over_pairs(s, lambda q, p: rel_err(
        dv.psbdpce(q, p, 0.0, l2, g), ref ** (-g / (1 + g)) * dv.psce(q, p, g)))


@check("psbdpce(lambda2->0) = lambda1^(-g/(1+g))/(1+g) dpce")
def _ps_l2(s):
    g, l1 = s.gamma, s.lambda1
    return _max_over_pairs(s, lambda q, p: rel_err(
        dv.psbdpce(q, p, l1, 0.0, g), l1 ** (-g / (1 + g)) / (1 + g) * dv.dpce(q, p, g)))


@check("combined(lambda1=0) = lambda2^(k/(1+g)-1) bhce")
def _comb_l1(s):
    g, l2, k = s.gamma, s.lambda2, s.kappa
    ref = l2 + s.lambda2_shift
    return _max_over_pairs(s, lambda q, p: rel_err(
        dv.combined_ce(q, p, 0.0, l2, k, g), ref ** (k / (1 + g) - 1) * dv.bhce(q, p, k, g)))


@check("combined(lambda2->0) = k lambda1^(k/(1+g)-1)/(1+g) dpce")
def _comb_l2(s):
    g, l1, k = s.gamma, s.lambda1, s.kappa
    c = k * l1 ** (k / (1 + g) - 1) / (1 + g)
    return _max_over_pairs(s, lambda q, p: rel_err(dv.combined_ce(q, p, l1, 0.0, k, g), c * dv.dpce(q, p, g)))


@check("combined(kappa=1+g) = dpce")
def _comb_dp(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: rel_err(
        dv.combined_ce(q, p, s.lambda1, s.lambda2, 1 + g, g), dv.dpce(q, p, g)))


@check("combined(kappa=1) = psbdpce")
def _comb_ps(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: rel_err(
        dv.combined_ce(q, p, s.lambda1, s.lambda2, 1.0, g), dv.psbdpce(q, p, s.lambda1, s.lambda2, g)))


@check("mixture = t dpce + (1-t) psce")
def _mixture(s):
    g, t = s.gamma, 0.35
    return _max_over_pairs(s, lambda q, p: rel_err(
        dv.mixture_ce(q, p, t, g), t * dv.dpce(q, p, g) + (1 - t) * dv.psce(q, p, g)))


@check("log_bdpce(lambda1=0) = log_gamma_ce / lambda2")
def _log_l1(s):
    g, l2 = s.gamma, s.lambda2
    ref = l2 + s.lambda2_shift
    return _max_over_pairs(s, lambda q, p: rel_err(dv.log_bdpce(q, p, 0.0, l2, g), dv.log_gamma_ce(q, p, g) / ref))


@check("log_bdpce(lambda2->0) = dpce / lambda1")
def _log_l2(s):
    g, l1 = s.gamma, s.lambda1
    return _max_over_pairs(s, lambda q, p: rel_err(dv.log_bdpce(q, p, l1, 0.0, g), dv.dpce(q, p, g) / l1))


@check("fdpd(v=bridge_log) = log_bdpd")
def _fd_bridge(s):
    g, l1, l2 = s.gamma, s.lambda1, s.lambda2
    v = dv.VSpec.bridge_log(l1, l2)
    return _max_over_pairs(s, lambda q, p: rel_err(dv.fdpd(q, p, v, g), dv.log_bdpd(q, p, l1, l2, g)))


@check("fdpd(v=log) = log_gamma_div")
def _fd_log(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: rel_err(dv.fdpd(q, p, dv.VSpec.log(), g), dv.log_gamma_div(q, p, g)))


@check("fdpce(v=linear) = dpce")
def _fd_lin(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: rel_err(dv.fdpce(q, p, dv.VSpec.linear(), g), dv.dpce(q, p, g)))


@check("hce(H=dp_linear) = dpce")
def _h_lin(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: rel_err(dv.hce(q, p, dv.HSpec.dp_linear(), g), dv.dpce(q, p, g)))


@check("hce(H=power_lower) = transformed psce formula")
def _h_pow(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: rel_err(
        dv.hce(q, p, dv.HSpec.power_lower(), g), dv.hce_power_lower_formula(q, p, g)))


@check("hd = displayed formula")
def _hd(s):
    g = s.gamma
    hs = [dv.HSpec.dp_linear(), dv.HSpec.power_lower(), dv.HSpec.bregman_holder(1.5)]
    return _max_over_pairs(s, lambda q, p: max(
        rel_err(dv.hd(q, p, h, g), dv.hd_formula(q, p, h, g)) for h in hs))


@check("dpd / psd / log_gamma_div = direct formulas")
def _direct(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: max(
        rel_err(dv.dpd(q, p, g), dv.dpd_formula(q, p, g)),
        rel_err(dv.psd(q, p, g), dv.psd_formula(q, p, g)),
        rel_err(dv.log_gamma_div(q, p, g), dv.log_gamma_div_formula(q, p, g))))


@check("nb_dpd = direct formula, all built-in phi")
def _nb(s):
    g = s.gamma
    phis = builtin_phis()
    return _max_over_pairs(s, lambda q, p: max(
        rel_err(dv.nb_dpd(q, p, f, g), dv.nb_dpd_formula(q, p, f, g)) for f in phis))


@check("nb_dpd(density_power) = dpd")
def _nb_dp(s):
    g = s.gamma
    return _max_over_pairs(s, lambda q, p: rel_err(dv.nb_dpd(q, p, PhiSpec.density_power(), g), dv.dpd(q, p, g)))


@check("log_bdpce = xi(psbdpce)", tol=1e-10)
def _xi(s):
    g, l1, l2 = s.gamma, 0.4, 0.6
    return _max_over_pairs(s, lambda q, p: abs(
        dv.log_bdpce(q, p, l1, l2, g) - dv.xi_transform(dv.psbdpce(q, p, l1, l2, g), l1, l2, g)))


@check("argmin agreement psce / log_gamma_ce / psbdpce(lambda1=0)", tol=0.0)
def _argmin(s):
    g = s.gamma
    q = Gaussian(0.3, 1.0)
    mus = np.linspace(-2.0, 2.0, 201)
    idx = []
    for fn in (lambda p: dv.psce(q, p, g), lambda p: dv.log_gamma_ce(q, p, g),
               lambda p: dv.psbdpce(q, p, 0.0, s.lambda2, g)):
        idx.append(int(np.argmin([fn(Gaussian(float(m), 1.0)) for m in mus])))
    return float(max(idx) - min(idx))


@check("nb_dpd(gamma=1e-6) within 1e-4 of phi'_0(1) KL", tol=1e-4)
def _continuity(s):
    pairs = random_gaussian_pairs(10, s.seed)
    worst = 0.0
    for phi in (PhiSpec.identity(), PhiSpec.density_power()):
        for q, p in pairs:
            worst = max(worst, abs(dv.nb_dpd(q, p, phi, 1e-6) - phi.dphi0_at_one() * dv.kl(q, p)))
    return worst


@check("divergence >= -1e-10 and D(p,p) <= 1e-12", tol=0.0)
def _axioms(s):
    bad = 0
    for q, p in s.pairs:
        for g in (0.1, 0.5, 1.0):
            for req in all_requests(q, p, g):
                if dv.evaluate(req).divergence < -1e-10:
                    bad += 1
                same = dv.DivergenceRequest(p, p, g, req.family, req.params, req.phi, req.v, req.h)
                if abs(dv.evaluate(same).divergence) > 1e-12:
                    bad += 1
    return float(bad)


@check("mean psi = gamma N^(1+2g) grad loss", tol=1e-5)
def _gradient(s):
    rng = np.random.default_rng(s.seed)
    worst = 0.0
    for phi in builtin_phis():
        for g in (0.1, 0.5, 1.0):
            x = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), 200)
            theta = np.array([rng.uniform(-1, 1), rng.uniform(-0.5, 0.5)])
            worst = max(worst, gradient_consistency(x, theta, phi, g))
    return worst


@check("fdpd(bridge_log) residual = bilinear psi form", tol=1e-6)
def _bridge_log_bilinear(s):
    rng = np.random.default_rng(s.seed + 1)
    g, l1, l2 = s.gamma, s.lambda1, s.lambda2
    v = dv.VSpec.bridge_log(l1, l2)
    worst = 0.0
    for _ in range(5):
        x = rng.normal(0.5, 1.5, 300)
        theta = np.array([rng.uniform(-1, 1), rng.uniform(-0.5, 0.5)])
        worst = max(worst, bridge_log_bilinear_error(x, theta, l1, l2, g, v))
    return worst


# --------------------------------------------------------------------------
# shared helpers, also used by the test-suite

def all_requests(q, p, g) -> list[dv.DivergenceRequest]:
    """One request per family / generator / v / H combination."""
    R = dv.DivergenceRequest
    F = dv.Family
    reqs = [R(q, p, g, F.NB_DPD, phi=f) for f in builtin_phis()]
    reqs += [
        R(q, p, g, F.DPD), R(q, p, g, F.PSD), R(q, p, g, F.LOG_GAMMA),
        R(q, p, g, F.BHD, {"kappa": 2.0}),
        R(q, p, g, F.BDPD_PS, {"lambda1": 0.4, "lambda2": 0.6}),
        R(q, p, g, F.BDPD_LOG, {"lambda1": 0.4, "lambda2": 0.6}),
        R(q, p, g, F.COMBINED, {"lambda1": 0.3, "lambda2": 0.7, "kappa": 2.5}),
        R(q, p, g, F.MIXTURE, {"t": 0.5}),
    ]
    for v in (dv.VSpec.linear(), dv.VSpec.log(), dv.VSpec.ln_zeta(0.5), dv.VSpec.bridge_log(0.4, 0.6)):
        reqs.append(R(q, p, g, F.FDPD, v=v))
    for h in (dv.HSpec.dp_linear(), dv.HSpec.power_lower(), dv.HSpec.bregman_holder(1.5)):
        reqs.append(R(q, p, g, F.HD, h=h))
    return reqs


def fd_gradient(fun, theta, h=1e-6) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.array([(fun(theta + h * e) - fun(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])


def gradient_consistency(x, theta, phi: PhiSpec, gamma: float, sign: float = 1.0) -> float:
    """Relative mismatch between ``mean psi`` and ``sign gamma N^(1+2g) grad loss``."""
    spec = EmpiricalLossSpec(x, Gaussian, phi, gamma)
    grad = fd_gradient(lambda t: empirical_loss(spec, t), theta)
    n = Gaussian.from_theta(theta).power_moments(gamma).norm
    ref = sign * gamma * n ** (1 + 2 * gamma) * grad
    return float(np.max(np.abs(mean_psi(spec, theta) - ref)) / np.max(np.abs(ref)))


def bridge_log_bilinear_error(x, theta, l1, l2, g, v) -> float:
    """Compare the FDPD residual, the loss gradient and the bilinear psi mean."""
    res = fdpd_estimating_residual(x, theta, Gaussian, v, g)
    grad = fd_gradient(lambda t: fdpd_empirical_loss(x, t, Gaussian, v, g), theta)
    model = Gaussian.from_theta(theta)
    a_hat = float(np.mean(np.exp(g * model.log_pdf(x))))
    m0 = model.power_moments(g).m0
    bil = bridge_log_psi(x, theta, Gaussian, l1, l2, g).mean(axis=0)
    e1 = np.max(np.abs(res - grad / (1 + g))) / np.max(np.abs(res))
    e2 = np.max(np.abs(bil - (l1 + l2 * a_hat) * (l1 + l2 * m0) * res)) / np.max(np.abs(bil))
    return float(max(e1, e2))


def run(settings: VerifySettings | None = None, names=None) -> VerifyReport:
    settings = settings or VerifySettings()
    report = VerifyReport()
    for name, tol, fn in REGISTRY:
        if names is not None and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            err = float(fn(settings))
        except Exception as exc:  # a crashing check is a failing row
            report.rows.append(CheckResult(name, math.inf, tol, time.perf_counter() - t0, repr(exc)))
            continue
        if math.isnan(err):
            err = math.inf
        report.rows.append(CheckResult(name, err, tol, time.perf_counter() - t0))
    return report
