"""Univariate parametric densities, scores and powered integrals.

Scale-type parameters live in log space, so the free parameter vectors are
``(mu, log sigma)`` for the Gaussian and ``(log rate,)`` for the exponential.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar, Mapping

import numpy as np

from .errors import DomainError, ParameterError
from .quadrature import DEFAULT_CONFIG, QuadConfig, integrate_strict

LOG_2PI = math.log(2 * math.pi)
GAUSS_TRUNC_SIGMAS = 12.0
EXP_TRUNC_RATES = 50.0


@dataclass(frozen=True)
class PowerMoments:
    """``m0 = <p^(1+gamma)>``, ``m1 = <p^(1+gamma) s>`` and ``norm = m0^(1/(1+gamma))``."""

    gamma: float
    m0: float
    m1: np.ndarray
    log_m0: float
    quad_error: float = 0.0

    @property
    def norm(self) -> float:
        return math.exp(self.log_norm)

    @property
    def log_norm(self) -> float:
        return self.log_m0 / (1.0 + self.gamma)


class DensityModel:
    """Common interface.  Subclasses are frozen dataclasses."""

    family: ClassVar[str]
    param_names: ClassVar[tuple[str, ...]] = ()

    # to be provided by subclasses
    def log_pdf(self, x):
        raise NotImplementedError

    def score(self, x) -> np.ndarray:
        """Score vector(s) ``d log p / d theta``; shape ``(len(x), dim)``."""
        raise NotImplementedError

    def log_density(self, x) -> np.ndarray:
        """Log density that returns ``-inf`` off the support instead of raising."""
        return np.asarray(self.log_pdf(x), dtype=float)

    @property
    def theta(self) -> np.ndarray:
        raise NotImplementedError

    @classmethod
    def from_theta(cls, theta) -> "DensityModel":
        raise NotImplementedError

    def truncation(self) -> tuple[float, float]:
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    # shared behaviour
    @property
    def dim(self) -> int:
        return len(self.param_names)

    def pdf(self, x):
        out = np.exp(self.log_pdf(x))
        return float(out) if np.ndim(out) == 0 else out

    def power_moments(self, gamma: float, config: QuadConfig = DEFAULT_CONFIG) -> PowerMoments:
        return self._quadrature_moments(gamma, config)

    def _quadrature_moments(self, gamma: float, config: QuadConfig = DEFAULT_CONFIG) -> PowerMoments:
        if gamma < 0:
            raise ParameterError("gamma must be >= 0")
        cfg = config.over(*self.truncation())
        bps = self.breakpoints()
        r0 = integrate_strict(lambda x: np.exp((1 + gamma) * self.log_pdf(x)), cfg, bps)
        m1 = []
        err = r0.error
        for j in range(self.dim):
            rj = integrate_strict(
                lambda x, j=j: np.exp((1 + gamma) * self.log_pdf(x)) * self.score(x)[:, j], cfg, bps
            )
            m1.append(rj.value)
            err += rj.error
        if not r0.value > 0:
            raise DomainError("power moment <p^(1+gamma)> is not positive")
        return PowerMoments(gamma, r0.value, np.array(m1), math.log(r0.value), err)

    def sample(self, n: int, seed) -> np.ndarray:
        if n < 1:
            raise ParameterError("n must be >= 1")
        return self.draw(n, np.random.default_rng(seed))


@dataclass(frozen=True)
class Gaussian(DensityModel):
    mu: float = 0.0
    sigma: float = 1.0

    family: ClassVar[str] = "gaussian"
    param_names: ClassVar[tuple[str, ...]] = ("mu", "log_sigma")

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma) and math.isfinite(self.mu)):
            raise ParameterError(f"invalid Gaussian parameters mu={self.mu}, sigma={self.sigma}")

    def log_pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        out = -0.5 * z * z - math.log(self.sigma) - 0.5 * LOG_2PI
        return float(out) if out.ndim == 0 else out

    def score(self, x):
        z = (np.atleast_1d(np.asarray(x, dtype=float)) - self.mu) / self.sigma
        return np.column_stack([z / self.sigma, z * z - 1.0])

    @property
    def theta(self):
        return np.array([self.mu, math.log(self.sigma)])

    @classmethod
    def from_theta(cls, theta):
        return cls(float(theta[0]), math.exp(float(theta[1])))

    def truncation(self):
        w = GAUSS_TRUNC_SIGMAS * self.sigma
        return self.mu - w, self.mu + w

    def power_moments(self, gamma, config=DEFAULT_CONFIG):
        if gamma < 0:
            raise ParameterError("gamma must be >= 0")
        log_m0 = -0.5 * gamma * (LOG_2PI + 2 * math.log(self.sigma)) - 0.5 * math.log1p(gamma)
        m0 = math.exp(log_m0)
        # d m0 / d log sigma = -gamma m0 = (1 + gamma) m1
        return PowerMoments(gamma, m0, np.array([0.0, -gamma * m0 / (1 + gamma)]), log_m0)

    def draw(self, n, rng):
        return rng.normal(self.mu, self.sigma, size=n)

    def to_dict(self):
        return {"family": "gaussian", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class Exponential(DensityModel):
    rate: float = 1.0

    family: ClassVar[str] = "exponential"
    param_names: ClassVar[tuple[str, ...]] = ("log_rate",)

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ParameterError(f"invalid exponential rate {self.rate}")

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("exponential density is supported on x >= 0")
        return x

    def log_pdf(self, x):
        x = self._check(x)
        out = math.log(self.rate) - self.rate * x
        return float(out) if out.ndim == 0 else out

    def score(self, x):
        x = np.atleast_1d(self._check(x))
        return (1.0 - self.rate * x)[:, None]

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, math.log(self.rate) - self.rate * x, -np.inf)

    @property
    def theta(self):
        return np.array([math.log(self.rate)])

    @classmethod
    def from_theta(cls, theta):
        return cls(math.exp(float(theta[0])))

    def truncation(self):
        return 0.0, EXP_TRUNC_RATES / self.rate

    def power_moments(self, gamma, config=DEFAULT_CONFIG):
        if gamma < 0:
            raise ParameterError("gamma must be >= 0")
        log_m0 = gamma * math.log(self.rate) - math.log1p(gamma)
        m0 = math.exp(log_m0)
        return PowerMoments(gamma, m0, np.array([gamma * m0 / (1 + gamma)]), log_m0)

    def draw(self, n, rng):
        return rng.exponential(1.0 / self.rate, size=n)

    def to_dict(self):
        return {"family": "exponential", "rate": self.rate}


@dataclass(frozen=True, eq=False)
class GridDensity(DensityModel):
    """Piecewise-linear density on a grid, normalised by the trapezoid rule.

    Carries no free parameters; it exists so arbitrary ``q`` (for example a
    contaminated mixture) can enter divergence evaluations.
    """

    x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    family: ClassVar[str] = "grid"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2:
            raise ParameterError("grid and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ParameterError("grid must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ParameterError("density values must be finite and nonnegative")
        mass = np.trapezoid(v, x)
        if not mass > 0:
            raise ParameterError("density has zero mass")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v / mass)

    @classmethod
    def from_model(cls, model: DensityModel, n: int = 4001) -> "GridDensity":
        lo, hi = model.truncation()
        xs = np.linspace(lo, hi, n)
        return cls(xs, model.pdf(xs))

    @classmethod
    def mixture(cls, components, weights, n: int = 8001) -> "GridDensity":
        """Grid approximation of ``sum_k w_k p_k`` (e.g. a contaminated model)."""
        lo = min(c.truncation()[0] for c in components)
        hi = max(c.truncation()[1] for c in components)
        xs = np.linspace(lo, hi, n)
        vals = sum(w * c.pdf(xs) for c, w in zip(components, weights))
        return cls(xs, vals)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.x, self.values, left=0.0, right=0.0)
        return float(out) if out.ndim == 0 else out

    def log_pdf(self, x):
        with np.errstate(divide="ignore"):
            out = np.log(self.pdf(x))
        return float(out) if np.ndim(out) == 0 else out

    def score(self, x):
        return np.zeros((np.atleast_1d(x).size, 0))

    @property
    def theta(self):
        return np.zeros(0)

    def truncation(self):
        return float(self.x[0]), float(self.x[-1])

    def breakpoints(self):
        return tuple(self.x[1:-1])

    def power_moments(self, gamma, config=DEFAULT_CONFIG):
        # exact per linear segment would need |grid| panels anyway; reuse quadrature
        return self._quadrature_moments(gamma, config)

    def draw(self, n, rng):
        seg_mass = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.x)
        seg = rng.choice(seg_mass.size, size=n, p=seg_mass / seg_mass.sum())
        u = rng.random(n)
        a, b = self.values[seg], self.values[seg + 1]
        h = self.x[seg + 1] - self.x[seg]
        # invert the CDF of a linear density on [0, 1]: a t + (b - a) t^2 / 2 = u (a + b) / 2
        slope = b - a
        rhs = u * (a + b) / 2
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(
                np.abs(slope) > 1e-14 * np.maximum(a, b),
                (-a + np.sqrt(a * a + 2 * slope * rhs)) / np.where(slope == 0, 1, slope),
                u,
            )
        return self.x[seg] + h * np.clip(t, 0.0, 1.0)

    def to_dict(self):
        return {"family": "grid", "x": self.x.tolist(), "values": self.values.tolist()}


FAMILIES: dict[str, type[DensityModel]] = {"gaussian": Gaussian, "exponential": Exponential}


def model_from_dict(record: Mapping) -> DensityModel:
    rec = dict(record)
    fam = str(rec.pop("family", "")).lower()
    try:
        if fam == "gaussian":
            return Gaussian(float(rec.pop("mu", 0.0)), float(rec.pop("sigma", 1.0)))
        if fam == "exponential":
            return Exponential(float(rec.pop("rate", 1.0)))
        if fam == "grid":
            return GridDensity(np.asarray(rec.pop("x")), np.asarray(rec.pop("values")))
    except KeyError as exc:
        raise ParameterError(f"missing field {exc} in model record") from exc
    raise ParameterError(f"unknown density family {fam!r}")


def family_class(name: str) -> type[DensityModel]:
    try:
        return FAMILIES[name.lower()]
    except KeyError:
        raise ParameterError(f"unknown parametric family {name!r}") from None


def sample(model: DensityModel, n: int, seed) -> np.ndarray:
    return model.sample(n, seed)


def sample_contaminated(model: DensityModel, contaminant: DensityModel, eps: float, n: int, seed) -> np.ndarray:
    """Draw from ``(1 - eps) model + eps contaminant`` with one coin flip per draw.

    The clean draws come first from the generator, so ``eps = 0`` reproduces
    :func:`sample` with the same seed exactly.
    """
    if not 0 <= eps < 1:
        raise ParameterError(f"eps must lie in [0, 1), got {eps}")
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = model.draw(n, rng)
    if eps == 0:
        return x
    flip = rng.random(n) < eps
    x[flip] = contaminant.draw(int(flip.sum()), rng)
    return x


def pdf(model, x):
    return model.pdf(x)


def log_pdf(model, x):
    return model.log_pdf(x)


def score(model, x):
    return model.score(x)


def power_moments(model, gamma, config=DEFAULT_CONFIG):
    return model.power_moments(gamma, config)


# Dataset I/O ---------------------------------------------------------------

def read_dataset(path) -> np.ndarray:
    """Read one value per line, or a single-column CSV with header ``x``."""
    text = Path(path).read_text()
    return parse_dataset(text)


def parse_dataset(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and r[0].strip()]
    if not rows:
        raise ParameterError("dataset is empty")
    if rows[0][0].strip().lower() == "x":
        rows = rows[1:]
    try:
        data = np.array([float(r[0]) for r in rows])
    except ValueError as exc:
        raise ParameterError(f"malformed dataset: {exc}") from exc
    if data.size == 0:
        raise ParameterError("dataset is empty")
    return data


def write_dataset(path, data) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("x\n")
        for v in np.asarray(data, dtype=float):
            fh.write(f"{float(v)!r}\n")
