"""Parametric sub-Poissonian pulsed photon source.

The source is described by its mean photon number per clock pulse (taken at
the collection cone of the microscope objective) and its zero-delay second
order autocorrelation.  Photon-number support stops at two, which is the
multi-photon mass a photon-number-splitting eavesdropper is granted.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from .errors import EstimationError, InfeasibleParameters

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SourceParams:
    clock_hz: float = 40e6
    emission_rate_hz: float = 4e6
    g2: float = 0.85
    coupling_efficiency: float = 0.11
    primary_lifetime_ps: float = 464.0
    tail_fraction: float = 0.05
    tail_lifetime_ns: float = 300.0

    def __post_init__(self):
        for name in ("clock_hz", "primary_lifetime_ps", "tail_lifetime_ns"):
            if not getattr(self, name) > 0:
                raise InfeasibleParameters(f"{name} must be > 0")
        if self.emission_rate_hz < 0:
            raise InfeasibleParameters("emission_rate_hz must be >= 0")
        if self.g2 < 0:
            raise InfeasibleParameters("g2 must be >= 0")
        if not 0 <= self.coupling_efficiency <= 1:
            raise InfeasibleParameters("coupling_efficiency must lie in [0, 1]")
        if not 0 <= self.tail_fraction <= 1:
            raise InfeasibleParameters("tail_fraction must lie in [0, 1]")
        if self.g2 * self.mu > 1:
            raise InfeasibleParameters(
                f"g2*mu = {self.g2 * self.mu:.6g} exceeds 1; no three-point distribution exists"
            )

    @property
    def mu(self) -> float:
        """Mean photons per pulse at the collection cone."""
        return self.emission_rate_hz / self.clock_hz


@dataclass(frozen=True)
class PhotonNumberDist:
    p0: float
    p1: float
    p2: float

    def __post_init__(self):
        for name in ("p0", "p1", "p2"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InfeasibleParameters(f"{name} = {v!r} outside [0, 1]")
        if abs(self.p0 + self.p1 + self.p2 - 1) > _SUM_TOL:
            raise InfeasibleParameters("photon-number probabilities do not sum to 1")

    @property
    def mean(self) -> float:
        return self.p1 + 2 * self.p2

    @property
    def g2(self) -> float:
        """Zero-delay autocorrelation, <n(n-1)>/<n>^2 (nan for the vacuum)."""
        m = self.mean
        return 2 * self.p2 / m**2 if m > 0 else float("nan")


@dataclass(frozen=True)
class EmissionTimeModel:
    """Emission delay after excitation, as seen through detector jitter.

    A fast exponential (the radiative lifetime) mixed with a slow exponential
    tail, convolved with a zero-mean Gaussian instrument response.
    """

    primary_lifetime_ps: float = 464.0
    tail_fraction: float = 0.05
    tail_lifetime_ns: float = 300.0
    jitter_sigma_ps: float = 0.0

    def __post_init__(self):
        if not (self.primary_lifetime_ps > 0 and self.tail_lifetime_ns > 0):
            raise InfeasibleParameters("lifetimes must be > 0")
        if not 0 <= self.tail_fraction <= 1:
            raise InfeasibleParameters("tail_fraction must lie in [0, 1]")
        if self.jitter_sigma_ps < 0:
            raise InfeasibleParameters("jitter_sigma_ps must be >= 0")

    @property
    def tail_lifetime_ps(self) -> float:
        return self.tail_lifetime_ns * 1e3

    @property
    def mean_ps(self) -> float:
        return (1 - self.tail_fraction) * self.primary_lifetime_ps + self.tail_fraction * self.tail_lifetime_ps

    def _components(self):
        out = []
        for weight, tau in ((1 - self.tail_fraction, self.primary_lifetime_ps),
                            (self.tail_fraction, self.tail_lifetime_ps)):
            if weight == 0:
                continue
            if self.jitter_sigma_ps > 0:
                s = self.jitter_sigma_ps
                out.append((weight, stats.exponnorm(tau / s, scale=s)))
            else:
                out.append((weight, stats.expon(scale=tau)))
        return out

    def pdf(self, t_ps):
        return sum(w * d.pdf(t_ps) for w, d in self._components())

    def cdf(self, t_ps):
        return sum(w * d.cdf(t_ps) for w, d in self._components())


def pn_distribution(mu: float, g2: float) -> PhotonNumberDist:
    """Three-point photon-number distribution with mean ``mu`` and g2 ``g2``.

    >>> d = pn_distribution(0.1, 0.4)
    >>> round(d.p0, 12), round(d.p1, 12), round(d.p2, 12)
    (0.902, 0.096, 0.002)
    """
    if mu < 0 or g2 < 0:
        raise InfeasibleParameters("mu and g2 must be >= 0")
    p2 = g2 * mu**2 / 2
    p1 = mu - 2 * p2
    p0 = 1 - p1 - p2
    if p1 < 0:
        raise InfeasibleParameters(f"p1 = {p1:.6g} < 0: requires g2*mu <= 1 (got {g2 * mu:.6g})")
    if p0 < 0:
        raise InfeasibleParameters(f"p0 = {p0:.6g} < 0: requires mu - g2*mu^2/2 <= 1")
    return PhotonNumberDist(p0, p1, p2)


def sample_photon_number(dist: PhotonNumberDist, rng: np.random.Generator, size=None):
    """Draw photon numbers 0, 1 or 2; a scalar when ``size`` is None."""
    u = rng.random(size)
    if size is None:
        return int(u >= dist.p0) + int(u >= dist.p0 + dist.p1)
    return (u >= dist.p0).astype(np.int8) + (u >= dist.p0 + dist.p1)


def sample_emission_time(model: EmissionTimeModel, rng: np.random.Generator, size=None):
    """Emission delay in ps, jitter included."""
    shape = () if size is None else size
    tail = rng.random(shape) < model.tail_fraction
    tau = np.where(tail, model.tail_lifetime_ps, model.primary_lifetime_ps)
    t = rng.exponential(1.0, shape) * tau
    if model.jitter_sigma_ps > 0:
        t = t + rng.normal(0.0, model.jitter_sigma_ps, shape)
    return float(t) if size is None else t


class G2Estimate(NamedTuple):
    g2: float
    stderr: float
    zero_lag: int
    side_mean: float


def _lag_coincidences(ia, ib, lag):
    # count pulses i with a click at i in arm a and at i+lag in arm b
    target = ia + lag
    pos = np.searchsorted(ib, target)
    pos = np.minimum(pos, len(ib) - 1)
    return int(np.count_nonzero(ib[pos] == target)) if len(ib) else 0


def estimate_g2(click_a, click_b, max_lag: int = 10) -> G2Estimate:
    """Pulsed HBT estimate of g2(0) from per-pulse click indicators.

    The zero-lag coincidence count is normalised by the mean of the side
    peaks at lags 1..max_lag on both sides, each rescaled to the number of
    overlapping pulse pairs.
    """
    a = np.asarray(click_a, dtype=bool)
    b = np.asarray(click_b, dtype=bool)
    if a.size == 0 or b.size == 0:
        raise EstimationError("empty click stream")
    if a.shape != b.shape:
        raise EstimationError("click streams differ in length")
    if max_lag < 1:
        raise EstimationError("max_lag must be >= 1")
    n = a.size
    ia = np.flatnonzero(a)
    ib = np.flatnonzero(b)
    c0 = _lag_coincidences(ia, ib, 0)
    side = []
    for k in range(1, max_lag + 1):
        pairs = n - k
        if pairs <= 0:
            break
        scale = n / pairs
        side.append(_lag_coincidences(ia, ib, k) * scale)
        side.append(_lag_coincidences(ia, ib, -k) * scale)
    m = float(np.mean(side)) if side else 0.0
    if m == 0:
        raise EstimationError("no side-peak coincidences; g2 denominator is zero")
    g = c0 / m
    var = max(c0, 1) / m**2 + g**2 / (len(side) * m)
    return G2Estimate(g, float(np.sqrt(var)), c0, m)


def simulate_hbt(n_pulses: int, rng: np.random.Generator, dist: PhotonNumberDist | None = None,
                 poisson_mu: float | None = None, efficiency: float = 0.4):
    """Per-pulse click indicators for the two arms of a 50/50 HBT split.

    Photons come from ``dist`` or, with ``poisson_mu``, from Poissonian light.
    Detectors are threshold devices: any number of detected photons is one
    click.
    """
    if (dist is None) == (poisson_mu is None):
        raise ValueError("give exactly one of dist or poisson_mu")
    if dist is not None:
        n = sample_photon_number(dist, rng, n_pulses)
    else:
        n = rng.poisson(poisson_mu, n_pulses)
    n_a = rng.binomial(n, 0.5)
    det_a = rng.binomial(n_a, efficiency)
    det_b = rng.binomial(n - n_a, efficiency)
    return det_a > 0, det_b > 0
