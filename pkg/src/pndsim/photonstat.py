"""Photon-number statistics of the pulsed source and efficiency thinning.

A coherent source attenuated to mean photon number ``mu`` per pulse is
Poissonian; loss (absorption efficiency, avalanche trigger probability) acts
as independent per-photon thinning, so the detected number stays Poissonian
with mean ``mu * eta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, lgamma, log

from scipy.special import gammainc

from . import samplers
from .streams import RandomStream


@dataclass(frozen=True)
class PhotonFlux:
    """Mean photons per pulse (dimensionless, >= 0)."""

    mu: float

    def __post_init__(self):
        if not self.mu >= 0.0:
            raise ValueError(f"mean photon number must be >= 0, got {self.mu}")

    def __float__(self) -> float:
        return float(self.mu)


@dataclass(frozen=True)
class EfficiencyChain:
    """External quantum efficiency and per-photocarrier avalanche probability."""

    qe: float
    p_eta: float

    def __post_init__(self):
        if not 0.0 <= self.qe <= 1.0:
            raise ValueError(f"qe must be in [0, 1], got {self.qe}")
        if not 0.0 <= self.p_eta <= 1.0:
            raise ValueError(f"p_eta must be in [0, 1], got {self.p_eta}")

    def eta(self) -> float:
        """Overall single-photon detection efficiency qe * p_eta."""
        return self.qe * self.p_eta


def _mu_value(mu) -> float:
    value = float(mu)
    if not value >= 0.0:
        raise ValueError(f"mean photon number must be >= 0, got {value}")
    return value


def poisson_pmf(n: int, mu) -> float:
    """P(N = n) for N ~ Poisson(mu), evaluated in log space.

    Stable for large ``n`` and ``mu``; exact at the boundary cases
    (``mu == 0`` gives a point mass at zero).
    """
    if n != int(n) or n < 0:
        raise ValueError(f"photon number must be a nonnegative integer, got {n}")
    n = int(n)
    m = _mu_value(mu)
    if m == 0.0:
        return 1.0 if n == 0 else 0.0
    return exp(-m + n * log(m) - lgamma(n + 1.0))


def poisson_tail(n: int, mu) -> float:
    """P(N >= n) for N ~ Poisson(mu), via the regularized incomplete gamma."""
    if n != int(n) or n < 0:
        raise ValueError(f"photon number must be a nonnegative integer, got {n}")
    n = int(n)
    m = _mu_value(mu)
    if n == 0:
        return 1.0
    return float(gammainc(n, m))


def detected_flux(mu, chain: EfficiencyChain) -> PhotonFlux:
    """Mean detected photons per pulse: Poisson thinning scales the mean."""
    return PhotonFlux(_mu_value(mu) * chain.eta())


def sample_photon_number(mu, stream: RandomStream) -> int:
    """One Poisson draw of the per-pulse photon number."""
    return samplers.poisson(_mu_value(mu), stream)


def thin(n: int, p: float, stream: RandomStream) -> int:
    """Binomial thinning: keep each of ``n`` photons with probability ``p``."""
    return samplers.binomial(n, p, stream)
