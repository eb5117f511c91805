"""Scalar inversion samplers on a :class:`~pndsim.streams.RandomStream`.

These are the reference definitions of every random draw the gate simulation
makes.  The compiled kernel re-implements them in C with the identical
arithmetic (same operation order, same libm calls, no FMA contraction), so
both kernels consume the same uniforms and produce bit-identical gate
sequences.  Draw-consumption rules:

* ``poisson``  consumes one uniform iff ``mu > 0``;
* ``binomial`` consumes one uniform iff ``n > 0`` and ``0 < p < 1``;
* ``positive_normal`` consumes two uniforms per Box-Muller attempt and
  resamples until the variate is strictly positive.

Inversion by sequential search is exact and fast for the mean-photon-number
regime this package targets (mu well below ~30); the walk is capped to stay
finite for adversarial uniforms.
"""

from __future__ import annotations

from math import cos, exp, log1p, pi, pow, sqrt

from .streams import RandomStream

_TWO_PI = 2.0 * pi
_WALK_CAP = 4096


def poisson(mu: float, stream: RandomStream) -> int:
    """Poisson variate by CDF inversion (sequential search)."""
    if mu < 0.0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    if mu == 0.0:
        return 0
    u = stream.next_uniform()
    pmf = exp(-mu)
    cdf = pmf
    k = 0
    while u > cdf and k < _WALK_CAP:
        k += 1
        pmf = pmf * (mu / k)
        cdf = cdf + pmf
    return k


def binomial(n: int, p: float, stream: RandomStream) -> int:
    """Binomial(n, p) variate by CDF inversion (sequential search)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if n == 0 or p == 0.0:
        return 0
    if p == 1.0:
        return n
    u = stream.next_uniform()
    nd = float(n)
    odds = p / (1.0 - p)
    pmf = pow(1.0 - p, nd)
    cdf = pmf
    k = 0.0
    while u > cdf and k < nd:
        pmf = pmf * (((nd - k) / (k + 1.0)) * odds)
        k = k + 1.0
        cdf = cdf + pmf
    return int(k)


def positive_normal(mean: float, sigma: float, stream: RandomStream) -> float:
    """Normal(mean, sigma) truncated to (0, inf) by resampling.

    With ``sigma == 0`` the mean is returned directly and no uniforms are
    consumed (``mean`` must then be positive).
    """
    if sigma == 0.0:
        return mean
    while True:
        u1 = stream.next_uniform()
        u2 = stream.next_uniform()
        r = sqrt(-2.0 * log1p(-u1))
        amp = mean + sigma * (r * cos(_TWO_PI * u2))
        if amp > 0.0:
            return amp
