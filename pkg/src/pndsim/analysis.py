"""Pulse-height statistics: mixture fitting and photon-number discrimination.

The amplitude histogram of a gated-APD run is a sum of Gaussian peaks, one
per detected photon number N (the 0 peak is electronic noise).  Fitting the
mixture, checking the peak weights against Poisson statistics, placing
discrimination thresholds at the crossings of uniformly weighted peaks and
integrating the tail overlaps gives the per-number error probabilities.
Counting estimators for efficiency, dark and afterpulse probabilities live
here as well.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, least_squares, minimize_scalar
from scipy.signal import find_peaks
from scipy.special import ndtr

from .photonstat import PhotonFlux, poisson_pmf, poisson_tail

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class RankDeficiencyWarning(UserWarning):
    """Requested peaks that the data cannot constrain (vanishing weight)."""


class ThresholdError(RuntimeError):
    """No density crossing between adjacent peaks (pathological overlap)."""


@dataclass(frozen=True)
class Peak:
    """One photon-number peak of the amplitude mixture."""

    n: int
    mean_mv: float
    sigma_mv: float
    weight: float

    def excess_noise(self) -> float:
        """<V^2>/<V>^2 of this Gaussian peak: 1 + (sigma/mean)^2."""
        if self.mean_mv == 0.0:
            raise ValueError("excess noise undefined for a zero-mean peak")
        return 1.0 + (self.sigma_mv / self.mean_mv) ** 2


@dataclass(frozen=True)
class MixtureModel:
    """Fitted amplitude mixture: peaks indexed by photon number 0..n_max."""

    peaks: tuple[Peak, ...]
    n_max: int
    width_mode: str = "constrained"
    converged: bool = True
    residual_rms: float = 0.0

    def __post_init__(self):
        if len(self.peaks) != self.n_max + 1:
            raise ValueError("need exactly one peak per photon number 0..n_max")

    def validate(self) -> None:
        """Raise if the model violates the mixture invariants."""
        w = self.weights
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
            raise ValueError("weights must be nonnegative and sum to 1")
        m = self.means
        if np.any(np.diff(m) <= 0):
            raise ValueError("peak means must be strictly increasing in n")
        s = self.sigmas
        if np.any(s <= 0):
            raise ValueError("peak widths must be positive")
        if self.width_mode == "constrained":
            expect = s[1] * np.sqrt(np.arange(1, self.n_max + 1))
            if not np.allclose(s[1:], expect, rtol=1e-9):
                raise ValueError("constrained mode requires sigma_N = sigma_1 * sqrt(N)")

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.peaks])

    @property
    def means(self) -> np.ndarray:
        return np.array([p.mean_mv for p in self.peaks])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([p.sigma_mv for p in self.peaks])

    def pdf(self, x) -> np.ndarray:
        """Mixture density at amplitude(s) x."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for p in self.peaks:
            z = (x - p.mean_mv) / p.sigma_mv
            out += p.weight / (p.sigma_mv * _SQRT_2PI) * np.exp(-0.5 * z * z)
        return out


@dataclass(frozen=True)
class DiscriminationResult:
    """Thresholds between adjacent number states and per-state errors."""

    thresholds_mv: tuple[float, ...]
    errors: tuple[float, ...]
    open_top: bool = True


@dataclass(frozen=True)
class CountingSummary:
    """Efficiency/dark/afterpulse estimates from a counting run."""

    p_click_illuminated: float
    p_click_dark: float
    p_afterpulse: float
    eta_est: float
    mu_in: float
    p_afterpulse_raw: float = 0.0
    afterpulse_se: float = 0.0
    degenerate: bool = False


# -- mixture fitting ---------------------------------------------------------

def _initial_guess(centers, density, total, n_max):
    """Heuristic peak grid from the smoothed histogram."""
    width = centers[1] - centers[0]
    smooth = np.convolve(density, np.ones(5) / 5.0, mode="same")
    idx, _ = find_peaks(smooth, prominence=smooth.max() * 0.005)
    positions = centers[idx]
    if len(positions) >= 2:
        spacing = float(np.median(np.diff(positions)))
    elif len(positions) == 1 and positions[0] > 4 * width:
        spacing = float(positions[0])
    else:
        spacing = float((centers[-1] - centers[0]) / (n_max + 1))
    m0 = float(positions[0]) if len(positions) and abs(positions[0]) < spacing / 2 else 0.0
    means = m0 + spacing * np.arange(n_max + 1, dtype=float)
    weights = np.empty(n_max + 1)
    for n, m in enumerate(means):
        sel = np.abs(centers - m) < spacing / 2
        weights[n] = density[sel].sum() * width if sel.any() else 0.0
    weights = np.maximum(weights, 1e-4)
    weights /= weights.sum()
    return means, spacing / 4.0, weights


def fit_mixture(hist, n_max: int, mode: str = "constrained", init=None,
                max_nfev: int = 400) -> MixtureModel:
    """Weighted least-squares Gaussian-mixture fit to an amplitude histogram.

    Parameters
    ----------
    hist : AmplitudeHistogram
        Histogram with at least 10^4 total counts.
    n_max : int
        Highest photon-number peak to fit (peaks 0..n_max).
    mode : str
        "constrained": sigma_N = sigma_1 * sqrt(N) for N >= 1 with sigma_0
        free (default); "free": every width independent.
    init : dict, optional
        Overrides for the starting point: keys ``means`` (array of length
        n_max + 1), ``sigma0``, ``sigma1``, ``weights``.

    The fit minimizes the bin-probability residuals weighted by
    1/sqrt(max(count, 1)), an approximate Poisson weighting.  Peaks whose
    fitted weight is vanishingly small trigger a RankDeficiencyWarning; a fit
    that exhausts its iteration budget is returned with ``converged=False``.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if mode not in ("constrained", "free"):
        raise ValueError(f"unknown width mode {mode!r}")
    counts = np.asarray(hist.counts, dtype=float)
    edges = np.asarray(hist.bin_edges, dtype=float)
    total = float(hist.total)
    if total < 1e4:
        raise ValueError(f"histogram too sparse for a mixture fit ({int(total)} counts)")
    width = float(edges[1] - edges[0])
    centers = 0.5 * (edges[:-1] + edges[1:])
    density = counts / (total * width)
    sigma_bins = np.sqrt(np.maximum(counts, 1.0)) / (total * width)

    means0, sigma10, weights0 = _initial_guess(centers, density, total, n_max)
    sigma00 = sigma10 * 0.75
    if init:
        if "means" in init:
            means0 = np.asarray(init["means"], dtype=float)
        if "sigma1" in init:
            sigma10 = float(init["sigma1"])
        if "sigma0" in init:
            sigma00 = float(init["sigma0"])
        if "weights" in init:
            weights0 = np.asarray(init["weights"], dtype=float)

    k = n_max + 1
    ns = np.arange(k, dtype=float)

    def unpack(theta):
        if mode == "constrained":
            sigma0, sigma1 = theta[0], theta[1]
            sigmas = np.concatenate(([sigma0], sigma1 * np.sqrt(ns[1:])))
            means = theta[2:2 + k]
            amps = theta[2 + k:]
        else:
            sigmas = theta[:k]
            means = theta[k:2 * k]
            amps = theta[2 * k:]
        return sigmas, means, amps

    def residuals(theta):
        sigmas, means, amps = unpack(theta)
        z = (centers[:, None] - means[None, :]) / sigmas[None, :]
        model = (amps[None, :] / (sigmas[None, :] * _SQRT_2PI)
                 * np.exp(-0.5 * z * z)).sum(axis=1)
        return (model - density) / sigma_bins

    lo_edge, hi_edge = float(edges[0]), float(edges[-1])
    span = hi_edge - lo_edge
    if mode == "constrained":
        theta0 = np.concatenate(([sigma00, sigma10], means0, weights0))
        lower = np.concatenate(([width / 4, width / 4],
                                np.full(k, lo_edge - span), np.zeros(k)))
        upper = np.concatenate(([span, span],
                                np.full(k, hi_edge + span), np.full(k, 2.0)))
    else:
        sig0 = np.full(k, sigma10)
        sig0[0] = sigma00
        theta0 = np.concatenate((sig0, means0, weights0))
        lower = np.concatenate((np.full(k, width / 4),
                                np.full(k, lo_edge - span), np.zeros(k)))
        upper = np.concatenate((np.full(k, span),
                                np.full(k, hi_edge + span), np.full(k, 2.0)))
    theta0 = np.clip(theta0, lower, upper)

    result = least_squares(residuals, theta0, bounds=(lower, upper),
                           method="trf", max_nfev=max_nfev)
    sigmas, means, amps = unpack(result.x)
    converged = result.status > 0
    if np.any(np.diff(means) <= 0):
        converged = False

    wsum = amps.sum()
    weights = amps / wsum if wsum > 0 else np.full(k, 1.0 / k)
    peaks = tuple(Peak(n=int(n), mean_mv=float(means[n]), sigma_mv=float(sigmas[n]),
                       weight=float(weights[n])) for n in range(k))
    model = MixtureModel(peaks=peaks, n_max=n_max, width_mode=mode,
                         converged=converged,
                         residual_rms=float(np.sqrt(np.mean(result.fun ** 2))))
    faint = [p.n for p in peaks if p.weight < 1e-3]
    if faint:
        warnings.warn(
            f"peaks {faint} carry vanishing weight; n_max={n_max} likely "
            "exceeds the visible peaks (rank-deficient fit)",
            RankDeficiencyWarning, stacklevel=2)
    if converged:
        model.validate()
    return model


def poisson_consistency(model: MixtureModel) -> tuple[PhotonFlux, float]:
    """Detected flux that best matches the fitted peak weights.

    Minimizes the squared deviation between the weights and Poisson
    probabilities, with the top weight compared against the Poisson tail
    mass >= n_max.  Returns (mu_det, residual).
    """
    w = model.weights
    n_max = model.n_max

    def objective(mu):
        r = 0.0
        for n in range(n_max):
            r += (w[n] - poisson_pmf(n, mu)) ** 2
        r += (w[n_max] - poisson_tail(n_max, mu)) ** 2
        return r

    mu0 = float(np.dot(np.arange(n_max + 1), w))
    hi = max(4.0 * mu0 + 1.0, 2.0 * n_max)
    res = minimize_scalar(objective, bounds=(1e-12, hi), method="bounded",
                          options={"xatol": 1e-10})
    return PhotonFlux(float(res.x)), float(res.fun)


# -- discrimination ----------------------------------------------------------

def _crossing(p1: Peak, p2: Peak) -> float:
    """Amplitude where the two unit-weight Gaussian densities cross."""

    def logdiff(t):
        z1 = (t - p1.mean_mv) / p1.sigma_mv
        z2 = (t - p2.mean_mv) / p2.sigma_mv
        return (-0.5 * z1 * z1 - math.log(p1.sigma_mv)) - \
               (-0.5 * z2 * z2 - math.log(p2.sigma_mv))

    a, b = p1.mean_mv, p2.mean_mv
    fa, fb = logdiff(a), logdiff(b)
    if not (fa > 0 > fb):
        raise ThresholdError(
            f"no density crossing between peaks {p1.n} and {p2.n} "
            f"(overlap too pathological)")
    return float(brentq(logdiff, a, b, xtol=1e-7))


def place_thresholds(model: MixtureModel) -> np.ndarray:
    """Discrimination levels at the crossings of adjacent peaks.

    The peaks are weighted uniformly (fitted weights are discarded), so the
    thresholds reflect a uniform photon-number distribution.  The log-density
    difference is strictly decreasing between the two means, hence exactly
    one crossing lies in the interval; it is bracketed and refined to well
    below 1e-4 mV.
    """
    if model.n_max < 1:
        raise ValueError("need at least two peaks to place thresholds")
    failures = []
    out = []
    for p1, p2 in zip(model.peaks, model.peaks[1:]):
        try:
            out.append(_crossing(p1, p2))
        except ThresholdError as exc:
            failures.append(str(exc))
    if failures:
        raise ThresholdError("; ".join(failures))
    return np.asarray(out)


def discrimination_errors(model: MixtureModel, thresholds=None,
                          n_states: int | None = None,
                          open_top: bool = True) -> DiscriminationResult:
    """Per-state misassignment probabilities under the threshold scheme.

    State N owns the bin (t(N-1,N), t(N,N+1)]; epsilon_N is the unit-mass
    Gaussian-N probability outside its own bin, computed from complementary
    tail integrals.  With ``open_top`` (default) the highest state's bin is
    open-ended, matching the N = 0 / 1 / >=2 task; the closed variant bounds
    it by the next crossing, which must then exist in ``thresholds``.
    """
    if thresholds is None:
        thresholds = place_thresholds(model)
    thresholds = np.asarray(thresholds, dtype=float)
    if n_states is None:
        n_states = len(thresholds) + 1 if open_top else len(thresholds)
    need = n_states - 1 if open_top else n_states
    if len(thresholds) < need:
        raise ValueError(f"need {need} thresholds for {n_states} states, "
                         f"got {len(thresholds)}")
    errors = []
    for n in range(n_states):
        peak = model.peaks[n]
        below = 0.0
        if n >= 1:
            below = float(ndtr((thresholds[n - 1] - peak.mean_mv) / peak.sigma_mv))
        above = 0.0
        if n < n_states - 1 or not open_top:
            above = float(ndtr(-(thresholds[n] - peak.mean_mv) / peak.sigma_mv))
        errors.append(below + above)
    used = thresholds[:need]
    return DiscriminationResult(thresholds_mv=tuple(float(t) for t in used),
                                errors=tuple(errors), open_top=open_top)


def excess_noise(amplitudes) -> float:
    """<V^2>/<V>^2 of an amplitude sample (or of a fitted Peak)."""
    if isinstance(amplitudes, Peak):
        return amplitudes.excess_noise()
    v = np.asarray(amplitudes, dtype=float)
    if v.size == 0:
        raise ValueError("empty amplitude sample")
    mean = v.mean()
    if mean == 0.0:
        raise ValueError("excess noise undefined for a zero-mean sample")
    return float(np.mean(v * v) / (mean * mean))


# -- counting estimators -----------------------------------------------------

def counting_summary(main, companion, mu_in: float) -> CountingSummary:
    """Efficiency, dark and afterpulse estimates from click counts.

    ``main`` is the counting summary of the illuminated run, ``companion``
    of a zero-flux run of the same detector (it pins the dark click
    probability).  The efficiency inverts the Poisson click probability
    1 - exp(-eta mu) with dark correction; the afterpulse probability is the
    dark-corrected excess click probability of the unilluminated gates,
    normalized per detected avalanche in the illuminated gates.
    """
    if companion.n_gates <= 0:
        raise ValueError("companion run must contain gates")
    p_dark = companion.clicks_total / companion.n_gates

    degenerate = False
    p_ill = 0.0
    if main.n_illuminated > 0:
        p_ill = main.clicks_illuminated / main.n_illuminated
    else:
        degenerate = True

    raw_ap = 0.0
    ap_se = 0.0
    if main.clicks_illuminated > 0 and main.n_unilluminated > 0:
        excess = main.clicks_unilluminated - p_dark * main.n_unilluminated
        raw_ap = excess / main.clicks_illuminated
        var = (main.clicks_unilluminated
               + (main.n_unilluminated / companion.n_gates) ** 2 * companion.clicks_total)
        ap_se = math.sqrt(var) / main.clicks_illuminated
    else:
        degenerate = True

    eta = 0.0
    if mu_in > 0 and p_ill > p_dark and p_ill < 1.0:
        eta = -math.log((1.0 - p_ill) / (1.0 - p_dark)) / mu_in
    else:
        degenerate = True

    return CountingSummary(
        p_click_illuminated=p_ill,
        p_click_dark=p_dark,
        p_afterpulse=min(max(raw_ap, 0.0), 1.0),
        eta_est=eta,
        mu_in=mu_in,
        p_afterpulse_raw=raw_ap,
        afterpulse_se=ap_se,
        degenerate=degenerate,
    )


def estimate_efficiency(clicks, illuminated, mu_in: float, *,
                        companion_clicks: int, companion_gates: int) -> CountingSummary:
    """Counting estimates from per-gate click and illumination flags."""
    clicks = np.asarray(clicks, dtype=bool)
    illuminated = np.asarray(illuminated, dtype=bool)
    if clicks.shape != illuminated.shape:
        raise ValueError("clicks and illuminated flags must align")

    n_ill = int(illuminated.sum())
    main = _Counts(
        n_gates=clicks.size,
        n_illuminated=n_ill,
        clicks_illuminated=int((clicks & illuminated).sum()),
        clicks_unilluminated=int((clicks & ~illuminated).sum()),
        n_unilluminated=clicks.size - n_ill,
        clicks_total=int(clicks.sum()),
    )
    comp = _Counts(n_gates=int(companion_gates), n_illuminated=0,
                   clicks_illuminated=0, clicks_unilluminated=int(companion_clicks),
                   n_unilluminated=int(companion_gates),
                   clicks_total=int(companion_clicks))
    return counting_summary(main, comp, mu_in)


@dataclass(frozen=True)
class _Counts:
    n_gates: int
    n_illuminated: int
    clicks_illuminated: int
    clicks_unilluminated: int
    n_unilluminated: int
    clicks_total: int
