"""Gate-by-gate Monte Carlo of the fast-gated avalanche photodiode.

Each 1 GHz gate can host an avalanche seeded by detected photons, a dark
carrier, or carriers re-emitted from traps filled by earlier avalanches
(afterpulsing).  Avalanche amplitude is linear in the number of initiating
carriers with Gaussian multiplication noise scaling as sqrt(k); an optional
per-k mean table reproduces measured peak positions when they deviate from
strict linearity.

Trap occupancy makes a run a Markov chain over gates, so a single run is
sequential; independent runs (other seeds, other bias points) are free to
execute concurrently.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import kernel, samplers, streams
from .photonstat import EfficiencyChain
from .streams import RandomStream

_MEAN_TABLE_CAP = 64


class ConfigError(ValueError):
    """Invalid detector or run configuration; carries the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(name, f"must be in [0, 1], got {value}")


@dataclass(frozen=True)
class DetectorConfig:
    """Physical and electrical parameters of the simulated gated APD."""

    gate_frequency_hz: float = 1.0e9
    v_dc: float = 50.0
    v_ac: float = 10.0
    v_breakdown: float = 41.7
    qe: float = 0.81
    p_eta: float = 0.911
    gain_mv: float = 22.4
    sigma_avalanche_mv: float = 4.5
    sigma_electronic_mv: float = 1.5
    dark_prob: float = 1.1e-6
    trap_fill: float = 0.0
    trap_release_prob: float = 0.02
    illumination_divisor: int = 64
    avalanche_duration_ps: float = 250.0
    feedthrough_mv: float = 150.0
    peak_means_mv: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.gate_frequency_hz <= 0:
            raise ConfigError("gate_frequency_hz", "must be positive")
        for name in ("qe", "p_eta", "dark_prob", "trap_release_prob"):
            _check_prob(name, getattr(self, name))
        if self.gain_mv <= 0:
            raise ConfigError("gain_mv", "must be positive")
        if self.sigma_avalanche_mv < 0:
            raise ConfigError("sigma_avalanche_mv", "must be >= 0")
        if self.sigma_electronic_mv < 0:
            raise ConfigError("sigma_electronic_mv", "must be >= 0")
        if self.trap_fill < 0:
            raise ConfigError("trap_fill", "must be >= 0")
        if self.illumination_divisor < 1 or int(self.illumination_divisor) != self.illumination_divisor:
            raise ConfigError("illumination_divisor", "must be an integer >= 1")
        if not 0 < self.avalanche_duration_ps < self.gate_period_ps:
            raise ConfigError(
                "avalanche_duration_ps",
                f"must lie in (0, gate period = {self.gate_period_ps:g} ps)")
        if self.peak_means_mv is not None:
            means = tuple(float(m) for m in self.peak_means_mv)
            if len(means) == 0 or means[0] <= 0 or any(
                    b <= a for a, b in zip(means, means[1:])):
                raise ConfigError("peak_means_mv", "must be positive and strictly increasing")
            object.__setattr__(self, "peak_means_mv", means)

    @property
    def gate_period_ps(self) -> float:
        return 1.0e12 / self.gate_frequency_hz

    @property
    def eta(self) -> float:
        return self.qe * self.p_eta

    def chain(self) -> EfficiencyChain:
        return EfficiencyChain(qe=self.qe, p_eta=self.p_eta)

    def mean_table(self, cap: int = _MEAN_TABLE_CAP) -> np.ndarray:
        """Per-carrier-count amplitude means, index k = 0..cap.

        Linear ``k * gain_mv`` by default; a configured ``peak_means_mv``
        table overrides the low-k entries and is continued linearly with the
        last measured peak spacing.
        """
        table = np.arange(cap + 1, dtype=np.float64) * self.gain_mv
        if self.peak_means_mv is not None:
            given = np.asarray(self.peak_means_mv, dtype=np.float64)
            kmax = min(given.size, cap)
            table[1:kmax + 1] = given[:kmax]
            if kmax < cap:
                gap = given[kmax - 1] - given[kmax - 2] if kmax >= 2 else given[0]
                table[kmax + 1:] = given[kmax - 1] + gap * np.arange(1, cap - kmax + 1)
        return table


@dataclass(frozen=True)
class TrapState:
    """Occupied carrier traps; grows after avalanches, shrinks by release."""

    occupied: int = 0

    def __post_init__(self):
        if self.occupied < 0:
            raise ValueError("trap occupancy must be >= 0")


@dataclass(frozen=True)
class GateRecord:
    """Outcome of one gate."""

    gate_index: int
    illuminated: bool
    n_incident: int
    n_detected: int
    n_dark: int
    n_afterpulse: int
    amplitude_mv: float


@dataclass(frozen=True)
class RunCounts:
    """Counting summary of a run (no per-gate storage)."""

    n_gates: int
    n_illuminated: int
    clicks_illuminated: int
    clicks_unilluminated: int
    detected_total: int
    dark_total: int
    afterpulse_total: int
    final_traps: int

    @property
    def n_unilluminated(self) -> int:
        return self.n_gates - self.n_illuminated

    @property
    def clicks_total(self) -> int:
        return self.clicks_illuminated + self.clicks_unilluminated


@dataclass
class RunRecords(Sequence):
    """Columnar per-gate records of a run; behaves as a sequence of GateRecord."""

    flux: float
    illumination_divisor: int
    n_incident: np.ndarray
    n_detected: np.ndarray
    n_dark: np.ndarray
    n_afterpulse: np.ndarray
    amplitude_mv: np.ndarray
    counts: RunCounts

    def __len__(self) -> int:
        return self.amplitude_mv.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            raise TypeError("slicing run records is not supported; use the column arrays")
        i = int(i)
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return GateRecord(
            gate_index=i,
            illuminated=bool(self.illuminated[i]),
            n_incident=int(self.n_incident[i]),
            n_detected=int(self.n_detected[i]),
            n_dark=int(self.n_dark[i]),
            n_afterpulse=int(self.n_afterpulse[i]),
            amplitude_mv=float(self.amplitude_mv[i]),
        )

    @property
    def illuminated(self) -> np.ndarray:
        if self.flux <= 0:
            return np.zeros(len(self), dtype=bool)
        return np.arange(len(self)) % self.illumination_divisor == 0

    @property
    def clicks(self) -> np.ndarray:
        return self.amplitude_mv > 0.0


def simulate_gate(cfg: DetectorConfig, traps: TrapState, n_incident: int,
                  stream: RandomStream, *, gate_index: int = 0,
                  illuminated: bool | None = None) -> tuple[GateRecord, TrapState]:
    """Simulate one gate given its incident photon number.

    Consumes the stream exactly like the batch kernels (minus the incident
    Poisson draw, which the caller owns here), so folding this function over
    a gate sequence reproduces :func:`simulate_run` bit for bit.
    """
    if n_incident < 0:
        raise ValueError("n_incident must be >= 0")
    n_abs = samplers.binomial(n_incident, cfg.qe, stream)
    n_det = samplers.binomial(n_abs, cfg.p_eta, stream)
    n_dark = 0
    if cfg.dark_prob > 0.0:
        n_dark = 1 if stream.next_uniform() < cfg.dark_prob else 0
    n_ap = samplers.binomial(traps.occupied, cfg.trap_release_prob, stream)
    occupied = traps.occupied - n_ap

    k = n_det + n_dark + n_ap
    amplitude = 0.0
    if k > 0:
        table = cfg.mean_table()
        tlast = table.shape[0] - 1
        if k <= tlast:
            mean = float(table[k])
        else:
            mean = float(table[tlast]) + (k - tlast) * float(table[tlast] - table[tlast - 1])
        amplitude = samplers.positive_normal(mean, cfg.sigma_avalanche_mv * math.sqrt(k), stream)
        if cfg.trap_fill > 0.0:
            occupied += samplers.poisson(cfg.trap_fill, stream)

    record = GateRecord(
        gate_index=gate_index,
        illuminated=n_incident > 0 if illuminated is None else illuminated,
        n_incident=n_incident,
        n_detected=n_det,
        n_dark=n_dark,
        n_afterpulse=n_ap,
        amplitude_mv=amplitude,
    )
    return record, TrapState(occupied)


def _run(cfg: DetectorConfig, flux, n_gates: int, stream: RandomStream,
         initial_traps: int, outs, run_gates) -> tuple:
    mu = float(flux)
    if mu < 0:
        raise ConfigError("flux", "must be >= 0")
    if n_gates < 1:
        raise ConfigError("n_gates", "must be >= 1")
    table = cfg.mean_table()
    slope = float(table[-1] - table[-2])
    return run_gates(
        int(n_gates), int(cfg.illumination_divisor), mu, cfg.qe, cfg.p_eta,
        cfg.dark_prob, cfg.trap_release_prob, cfg.trap_fill,
        cfg.sigma_avalanche_mv, table, slope, int(initial_traps), stream,
        *outs)


def simulate_counts(cfg: DetectorConfig, flux, n_gates: int, seed: int | None = None,
                    *, stream: RandomStream | None = None, initial_traps: int = 0,
                    use_python_kernel: bool = False) -> RunCounts:
    """Run the gate chain keeping only counting totals (memory-flat)."""
    if stream is None:
        stream = RandomStream.from_seed(seed, streams.GATES)
    fn = kernel.run_gates_python if use_python_kernel else kernel.run_gates
    summary = _run(cfg, flux, n_gates, stream, initial_traps, (), fn)
    return RunCounts(int(n_gates), *summary)


def simulate_run(cfg: DetectorConfig, flux, n_gates: int, seed: int | None = None,
                 *, stream: RandomStream | None = None, initial_traps: int = 0,
                 use_python_kernel: bool = False) -> RunRecords:
    """Run the gate chain keeping per-gate records.

    Deterministic: identical (cfg, flux, n_gates, seed) give bit-identical
    records.  Gates at multiples of the illumination divisor receive
    Poisson(flux) incident photons; all others receive none.
    """
    if stream is None:
        stream = RandomStream.from_seed(seed, streams.GATES)
    n = int(n_gates)
    outs = (
        np.zeros(n, dtype=np.int32),
        np.zeros(n, dtype=np.int32),
        np.zeros(n, dtype=np.int8),
        np.zeros(n, dtype=np.int32),
        np.zeros(n, dtype=np.float64),
    )
    fn = kernel.run_gates_python if use_python_kernel else kernel.run_gates
    summary = _run(cfg, flux, n_gates, stream, initial_traps, outs, fn)
    return RunRecords(
        flux=float(flux),
        illumination_divisor=int(cfg.illumination_divisor),
        n_incident=outs[0], n_detected=outs[1], n_dark=outs[2],
        n_afterpulse=outs[3], amplitude_mv=outs[4],
        counts=RunCounts(n, *summary),
    )


# -- bias response ----------------------------------------------------------

@dataclass(frozen=True)
class BiasResponse:
    """Monotone maps from the applied dc bias to the gate-level parameters.

    Only a few anchor values of the real device's bias curves are known, so
    the functional forms are configuration: avalanche probability saturates
    exponentially above breakdown, dark counts grow exponentially, and trap
    filling turns on above an onset voltage with a power law.
    """

    v_min: float
    v_max: float
    p_eta_of_vdc: Callable[[float], float]
    dark_of_vdc: Callable[[float], float]
    trapfill_of_vdc: Callable[[float], float]

    @classmethod
    def from_anchors(cls, *, v_breakdown: float = 41.7, v_min: float = 42.0,
                     v_max: float = 50.0, p_eta_at_max: float = 0.911,
                     dark_at_max: float = 1.1e-6, dark_slope_per_volt: float = 0.5,
                     trap_onset_v: float = 47.6, trap_fill_at_max: float = 0.0,
                     trap_power: float = 2.0) -> "BiasResponse":
        if not v_breakdown < v_min < v_max:
            raise ConfigError("bias_response", "need v_breakdown < v_min < v_max")
        if not 0.0 < p_eta_at_max <= 1.0:
            raise ConfigError("p_eta_at_max", "must be in (0, 1]")
        rate = -math.log(1.0 - p_eta_at_max) / (v_max - v_breakdown) \
            if p_eta_at_max < 1.0 else math.inf

        def p_eta(v: float) -> float:
            if math.isinf(rate):
                return 1.0
            return 1.0 - math.exp(-rate * (v - v_breakdown))

        def dark(v: float) -> float:
            return min(1.0, dark_at_max * math.exp(dark_slope_per_volt * (v - v_max)))

        def trapfill(v: float) -> float:
            if v <= trap_onset_v or trap_fill_at_max <= 0.0:
                return 0.0
            return trap_fill_at_max * ((v - trap_onset_v) / (v_max - trap_onset_v)) ** trap_power

        return cls(v_min=v_min, v_max=v_max, p_eta_of_vdc=p_eta,
                   dark_of_vdc=dark, trapfill_of_vdc=trapfill)

    def config_at(self, cfg: DetectorConfig, v_dc: float) -> DetectorConfig:
        if not self.v_min <= v_dc <= self.v_max:
            raise ConfigError("v_dc", f"{v_dc} outside modeled range "
                              f"[{self.v_min}, {self.v_max}]")
        return replace(cfg, v_dc=v_dc, p_eta=self.p_eta_of_vdc(v_dc),
                       dark_prob=self.dark_of_vdc(v_dc),
                       trap_fill=self.trapfill_of_vdc(v_dc))


@dataclass(frozen=True)
class BiasPoint:
    v_dc: float
    eta_est: float
    dark_est: float
    afterpulse_est: float


def bias_sweep(resp: BiasResponse, cfg: DetectorConfig, v_dc_list, flux,
               n_gates: int, seed: int) -> list[BiasPoint]:
    """Counting run + zero-flux companion at each bias point.

    Each point uses independent substreams of ``seed`` so results do not
    depend on evaluation order.
    """
    from .analysis import counting_summary  # local import avoids a cycle

    points = list(v_dc_list)
    if not points:
        raise ConfigError("v_dc_list", "must not be empty")
    out = []
    for j, v in enumerate(points):
        cfg_v = resp.config_at(cfg, float(v))
        main = simulate_counts(
            cfg_v, flux, n_gates,
            stream=RandomStream.from_seed(seed, streams.GATES, j))
        companion = simulate_counts(
            cfg_v, 0.0, n_gates,
            stream=RandomStream.from_seed(seed, streams.COMPANION_GATES, j))
        summary = counting_summary(main, companion, float(flux))
        out.append(BiasPoint(v_dc=float(v), eta_est=summary.eta_est,
                             dark_est=summary.p_click_dark,
                             afterpulse_est=summary.p_afterpulse))
    return out
