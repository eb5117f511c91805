"""Sampled detector output: synthesis, self-differencing and amplitude extraction.

The raw gated-APD output is dominated by the capacitive feedthrough of the
gating square wave; avalanche pulses ride on top of it.  Subtracting the
output one gate period earlier (self-differencing) cancels the periodic
background exactly and leaves each avalanche as a positive pulse plus an
inverted echo one period later.  Amplitudes are recovered per gate by
matched-filtering with the pulse template and taking the signed maximum in a
central measurement window; the filter is what keeps noise-only gates within
the electronic-noise level (a raw-sample maximum over the window would ride
up on the noise order statistics), while the window keeps the negative echo
from registering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import DetectorConfig, RunRecords
from .streams import RandomStream

HIST_BIN_WIDTH_MV = 0.5
HIST_LO_MV = -5.0
HIST_HI_MV = 110.0


@dataclass(frozen=True)
class WaveformTrace:
    """Uniformly sampled voltage record (mV)."""

    sample_rate: float
    samples: np.ndarray
    start_time: float = 0.0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class AmplitudeHistogram:
    """Binned amplitude counts; bin_edges has one more entry than counts."""

    bin_edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if len(self.bin_edges) != len(self.counts) + 1:
            raise ValueError("need len(edges) == len(counts) + 1")
        if int(np.sum(self.counts)) != self.total:
            raise ValueError("total must equal the sum of counts")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def probabilities(self) -> np.ndarray:
        """Per-bin probability view (counts / total)."""
        if self.total == 0:
            return np.zeros_like(self.counts, dtype=float)
        return self.counts / self.total


@dataclass(frozen=True)
class GateAmplitudes:
    """Per-gate amplitudes: parallel gate_index / amplitude_mv arrays."""

    gate_index: np.ndarray
    amplitude_mv: np.ndarray

    def __len__(self) -> int:
        return self.amplitude_mv.shape[0]

    def __iter__(self):
        return zip(self.gate_index.tolist(), self.amplitude_mv.tolist())


def samples_per_gate(cfg: DetectorConfig, sample_rate: float) -> int:
    ratio = sample_rate / cfg.gate_frequency_hz
    period = int(round(ratio))
    if abs(ratio - period) > 1e-9 or period < 16:
        raise ValueError("sample_rate must be an integer multiple (>= 16) "
                         "of the gate frequency")
    return period


def pulse_template(cfg: DetectorConfig, sample_rate: float) -> np.ndarray:
    """Unit-peak raised-cosine avalanche pulse (odd length, exact peak 1)."""
    n = int(round(cfg.avalanche_duration_ps * 1e-12 * sample_rate))
    n = max(3, n)
    if n % 2 == 0:
        n += 1
    return np.hanning(n)


def _feedthrough_period(cfg: DetectorConfig, period: int) -> np.ndarray:
    """One period of the band-limited differentiated gating square wave."""
    x = np.arange(period, dtype=float)
    width = period / 16.0

    def bump(center):
        d = (x - center + period / 2.0) % period - period / 2.0
        return np.exp(-0.5 * (d / width) ** 2)

    return cfg.feedthrough_mv * (bump(0.0) - bump(period / 2.0))


def synthesize_trace(records: RunRecords, cfg: DetectorConfig,
                     sample_rate: float, stream: RandomStream | None = None) -> WaveformTrace:
    """Raw detector trace: periodic feedthrough + avalanche pulses + noise.

    The feedthrough is period-exact by construction (one template tiled), so
    self-differencing annihilates it identically.  Each gate with a nonzero
    avalanche amplitude contributes one unit-peak pulse scaled to that
    amplitude, centered in its gate.  White Gaussian electronic noise of the
    configured width is added per sample when a stream is given.
    """
    period = samples_per_gate(cfg, sample_rate)
    n_gates = len(records)
    trace = np.tile(_feedthrough_period(cfg, period), n_gates)

    pulse = pulse_template(cfg, sample_rate)
    half = (len(pulse) - 1) // 2
    center = period // 2
    start = center - half
    if start < 0 or start + len(pulse) > period:
        raise ValueError("avalanche pulse does not fit inside one gate")
    hit = np.flatnonzero(records.amplitude_mv > 0.0)
    if hit.size:
        view = trace.reshape(n_gates, period)
        view[hit, start:start + len(pulse)] += \
            records.amplitude_mv[hit, None] * pulse[None, :]

    if stream is not None and cfg.sigma_electronic_mv > 0.0:
        trace += stream.generator.normal(0.0, cfg.sigma_electronic_mv, trace.shape[0])
    return WaveformTrace(sample_rate=sample_rate, samples=trace, start_time=0.0)


def self_difference(trace: WaveformTrace, period_samples: int) -> WaveformTrace:
    """Delay-and-subtract: out[i] = in[i] - in[i - period_samples].

    The output drops the first period (no predecessor) and its start time
    advances accordingly, so sample j of the output sits at the same absolute
    time as input sample j + period_samples.
    """
    t = int(period_samples)
    if t < 1:
        raise ValueError("period_samples must be >= 1")
    x = trace.samples
    if x.shape[0] <= t:
        raise ValueError("trace shorter than one period")
    return WaveformTrace(sample_rate=trace.sample_rate,
                         samples=x[t:] - x[:-t],
                         start_time=trace.start_time + t / trace.sample_rate)


def extract_amplitudes(trace: WaveformTrace, cfg: DetectorConfig,
                       matched: bool = True) -> GateAmplitudes:
    """Per-gate amplitude: signed window maximum of the matched-filtered trace.

    The measurement window is the central half of each gate period, centered
    on the pulse position.  Matched filtering (correlation with the unit-peak
    pulse template, normalized to preserve pulse height) suppresses the
    sample-level noise so that empty gates report amplitudes at the
    electronic-noise level; the avalanche echo is negative everywhere and
    never wins the signed maximum.  ``matched=False`` skips the filter (raw
    window maxima, for diagnostics).
    """
    period = samples_per_gate(cfg, trace.sample_rate)
    x = trace.samples
    if matched:
        h = pulse_template(cfg, trace.sample_rate)
        x = np.convolve(x, h, mode="same") / np.dot(h, h)
    n_gates = x.shape[0] // period
    lo = period // 4
    hi = period - period // 4
    window = x[:n_gates * period].reshape(n_gates, period)[:, lo:hi]
    offset = int(round(trace.start_time * trace.sample_rate)) // period
    return GateAmplitudes(gate_index=offset + np.arange(n_gates),
                          amplitude_mv=window.max(axis=1))


def pipeline_amplitudes(records: RunRecords, cfg: DetectorConfig,
                        sample_rate: float,
                        stream: RandomStream | None = None) -> GateAmplitudes:
    """Full readout chain: synthesize -> self-difference -> extract.

    Covers gates 1..n-1 (the first gate is the subtraction reference).
    """
    trace = synthesize_trace(records, cfg, sample_rate, stream)
    sd = self_difference(trace, samples_per_gate(cfg, sample_rate))
    return extract_amplitudes(sd, cfg)


def readout_amplitudes(records: RunRecords, cfg: DetectorConfig,
                       stream: RandomStream,
                       illuminated_only: bool = True) -> np.ndarray:
    """Gate-synchronous amplitude readout: record amplitude + electronic noise.

    Equivalent to sampling the self-differenced output at the pulse position,
    without synthesizing the trace; this is what the histogram presets use at
    scale.  Noise is drawn in gate order for the selected gates only.
    """
    amps = records.amplitude_mv
    if illuminated_only:
        amps = amps[records.illuminated]
    amps = amps.astype(np.float64, copy=True)
    if cfg.sigma_electronic_mv > 0.0:
        amps += stream.generator.normal(0.0, cfg.sigma_electronic_mv, amps.shape[0])
    return amps


def build_histogram(amplitudes, bin_width_mv: float = HIST_BIN_WIDTH_MV,
                    lo_mv: float = HIST_LO_MV, hi_mv: float = HIST_HI_MV) -> AmplitudeHistogram:
    """Fixed-width binning over [lo_mv, hi_mv); out-of-range samples drop."""
    if bin_width_mv <= 0:
        raise ValueError("bin_width_mv must be positive")
    if hi_mv <= lo_mv:
        raise ValueError("need hi_mv > lo_mv")
    values = np.asarray(amplitudes, dtype=float)
    if isinstance(amplitudes, GateAmplitudes):
        values = amplitudes.amplitude_mv
    n_bins = int(round((hi_mv - lo_mv) / bin_width_mv))
    edges = lo_mv + bin_width_mv * np.arange(n_bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return AmplitudeHistogram(bin_edges=edges, counts=counts.astype(np.int64),
                              total=int(counts.sum()))


# -- columnar text I/O --------------------------------------------------------

def write_trace(path, trace: WaveformTrace, header_lines=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# sample_rate_hz = {trace.sample_rate!r}\n")
        fh.write(f"# start_time_s = {trace.start_time!r}\n")
        for v in trace.samples:
            fh.write(f"{v!r}\n")


def read_trace(path) -> WaveformTrace:
    sample_rate = None
    start_time = 0.0
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("sample_rate_hz"):
                    sample_rate = float(body.split("=", 1)[1])
                elif body.startswith("start_time_s"):
                    start_time = float(body.split("=", 1)[1])
                continue
            try:
                samples.append(float(line))
            except ValueError as exc:
                raise ValueError(f"{path}: bad sample on line {lineno}: {line!r}") from exc
    if sample_rate is None:
        raise ValueError(f"{path}: missing sample_rate_hz header")
    return WaveformTrace(sample_rate=sample_rate,
                         samples=np.asarray(samples, dtype=float),
                         start_time=start_time)


def write_histogram(path, hist: AmplitudeHistogram, header_lines=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("# columns: bin_left_mv bin_right_mv count\n")
        for left, right, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:],
                                      hist.counts):
            fh.write(f"{left!r} {right!r} {int(count)}\n")


def read_histogram(path) -> AmplitudeHistogram:
    edges = []
    counts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}: expected 3 columns on line {lineno}: {line!r}")
            try:
                left, right, count = float(parts[0]), float(parts[1]), int(parts[2])
            except ValueError as exc:
                raise ValueError(f"{path}: bad row on line {lineno}: {line!r}") from exc
            if not edges:
                edges.append(left)
            elif abs(edges[-1] - left) > 1e-9:
                raise ValueError(f"{path}: non-contiguous bins on line {lineno}")
            edges.append(right)
            counts.append(count)
    if not counts:
        raise ValueError(f"{path}: histogram contains no bins")
    counts = np.asarray(counts, dtype=np.int64)
    return AmplitudeHistogram(bin_edges=np.asarray(edges, dtype=float),
                              counts=counts, total=int(counts.sum()))
