"""Fast-gated silicon APD photon-number detection: simulation and analysis."""

from .analysis import (
    CountingSummary,
    DiscriminationResult,
    MixtureModel,
    Peak,
    counting_summary,
    discrimination_errors,
    estimate_efficiency,
    excess_noise,
    fit_mixture,
    place_thresholds,
    poisson_consistency,
)
from .detector import (
    BiasPoint,
    BiasResponse,
    ConfigError,
    DetectorConfig,
    GateRecord,
    RunCounts,
    RunRecords,
    TrapState,
    bias_sweep,
    simulate_counts,
    simulate_gate,
    simulate_run,
)
from .kernel import compiled_available, kernel_name
from .photonstat import (
    EfficiencyChain,
    PhotonFlux,
    detected_flux,
    poisson_pmf,
    poisson_tail,
    sample_photon_number,
    thin,
)
from .streams import RandomStream
from .waveform import (
    AmplitudeHistogram,
    GateAmplitudes,
    WaveformTrace,
    build_histogram,
    extract_amplitudes,
    pipeline_amplitudes,
    readout_amplitudes,
    self_difference,
    synthesize_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeHistogram", "BiasPoint", "BiasResponse", "ConfigError",
    "CountingSummary", "DetectorConfig", "DiscriminationResult",
    "EfficiencyChain", "GateAmplitudes", "GateRecord", "MixtureModel", "Peak",
    "PhotonFlux", "RandomStream", "RunCounts", "RunRecords", "TrapState",
    "WaveformTrace", "bias_sweep", "build_histogram", "compiled_available",
    "counting_summary", "detected_flux", "discrimination_errors",
    "estimate_efficiency", "excess_noise", "extract_amplitudes", "fit_mixture",
    "kernel_name", "pipeline_amplitudes", "place_thresholds",
    "poisson_consistency", "poisson_pmf", "poisson_tail", "readout_amplitudes",
    "sample_photon_number", "self_difference", "simulate_counts",
    "simulate_gate", "simulate_run", "synthesize_trace", "thin",
]
