"""Data-driven mixed H2/Hinf controller synthesis and cascaded AO loop simulation."""

from .analysis import (ComparisonReport, WelchConfig, band_rms, compare,
                       default_welch, empirical_rejection, welch_psd)
from .cascade import (CascadeConfig, SimTrace, StageConfig, apply_stroke_limit,
                      reconstruct_open_loop, run_cascade, run_dcao,
                      run_standalone, single_stage_config)
from .config import RunConfig, load_config, resolve_config
from .disturbance import (AtmosphericPsdParams, FirModel, NoiseParams,
                          VibrationPeak, add_vibration_peaks, atmospheric_psd,
                          fit_fir_to_psd, generate_timeseries,
                          measurement_noise_sigma, sample_photon_noise)
from .errors import (AoLoopError, BandwidthUndefinedError, ConfigError,
                     DegenerateLinearizationError, ParameterError,
                     SingularityError, SynthesisInfeasibleError)
from .freqmodel import (FrequencyGrid, FrequencyResponse, LoopTiming,
                        comp_sensitivity, default_grid, make_grid,
                        plant_response, sensitivity)
from .iirfilter import (FilterState, IirController, denominator_poles,
                        eval_freq, integrator, passthrough, step)
from .presets import PRESETS, SciencePreset, get_preset
from .runner import run
from .synthesis import (ControllerFactorization, SynthesisProblem,
                        SynthesisResult, ValidationReport, build_weights,
                        convex_step, hermitian2x2_psd,
                        optimize_integrator_gain, synthesize, validate)

__version__ = "0.1.0"
