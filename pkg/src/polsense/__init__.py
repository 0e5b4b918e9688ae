"""Spatially resolved polarization sensing from noisy Jones matrices."""

from .errors import (ConfigError, DegenerateSectionError, DivergenceError, GridError,
                     PolsenseError, UnderdeterminedError)
from .estimates import EstimateSeries
from .isa import PeelDiagnostics, extract_last_section, peel, response_to_taps, run_isa
from .learner import FitResult, OptimizerConfig, fit, loss, loss_gradient, track
from .polmodel import (ChannelParams, FrequencyGrid, FrequencyResponse, SectionParams,
                       TapSequence, channel_response, impulse_taps, make_dgd, make_pdl,
                       make_rotation, response_distance)
from .simulator import (MeasurementSeries, Measurements, NoiseModel, PerturbationProfile,
                        ScenarioConfig, add_noise, evolve, generate_scenario, sample_initial)

__version__ = "0.1.0"
