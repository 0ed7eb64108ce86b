"""Seedable simulator of a mixed-signal memristive deep belief net."""

from .device import (
    ALPHA_EPS,
    DeviceParameterError,
    DeviceParams,
    DifferentialPairCell,
    FitConfig,
    FitError,
    FitResult,
    PulseTrace,
    SynapticCell,
    apply_pulse,
    delta_g_depression,
    delta_g_potentiation,
    device_preset,
    fit_device_model,
    read_conductance,
    sample_cell,
    sample_pair,
    simulate_pulse_train,
)
from .crossbar import CheckpointFormatError, CrossbarArray
from .rbm import CdCounterArray, GibbsSample, RbmLayer, compute_cd, reconstruction_error
from .dbn import Dbn, DbnConfig, EpochMetrics, TrainingStateError
from .dataset import Dataset, IdxFormatError, binarize, binarize_dataset, load_idx, load_mnist, one_hot, subset

__version__ = "0.1.0"
