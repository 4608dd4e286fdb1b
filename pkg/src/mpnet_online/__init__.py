"""Online unsupervised unfolding of matching pursuit for massive MIMO channel estimation."""

from .array_geometry import (
    AntennaArray,
    Dictionary,
    PerturbationSpec,
    build_dictionary,
    nominal_ula,
    perturb_array,
    steering_vector,
)
from .channel_sim import ChannelSample, ChannelStream, ChannelStreamConfig, PathSpec
from .estimators import (
    EstimateResult,
    ls_estimate,
    mp_estimate,
    omp_estimate,
    single_atom_estimate,
)
from .mpnet import MpNetModel, init_from_dictionary, init_random, train_on_batch

__version__ = "0.1.0"
