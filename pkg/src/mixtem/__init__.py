"""Multi-signal, multi-channel integrate-and-fire time encoding and decoding.

J bandlimited sources (finite sinc sums) are mixed by a known I x J matrix,
each mixture drives an integrate-and-fire machine, and the sources are
recovered from the spike times by alternating projections.
"""

from .mixing import MixingMatrix, RankDeficient, SubsetDegenerate, mix, project_colspace, unmix, validate
from .pocs_decoder import (
    DecoderInput,
    DecoderState,
    NotConverged,
    StopRule,
    decode,
    project_spikes,
    reconstructible,
    step,
)
from .signal_model import (
    HybridSignal,
    Rectangle,
    SincGrid,
    SincSignal,
    VectorSignal,
    bandlimit_sample,
    evaluate,
    integrate,
    sinc_eval,
    sine_integral,
)
from .tem_encoder import SpikeTrain, TemParams, encode, spike_residuals

__version__ = "0.1.0"
