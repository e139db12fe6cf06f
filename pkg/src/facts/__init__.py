"""Factor-routed selective state-space layers for multivariate forecasting.

The layer keeps a memory of ``k`` factor rows and routes ``m`` input feature
rows into it with cross-attention, so its output is equivariant to the order
of the memory rows and invariant to the order of the feature rows.
"""

from . import autodiff
from .autodiff import Tape, Tensor, backward, precision, set_precision
from .config import ForecastConfig
from .errors import (
    CompatibilityError,
    ConfigError,
    ContractError,
    DimensionError,
    FactsError,
    NonFiniteError,
    ParseError,
    SchemaError,
    TrainingDiverged,
)
from .heads import FactorGraphDecoder, Predictor, encode_dft, encode_conv, encode_multiscale, fgd_decode, predict_latents
from .layer import FactsLayer, forward as facts_forward
from .model import ForecastModel
from .router import RouterMaps, route
from .scan import scan, scan_parallel, scan_sequential

__version__ = "0.1.0"
