"""On-device federated anomaly detection with OS-ELM autoencoders.

Edge devices train OS-ELM autoencoders sequentially, share the
intermediate results ``U = H^T H`` and ``V = H^T t`` through a relay server,
and merge them in a single step into the model that batch training on the
union of their data would produce.
"""

__version__ = "0.1.0"

from .anomaly import AnomalyDetector, fit, is_anomaly, loss, losses, new_detector, train_normal
from .elm import Activation, Chunk, SlfnModel, Topology, hidden, init_model, predict, train_batch
from .errors import (
    ConfigurationError, DimensionError, FedOselmError, FormatError, IncompatibleTopologyError,
    NotSymmetricError, SingularMatrixError, TransportError,
)
from .merge import Intermediates, combine, extract, rebuild, subtract
from .oselm import init_sequential, train_stream, update
