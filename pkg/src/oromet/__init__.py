"""Orometric valuation functions (isolation, prominence) on finite metric data."""

from .errors import (
    BelowThresholdError,
    InvalidDatasetError,
    OracleScaleExceeded,
    OrometError,
    ParseError,
    TransportError,
    ValidationError,
)
from .metric import (
    MetricDataset,
    PointRecord,
    geodesic_distance,
    max_distance_from,
    minimal_threshold,
    minimal_threshold_pair,
)
from .orometry import (
    Graph,
    OrometricScores,
    ThresholdGraph,
    build_threshold_graph,
    enrich,
    isolation_all,
    prominence_all_sweep,
    prominence_bottleneck,
    prominence_bruteforce,
    prominence_monotonicity_probe,
)

__version__ = "0.1.0"
