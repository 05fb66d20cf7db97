"""Movement-pattern analytics over check-in and trajectory records."""

from .errors import MobpatError
from .ingest import Dataset, LocationTree, build_location_tree, parse_records, validate_dataset
from .matrices import TimeBinning, TimeOrientedMatrix, build_all, decompose_supervised

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "LocationTree",
    "MobpatError",
    "TimeBinning",
    "TimeOrientedMatrix",
    "build_all",
    "build_location_tree",
    "decompose_supervised",
    "parse_records",
    "validate_dataset",
    "__version__",
]
