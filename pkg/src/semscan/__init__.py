"""semscan: joint detection of emerging topics and their spatial footprint
in timestamped, geolocated text streams."""

from .corpus import Corpus, Document, LocationRegistry, Vocabulary, ingest, tokenize
from .detector import DetectorConfig, DetectorState, run, sample_delta
from .gibbs import (
    CountTables,
    Hyperparameters,
    TopicModel,
    conditional_distribution,
    fold_in,
    fold_in_many,
    gibbs_sweep,
    load_checkpoint,
    map_estimates,
    save_checkpoint,
)
from .semantic import ScanConfig, fit_background, fit_foreground
from .spatial import (
    RegionPosterior,
    RegionPrior,
    document_log_likelihood,
    location_posterior,
    log_likelihood_ratios,
    neighborhood_score,
    region_posterior,
)

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "CountTables",
    "DetectorConfig",
    "DetectorState",
    "Document",
    "Hyperparameters",
    "LocationRegistry",
    "RegionPosterior",
    "RegionPrior",
    "ScanConfig",
    "TopicModel",
    "Vocabulary",
    "conditional_distribution",
    "document_log_likelihood",
    "fit_background",
    "fit_foreground",
    "fold_in",
    "fold_in_many",
    "gibbs_sweep",
    "ingest",
    "load_checkpoint",
    "location_posterior",
    "log_likelihood_ratios",
    "map_estimates",
    "neighborhood_score",
    "region_posterior",
    "run",
    "sample_delta",
    "save_checkpoint",
    "tokenize",
]
