from .clustering import KMeansResult, kmeans
from .decomposition import PCAResult, pca_fit_transform
from .forest import RandomForest, Tree, fit_random_forest
from .metrics import metric_kendall_tau, metric_mae, metric_r2, spearman
from .protocol import (
    AttributeTable,
    DownstreamProtocol,
    EvalReport,
    ProximityResult,
    ReportRow,
    proximity_correlation,
    run_downstream,
)
from .regression import LinearModel, fit_linear

__all__ = [
    "AttributeTable", "DownstreamProtocol", "EvalReport", "KMeansResult", "LinearModel", "PCAResult",
    "ProximityResult", "RandomForest", "ReportRow", "Tree", "fit_linear", "fit_random_forest", "kmeans",
    "metric_kendall_tau", "metric_mae", "metric_r2", "pca_fit_transform", "proximity_correlation",
    "run_downstream", "spearman",
]
