"""
Optional MLflow experiment tracking for replication runs.

Tracking is enabled only when ``MLFLOW_TRACKING_URI`` is set; mlflow is
imported lazily so the simulator works without it.
"""
import logging
import os
import re
from typing import Any, Dict, Mapping, Optional, Sequence

from metrics import PhaseFlowSummary

logger = logging.getLogger(__name__)

EXPERIMENT_NAME = "Hypervisor Embedding Replication"


def init_mlflow(tracking_uri: Optional[str] = None, experiment_name: str = EXPERIMENT_NAME):
    """
    Initialize MLflow configuration.

    Returns:
        The mlflow module ready for logging, or None if tracking is disabled or unavailable
    """
    tracking_uri = tracking_uri or os.getenv("MLFLOW_TRACKING_URI")
    if not tracking_uri:
        return None
    try:
        import mlflow
    except ImportError:
        logger.warning("MLFLOW_TRACKING_URI is set but mlflow is not installed; tracking disabled")
        return None

    try:
        mlflow.set_tracking_uri(tracking_uri)
        experiment = mlflow.get_experiment_by_name(experiment_name)
        if experiment is None:
            experiment_id = mlflow.create_experiment(experiment_name)
            logger.info(f"Created MLflow experiment {experiment_name} (ID: {experiment_id})")
        else:
            logger.info(f"Found existing experiment: {experiment_name} (ID: {experiment.experiment_id})")
        mlflow.set_experiment(experiment_name)
        return mlflow
    except Exception as e:
        logger.warning(f"Error initializing MLflow, tracking disabled: {e}")
        return None


def _metric_name(*parts: str) -> str:
    return re.sub(r"[^\w\-. /]", "_", ".".join(parts))


def cell_metrics(summaries: Sequence[PhaseFlowSummary]) -> Dict[str, float]:
    """Flatten phase summaries into MLflow metric names (undefined rates are left out)."""
    metrics: Dict[str, float] = {}
    for s in summaries:
        for field in ("rejection_rate", "mean_occupancy", "served_share"):
            value = getattr(s, field)
            if value is not None:
                metrics[_metric_name(s.phase, s.operator, s.service, field)] = float(value)
    return metrics


def log_cell(mlflow: Any, meta: Mapping[str, Any], summaries: Sequence[PhaseFlowSummary]) -> None:
    """Log one replication cell as its own MLflow run; tracking errors never fail the cell."""
    if mlflow is None:
        return
    try:
        with mlflow.start_run(run_name=f"{meta['algorithm']}-seed-{meta['seed']}"):
            mlflow.log_params({
                "seed": meta["seed"],
                "algorithm": meta["algorithm"],
                "horizon": meta["horizon"],
                "substrate": meta["substrate"],
            })
            mlflow.log_metrics(cell_metrics(summaries))
    except Exception as e:
        logger.warning(f"Failed to log {meta['algorithm']} seed {meta['seed']} to MLflow: {e}")
