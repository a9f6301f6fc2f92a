import logging

from celery import shared_task

from .keyrate_service import KeyRateService, SweepOptions
from .params import ExperimentParams

logger = logging.getLogger(__name__)


@shared_task
def evaluate_distance_task(params, distance_km, options):
    """Optimised key-rate point for one distance of a sweep."""
    try:
        point = KeyRateService.evaluate_distance(
            ExperimentParams.from_dict(params), distance_km, SweepOptions.from_dict(options),
        )
        return {"status": "success", "point": point.to_dict()}
    except Exception as e:
        logger.error(f"Error evaluating distance {distance_km} km: {e}", exc_info=True)
        return {"status": "error", "message": str(e)}
