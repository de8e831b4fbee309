"""Services behind the cea-kit commands."""
from cea_kit.services.ablation_service import AblationService
from cea_kit.services.benchmark_service import BenchmarkService
from cea_kit.services.bootstrap_service import BootstrapService
from cea_kit.services.dataset_service import DatasetService
from cea_kit.services.evaluation_service import EvaluationService
from cea_kit.services.property_service import PropertyService
from cea_kit.services.training_service import TrainingService

__all__ = [
    "AblationService",
    "BenchmarkService",
    "BootstrapService",
    "DatasetService",
    "EvaluationService",
    "PropertyService",
    "TrainingService",
]
