"""Pydantic schemas for configurations, records and reports."""
from cea_kit.schemas.backbone import BackboneConfig
from cea_kit.schemas.cea import CeaConfig, FactorGenerator, FactorSource, RoutingRule, Target
from cea_kit.schemas.degradation import (
    CategoryFamily,
    DatasetConfig,
    DatasetManifest,
    DegradationSpec,
    DegradationStep,
    DegradationType,
    ManifestItem,
)
from cea_kit.schemas.objectives import BootstrapResult, LossConfig, MetricRecord
from cea_kit.schemas.run import OptimizerConfig, RunArtifacts, RunConfig

__all__ = [
    "BackboneConfig",
    "BootstrapResult",
    "CategoryFamily",
    "CeaConfig",
    "DatasetConfig",
    "DatasetManifest",
    "DegradationSpec",
    "DegradationStep",
    "DegradationType",
    "FactorGenerator",
    "FactorSource",
    "LossConfig",
    "ManifestItem",
    "MetricRecord",
    "OptimizerConfig",
    "RoutingRule",
    "RunArtifacts",
    "RunConfig",
    "Target",
]
