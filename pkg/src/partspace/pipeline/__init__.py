from .config import AnnotationFile, ConfigError, PipelineConfig, load_annotation, load_config
from .container import ContainerError, ModelContainer, file_sha256
from .stages import StageError, run_pipeline
from .report import export_report
from .service import build_app, serve

__all__ = [
    "AnnotationFile",
    "ConfigError",
    "PipelineConfig",
    "load_annotation",
    "load_config",
    "ContainerError",
    "ModelContainer",
    "file_sha256",
    "StageError",
    "run_pipeline",
    "export_report",
    "build_app",
    "serve",
]
