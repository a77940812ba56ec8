"""Multi-k scalable k-means++ clustering of raster imagery.

Pixels are clustered in the CIELAB (a*, b*) plane for several k values in
shared passes: k-means|| seeding, Lloyd iterations and simplified-silhouette
validation all run on a local map/reduce engine whose worker count stands in
for cluster size.
"""
from ._accel import BACKEND
from .colorpixel import LabColor, PixelRecord, RgbColor, extract_pixels, lab_distance_sq, rgb_to_lab
from .kmeanspp_init import CandidateSet, InitConfig, init_multi_k
from .model import PartitionModel
from .mr_engine import Engine, EngineConfig, partition, run_job
from .multi_k_cluster import Assignment, ClusterConfig, assign, recompute_centers, run_multi_k
from .pipeline import PipelineConfig, run_pipeline, validate_dir
from .sequence_store import Raster, SequenceEntry, decode_image, pack, unpack
from .ssi_select import SSIReport, partition_ssi, point_ssi, select_k

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Assignment",
    "CandidateSet",
    "ClusterConfig",
    "Engine",
    "EngineConfig",
    "InitConfig",
    "LabColor",
    "PartitionModel",
    "PipelineConfig",
    "PixelRecord",
    "Raster",
    "RgbColor",
    "SSIReport",
    "SequenceEntry",
    "assign",
    "decode_image",
    "extract_pixels",
    "init_multi_k",
    "lab_distance_sq",
    "pack",
    "partition",
    "partition_ssi",
    "point_ssi",
    "recompute_centers",
    "rgb_to_lab",
    "run_job",
    "run_multi_k",
    "run_pipeline",
    "select_k",
    "unpack",
    "validate_dir",
]
