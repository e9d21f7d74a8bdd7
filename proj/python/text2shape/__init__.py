# SPDX-License-Identifier: Apache-2.0
"""Text-to-shape embeddings, retrieval and conditional voxel generation."""

from ._core import (
    ConfigError,
    EmbeddingModel,
    Error,
    FormatError,
    GanModel,
    InvalidArgument,
    IoError,
    ShapeError,
    color_emd,
    evaluate_retrieval,
    generate_primitives,
    iou,
    knn,
    read_grid,
    read_manifest,
    voxelize_obj,
    write_grid,
)

__all__ = [
    "ConfigError",
    "EmbeddingModel",
    "Error",
    "FormatError",
    "GanModel",
    "InvalidArgument",
    "IoError",
    "ShapeError",
    "color_emd",
    "evaluate_retrieval",
    "generate_primitives",
    "iou",
    "knn",
    "read_grid",
    "read_manifest",
    "voxelize_obj",
    "write_grid",
]
