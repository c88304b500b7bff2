"""Python bindings for the semdisc C++ core."""

from ._core import (
    IoError,
    NumericError,
    ShapeError,
    ValidationError,
    checkpoint_meta,
    coarse_to_fine_adv,
    evaluate_checkpoint,
    frechet_distance,
    generate_dataset,
    generate_images,
    lr_schedule,
    masks_from_scene,
    parameter_counts,
    read_dataset,
    seg_scores,
    train,
    train_probe,
    write_dataset,
)

__all__ = [
    "IoError",
    "NumericError",
    "ShapeError",
    "ValidationError",
    "checkpoint_meta",
    "coarse_to_fine_adv",
    "evaluate_checkpoint",
    "frechet_distance",
    "generate_dataset",
    "generate_images",
    "lr_schedule",
    "masks_from_scene",
    "parameter_counts",
    "read_dataset",
    "seg_scores",
    "train",
    "train_probe",
    "write_dataset",
]
