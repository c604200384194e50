"""Keyframe-conditioned motion stitching with a transformer denoising diffusion model, in numpy."""

__version__ = "0.1.0"

from .bvh import read_bvh, write_bvh
from .data import ChunkDataset, Context, MotionSequence, preprocess
from .denoiser import DenoiserConfig, DenoiserModel, load_checkpoint, sample, save_checkpoint
from .kinematics import Skeleton, body22_skeleton, forward_kinematics
from .schedule import DiffusionSchedule, add_noise, make_schedule, reverse_step
from .training import TrainConfig, fit

__all__ = [
    "ChunkDataset", "Context", "DenoiserConfig", "DenoiserModel", "DiffusionSchedule", "MotionSequence",
    "Skeleton", "TrainConfig", "add_noise", "body22_skeleton", "fit", "forward_kinematics", "load_checkpoint",
    "make_schedule", "preprocess", "read_bvh", "reverse_step", "sample", "save_checkpoint", "write_bvh",
]
