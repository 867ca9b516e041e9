"""Targets, losses, augmentation and the training loop."""
from lovmm.training.augment import SE2, apply_transforms, augment, transform_action, transform_workspace
from lovmm.training.gradcheck import grad_check, random_sample
from lovmm.training.losses import huber, loss_2d, loss_2d_index, loss_3d, softmax_nll
from lovmm.training.targets import TrainingSample, make_targets
from lovmm.training.trainer import DemoSampler, TrainResult, sample_loss, train

__all__ = [
    "SE2", "apply_transforms", "augment", "transform_action", "transform_workspace",
    "grad_check", "random_sample", "huber", "loss_2d", "loss_2d_index", "loss_3d", "softmax_nll",
    "TrainingSample", "make_targets", "DemoSampler", "TrainResult", "sample_loss", "train",
]
