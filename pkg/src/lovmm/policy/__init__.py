"""Two-stream pick/place policy with DoF heads."""
from lovmm.policy.agent import AffordanceMaps, Policy, clamp_dof
from lovmm.policy.model import LovmmModel
from lovmm.policy.ops import (
    argmax_pick,
    argmax_place,
    crop_query,
    predict_pick,
    predict_place,
    rotate_templates,
)

__all__ = [
    "AffordanceMaps", "Policy", "clamp_dof", "LovmmModel", "argmax_pick", "argmax_place",
    "crop_query", "predict_pick", "predict_place", "rotate_templates",
]
