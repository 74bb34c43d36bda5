"""Consensus shape estimation from several binary segmentations."""

__version__ = "0.1.0"

from .baselines import StapleResult, intersection, majority_vote, staple_em, union
from .criterion import (EnergyBreakdown, JointProbs, KernelSpec, QualityParams, energy_breakdown,
                        joint_probs, sensitivity_specificity)
from .evolution import EvolutionConfig, EvolutionResult, EvolutionTrace, evolve
from .grid import BinaryMask, RasterGrid, ShapeSet, dice, load_mask, save_mask
from .levelset import LevelSetField, init_bubbles, init_circle, init_from_mask, redistance
from .synthetic import make_lozenge_set
from .velocity import VelocityContext, composite_F, speed_field

__all__ = [
    "BinaryMask", "EnergyBreakdown", "EvolutionConfig", "EvolutionResult", "EvolutionTrace",
    "JointProbs", "KernelSpec", "LevelSetField", "QualityParams", "RasterGrid", "ShapeSet",
    "StapleResult", "VelocityContext", "composite_F", "dice", "energy_breakdown", "evolve",
    "init_bubbles", "init_circle", "init_from_mask", "intersection", "joint_probs", "load_mask",
    "majority_vote", "make_lozenge_set", "redistance", "save_mask", "sensitivity_specificity",
    "speed_field", "staple_em", "union",
]
