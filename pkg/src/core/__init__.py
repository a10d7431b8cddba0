# =============================================================================
# File 11: src/core/__init__.py
# =============================================================================

"""
VSCG - Core Modules
Motore numerico, dati, encoder di segmento, ESCM, teste e pipeline
"""

from .numkit import Adam, DiffValue, Module, Parameter, check_gradients
from .datapack import FeatureSample, read_pack, synth_dataset, write_pack
from .segment_encoder import SegmentEncoder
from .escm import EventSemanticConsistency
from .pipeline import Trainer, build_model, evaluate, load_checkpoint, save_checkpoint

__all__ = [
    'Adam',
    'DiffValue',
    'Module',
    'Parameter',
    'check_gradients',
    'FeatureSample',
    'read_pack',
    'synth_dataset',
    'write_pack',
    'SegmentEncoder',
    'EventSemanticConsistency',
    'Trainer',
    'build_model',
    'evaluate',
    'load_checkpoint',
    'save_checkpoint',
]
