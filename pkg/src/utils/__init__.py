# =============================================================================
# File 12: src/utils/__init__.py
# =============================================================================

"""
VSCG - Utilities
Configurazione a sezioni e monitor del training
"""

from .config import ConfigError, ModelConfig, VSCGConfig, preset
from .performance import PerformanceMonitor

__all__ = [
    'ConfigError',
    'ModelConfig',
    'VSCGConfig',
    'preset',
    'PerformanceMonitor'
]
