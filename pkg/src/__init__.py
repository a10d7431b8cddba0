# =============================================================================
# VSCG - Modular Structure
# File 1: src/__init__.py
# =============================================================================

"""
VSCG - video-level semantic consistency guidance per la localizzazione di
eventi audio-visivi, su feature di segmento precalcolate

License: MIT
Version: 1.0.0
"""

__version__ = "1.0.0"
__license__ = "MIT"
__description__ = "Audio-visual event localization with video-level semantic consistency guidance"
