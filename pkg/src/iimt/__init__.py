"""In-image machine translation with background/text decomposition.

Subpackages and modules:

- ``textcorpus``: parallel text, pseudo-translation, BPE, glyph atlas
- ``imagegen``: procedural backgrounds, text rendering, dataset building
- ``neural``: patch geometry, transformer blocks, losses, AdamW, checkpoints
- ``separation`` / ``vqcodec`` / ``translator`` / ``fusion``: the model components
- ``evalkit``: OCR oracle and metrics
- ``pipeline`` / ``cli``: stage training, end-to-end inference, evaluation
"""

from .errors import (
    BundleError,
    ConfigError,
    DependencyError,
    DoesNotFitError,
    IIMTError,
    InputError,
    NumericalError,
)

__version__ = "0.1.0"

__all__ = [
    "BundleError",
    "ConfigError",
    "DependencyError",
    "DoesNotFitError",
    "IIMTError",
    "InputError",
    "NumericalError",
]
