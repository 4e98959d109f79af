"""Teacher-to-student distillation for toy sequence-to-sequence transcription models.

The package is numpy-only. See the README for a tour of the modules.
"""

__version__ = "0.1.0"
