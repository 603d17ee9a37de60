"""Compile IE schemas into code-style prompts, parse model output, score it."""

__version__ = "0.1.0"
