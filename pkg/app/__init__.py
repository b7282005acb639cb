"""Conditional diffusion for rare surgical phase/toolset frames"""

__version__ = "0.1.0"
