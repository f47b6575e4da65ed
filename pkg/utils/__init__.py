"""
EdgeForge Utilities
"""

from .colors import Colors
from .config import Config

__all__ = ['Colors', 'Config']
