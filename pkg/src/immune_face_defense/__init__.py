"""immune-face-defense
"""

__version__ = "0.1"
