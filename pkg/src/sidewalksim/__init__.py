"""2D sidewalk navigation simulator with teacher-student distillation."""

__version__ = "0.1.0"
