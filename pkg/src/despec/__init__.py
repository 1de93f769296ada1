"""Single-image specular highlight removal with a multi-class adversarial loss."""

__version__ = "0.1.0"
