"""Cross-modal 2D/3D learning for domain adaptation at desk scale."""

__version__ = "0.1.0"
