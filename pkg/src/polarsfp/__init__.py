"""polarsfp: shape-from-polarization toolkit.

Synthetic polarized rendering with ground-truth normals, the classical
Fresnel/sinusoid reconstruction pipeline, and a small trainable U-Net on a
from-scratch differentiable tensor core.
"""

__version__ = "0.1.0"
