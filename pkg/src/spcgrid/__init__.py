"""spcgrid: rate-distortion optimized spatial predictive coding for
density+feature voxel-grid radiance fields.

Pipeline: importance pruning, quantize-then-predict residual coding over a
SAD-optimal reference graph, two-stage RD finetuning, adaptive arithmetic
coding, and a sectioned ``.spcv`` container.
"""

__version__ = "0.1.0"

from .errors import SpcgridError  # noqa: F401
