"""Cascaded-channel estimation for RIS-aided MIMO systems.

The toolkit covers the whole pipeline: ground-truth channel simulation,
the phase-decoupled effective channel, partially decoupled atomic-norm
estimators (plain, reweighted, and reweighted with adaptive phase
control), the 2-D/3-D atomic-norm baselines, the structured semidefinite
solver they all share, and a Monte-Carlo benchmark harness.
"""

from . import bench, channel, estimators, linalg, sdp, toeplitz

__version__ = "0.1.0"

__all__ = ["bench", "channel", "estimators", "linalg", "sdp", "toeplitz", "__version__"]
