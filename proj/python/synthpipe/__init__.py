"""Synthetic construction-worker dataset pipeline: prompt matrices, generation
campaigns, dataset bookkeeping, and detection metrics."""

from ._synthpipe import *  # noqa: F401,F403
from ._synthpipe import __version__  # noqa: F401
