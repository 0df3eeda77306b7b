"""Sample-spread ambiguity score over 3D joint positions."""

from __future__ import annotations

import numpy as np

__all__ = ["ambiguity_std"]


def ambiguity_std(samples: np.ndarray) -> float:
    """Mean over joints of the RMS-over-axes population std of the samples, in mm.

    Per joint this equals sqrt(trace(cov)/3), making the score invariant to
    rigid rotations of the whole sample cloud. Needs at least two samples.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3 or samples.shape[0] < 2:
        raise ValueError("ambiguity_std needs (n_samples >= 2, n_kp, 3) joint sets")
    per_axis_std = samples.std(axis=0, ddof=0)  # (n_kp, 3)
    per_joint = np.sqrt(np.mean(per_axis_std**2, axis=-1))
    return float(per_joint.mean())
