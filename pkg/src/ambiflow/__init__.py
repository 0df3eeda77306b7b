"""Distribution-aware two-hand pose toolkit.

Learns conditional normalizing flows over articulated two-hand poses from
ambiguous 2D observations, generates sets of plausible pose annotations by
perturb-and-reject search, and evaluates distribution quality (MMD, aligned
MPJPE, ambiguity, view selection).
"""

__version__ = "0.1.0"
