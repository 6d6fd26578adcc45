"""Rate-distortion geometry of the quadratic Gaussian CEO problem.

L encoders observe a remote Gaussian source through independent Gaussian
noises and send rate-limited descriptions to a single decoder that
estimates the source under squared error.  This package computes the
achievable-rate geometry of that setup at desk scale: rate regions and
their vertices, supporting hyperplanes, the unique inverse noise
allocation of a rate tuple, multistage refinement feasibility, successive
Wyner-Ziv schedules, and Monte Carlo confirmation of predicted
distortions.  All rates are in nats.
"""

from .model import CeoInstance, R_MAX, channel_noise_from_r, d_min, distortion, precision

__all__ = [
    "CeoInstance",
    "R_MAX",
    "channel_noise_from_r",
    "d_min",
    "distortion",
    "precision",
]

__version__ = "0.1.0"
