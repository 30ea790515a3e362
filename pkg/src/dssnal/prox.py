"""Scalar and blockwise proximal kernels.

Every kernel here works elementwise on numpy arrays (scalars are accepted
and returned as numpy scalars). Generalized-Jacobian selections return
values in ``{0.0, 1.0}``; at the kink the selection is ``0``.
"""

import numpy as np


class DomainError(ValueError):
    """Raised when a kernel receives a NaN/inf input or a negative level."""


def _check(v, tau):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("kernel input contains NaN or inf")
    if not np.isfinite(tau) or tau < 0:
        raise DomainError(f"threshold must be finite and >= 0, got {tau!r}")
    return v


def clip(t, tau):
    """Return ``sgn(t) * min(|t|, tau)``."""
    t = _check(t, tau)
    return np.clip(t, -tau, tau)


def clip_jacobian(t, tau):
    """Selection from the Clarke subdifferential of :func:`clip`.

    1 strictly inside the band, 0 outside and on the boundary ``|t| == tau``.
    """
    t = _check(t, tau)
    return (np.abs(t) < tau).astype(float)


def relu_jacobian(t):
    """Selection from the Clarke subdifferential of ``max(0, t)``; 0 at ``t == 0``."""
    t = _check(t, 0.0)
    return (t > 0).astype(float)


def prox_l1_conjugate(v, tau):
    """Prox of the conjugate of ``tau * ||.||_1``.

    The conjugate is the indicator of the inf-norm ball of radius ``tau``, so
    this is a projection and does not depend on the prox scaling.
    """
    return clip(v, tau)


def prox_l1(v, tau):
    """Soft-thresholding, computed through the Moreau identity."""
    v = _check(v, tau)
    return v - np.clip(v, -tau, tau)
