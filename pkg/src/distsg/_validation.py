"""Input validation helpers for the estimator classes."""

import numpy as np
from sklearn.utils import check_array

from .exceptions import ValidationError


def check_panel(X, y=None, n=None, m=None):
    """Validate a regressor panel of shape (steps, n, m) and observations (steps, n).

    A single step may be passed as an (n, m) array and (n,) observations.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
        if y is not None:
            y = np.asarray(y, dtype=float).reshape(1, -1)
    if X.ndim != 3:
        raise ValidationError(f"X must have shape (steps, n, m), got {X.shape}")
    X = check_array(X, allow_nd=True, ensure_min_samples=1, ensure_all_finite=True)
    if n is not None and X.shape[1] != n:
        raise ValidationError(f"X has {X.shape[1]} sensors, expected {n}")
    if m is not None and X.shape[2] != m:
        raise ValidationError(f"X has regressor dimension {X.shape[2]}, expected {m}")
    if y is None:
        return X
    y = check_array(np.asarray(y, dtype=float), ensure_2d=True, ensure_all_finite=True)
    if y.shape != X.shape[:2]:
        raise ValidationError(f"y must have shape {X.shape[:2]}, got {y.shape}")
    return X, y


def check_step_sizes(mu, nu):
    if not 0 < mu < 1:
        raise ValidationError(f"mu must lie in (0, 1), got {mu}")
    if not 0 <= nu < 1:
        raise ValidationError(f"nu must lie in [0, 1), got {nu}")
