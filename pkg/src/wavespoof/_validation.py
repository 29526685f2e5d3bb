"""Input validation helpers shared by the functional API and the estimators."""

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when an argument violates a documented precondition."""


class DataError(RuntimeError):
    """Raised when input data (files, datasets) cannot be used as given."""


def check_signal(x, name="x", min_length=1):
    """Return ``x`` as a finite, contiguous 1-D float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {x.shape}")
    if x.size < min_length:
        if x.size == 0:
            raise ValidationError(f"{name} is empty")
        raise ValidationError(
            f"{name} has {x.size} samples, need at least {min_length}"
        )
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} contains non-finite values")
    return np.ascontiguousarray(x)


def check_features(X, name="features", min_frames=1):
    """Return ``X`` as a finite 2-D float64 matrix (frames x dims)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError(f"{name} must be 2-D (frames x dims), got shape {X.shape}")
    if X.shape[0] < min_frames:
        raise ValidationError(
            f"{name} has {X.shape[0]} frames, need at least {min_frames}"
        )
    if not np.all(np.isfinite(X)):
        raise ValidationError(f"{name} contains non-finite values")
    return X


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValidationError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValidationError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ValidationError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return value


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def check_waveforms(X, min_length=1):
    """Normalise a batch of utterances to a list of 1-D float64 arrays.

    A 2-D array is read as one utterance per row; a single 1-D array is
    treated as a batch of one.
    """
    if isinstance(X, np.ndarray) and X.ndim == 1 and X.dtype != object:
        X = [X]
    elif isinstance(X, np.ndarray) and X.ndim == 2:
        X = list(X)
    return [check_signal(x, name=f"waveform[{i}]", min_length=min_length)
            for i, x in enumerate(X)]
