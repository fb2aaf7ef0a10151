"""Huber-clipped squared error shared by both teachers' value losses."""

import numpy as np


def huber(err, clip):
    """``err**2`` inside ``|err| <= clip``, linear outside; ``clip=0`` is plain squared error."""
    if not clip:
        return err**2
    a = np.abs(err)
    return np.where(a <= clip, err**2, 2.0 * clip * a - clip**2)


def huber_slope(err, clip):
    """Derivative of :func:`huber` with respect to ``err``."""
    return 2.0 * (np.clip(err, -clip, clip) if clip else err)
