"""Compressed/stretched-exponential response curve and its geometry.

The curve maps a nonnegative "effective signal" x to a reliability level
in [0, 1) via exp(-(kappa/x)**beta).  It is strictly increasing with a
single inflection point, which is what makes it useful as a curvature
certificate for the shaped games built on top of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["ResponseCurve"]


@dataclass(frozen=True)
class ResponseCurve:
    """Reliability curve exp(-(kappa/x)**beta).

    kappa > 0 locates the curve on the signal axis; beta > 0 sets the
    shape (stretched for beta < 1, compressed for beta > 1).
    """

    kappa: float
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise ValueError(f"kappa must be a positive finite real, got {self.kappa}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be a positive finite real, got {self.beta}")

    def rel(self, x):
        """Reliability at signal x >= 0; the x = 0 limit is 0 exactly.

        Accepts a scalar or ndarray.
        """
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("signal must be finite")
        if np.any(x < 0):
            raise ValueError("signal must be nonnegative")
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-((self.kappa / x[pos]) ** self.beta))
        if out.ndim == 0:
            return float(out)
        return out

    def derivatives(self, x: float) -> tuple[float, float]:
        """First and second derivative of rel at x > 0.

        y'  = y * a * beta * x**-(beta+1)            with a = kappa**beta
        y'' = y * a * beta * x**-(beta+2) * (a * beta * x**-beta - (beta+1))
        """
        x = float(x)
        if not math.isfinite(x) or x <= 0:
            raise ValueError(f"derivatives require a positive finite signal, got {x}")
        a = self.kappa**self.beta
        b = self.beta
        y = math.exp(-a * x ** (-b))
        d1 = y * a * b * x ** (-(b + 1.0))
        d2 = y * a * b * x ** (-(b + 2.0)) * (a * b * x ** (-b) - (b + 1.0))
        return d1, d2

    def inflection(self) -> tuple[float, float]:
        """Unique inflection point (x_star, y_star) in closed form.

        x_star = kappa * (beta/(beta+1))**(1/beta); y_star = exp(-1-1/beta),
        which is independent of kappa and always lies in (e**-2, e**-1).
        """
        b = self.beta
        x_star = self.kappa * (b / (b + 1.0)) ** (1.0 / b)
        y_star = math.exp(-1.0 - 1.0 / b)
        return x_star, y_star
