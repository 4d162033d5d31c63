"""Throughput utility functions with closed-form derivative inverses.

Every utility here is non-negative, non-decreasing, concave and
differentiable on [0, inf), with ``U(0) == 0``. The rate controller needs
the inverse of the first derivative, so each class provides it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class UnknownUtilityError(ValueError):
    pass


@dataclass(frozen=True)
class LogUtility:
    """``U(x) = scale * log(1 + x)``."""

    scale: float = 1

    name = "log"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("log utility scale must be positive")

    def value(self, x):
        return self.scale * math.log1p(x)

    def deriv(self, x):
        return self.scale / (1 + x)

    def deriv_inv(self, y):
        # U' has range (0, scale]; below it the inverse is unbounded.
        if y <= 0:
            return math.inf
        return self.scale / y - 1

    @property
    def deriv_at_zero(self):
        return self.scale

    def params(self) -> dict:
        return {"name": self.name, "scale": self.scale}


@dataclass(frozen=True)
class AlphaFairUtility:
    """Shifted alpha-fair family ``U(x) = scale * ((1+x)^(1-a) - 1) / (1-a)``.

    ``alpha == 1`` is the log utility and is rejected here; use
    :class:`LogUtility` instead.
    """

    alpha: float = 2.0
    scale: float = 1

    name = "alpha-fair"

    def __post_init__(self):
        if not self.alpha > 0 or self.alpha == 1:
            raise ValueError("alpha must be positive and != 1")
        if not self.scale > 0:
            raise ValueError("alpha-fair utility scale must be positive")

    def value(self, x):
        a = self.alpha
        return self.scale * ((1 + x) ** (1 - a) - 1) / (1 - a)

    def deriv(self, x):
        return self.scale * (1 + x) ** (-self.alpha)

    def deriv_inv(self, y):
        if y <= 0:
            return math.inf
        try:
            return (y / self.scale) ** (-1 / self.alpha) - 1
        except OverflowError:
            return math.inf

    @property
    def deriv_at_zero(self):
        return self.scale

    def params(self) -> dict:
        return {"name": self.name, "alpha": self.alpha, "scale": self.scale}


UTILITIES = {
    LogUtility.name: LogUtility,
    AlphaFairUtility.name: AlphaFairUtility,
}


def make_utility(name: str = "log", **params):
    try:
        cls = UTILITIES[name]
    except KeyError:
        raise UnknownUtilityError(f"unknown utility {name!r}; known: {sorted(UTILITIES)}") from None
    return cls(**params)


_REGISTERED = frozenset(UTILITIES.values())


def is_registered(utility) -> bool:
    return type(utility) in _REGISTERED

