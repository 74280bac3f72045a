"""Gamma function by the Lanczos approximation (g = 7, 9 terms)."""

import math

__all__ = ["gamma"]

_G = 7.0
_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def gamma(x: float) -> float:
    """Gamma(x) for real x that is not a non-positive integer."""
    x = float(x)
    if x <= 0 and x == math.floor(x):
        raise ValueError(f"gamma has a pole at {x}")
    if x < 0.5:
        # reflection keeps the series in its accurate half-plane
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    s = _COEFFS[0]
    for k, c in enumerate(_COEFFS[1:], start=1):
        s += c / (x + k)
    t = x + _G + 0.5
    return _SQRT_2PI * t ** (x + 0.5) * math.exp(-t) * s
