"""Zero-noise extrapolation of expectation values measured at scale factors λ."""
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from utils.exceptions import ExtrapolationError

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
EXTRAPOLATION_METHODS = ("linear", "richardson", "poly<d>")

_POLY_METHOD = re.compile(r"^poly(\d+)$")


@dataclass(frozen=True)
class ExtrapolationPoint:
    scale: float
    value: float
    std_err: float = 0.0


@dataclass(frozen=True)
class ExtrapolationInput:
    """At least two (λ, y, std_err) points with every λ >= 1 and not all λ equal."""
    points: tuple[ExtrapolationPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 2:
            raise ExtrapolationError(f"need at least 2 points, got {len(self.points)}")
        if len({p.scale for p in self.points}) < 2:
            raise ExtrapolationError("all scale factors are equal")
        for p in self.points:
            if not p.scale >= 1:
                raise ExtrapolationError(f"scale factors must be at least 1, got λ={p.scale}")
            if p.std_err < 0:
                raise ExtrapolationError(f"negative std_err at λ={p.scale}")

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def scales(self) -> np.ndarray:
        return np.array([p.scale for p in self.points], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points], dtype=float)

    @classmethod
    def from_pairs(cls, scales: Iterable[float], values: Iterable[float]) -> "ExtrapolationInput":
        return cls(tuple(ExtrapolationPoint(float(s), float(v)) for s, v in zip(scales, values)))

    @classmethod
    def from_estimates(cls, estimates: Iterable) -> "ExtrapolationInput":
        """Builds the input from ExpectationEstimate-like objects (scale, mean, std_err)."""
        return cls(tuple(ExtrapolationPoint(e.scale, e.mean, e.std_err) for e in estimates))


@dataclass(frozen=True)
class ExtrapolationFit:
    """Fitted model; ``intercept`` is the zero-noise estimate Ê(0)."""
    method: str
    intercept: float
    coefficients: tuple[float, ...]
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    def evaluate(self, scale: float) -> float:
        return float(np.polynomial.polynomial.polyval(scale, self.coefficients))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "intercept": self.intercept,
            "coefficients": list(self.coefficients),
            "diagnostics": dict(self.diagnostics),
        }


def linear_fit(data: ExtrapolationInput) -> ExtrapolationFit:
    """
    Unweighted ordinary least squares line through the points.

    The intercept is mean(y) - slope * mean(λ), with the slope from the
    centred sums of products.

    Raises:
        ExtrapolationError: If all scale factors are equal.
    """
    x, y = data.scales, data.values
    x_mean, y_mean = float(x.mean()), float(y.mean())
    s_xy = float(np.sum((x - x_mean) * (y - y_mean)))
    s_xx = float(np.sum((x - x_mean) ** 2))
    if s_xx == 0:
        raise ExtrapolationError("degenerate input: all scale factors are equal")
    slope = s_xy / s_xx
    intercept = y_mean - slope * x_mean
    residuals = y - (intercept + slope * x)
    return ExtrapolationFit(
        method="linear",
        intercept=intercept,
        coefficients=(intercept, slope),
        diagnostics={
            "rss": float(residuals @ residuals),
            "lambda_mean": x_mean,
            "y_mean": y_mean,
            "s_lambda_y": s_xy,
            "s_lambda_lambda": s_xx,
        },
    )


def polynomial_fit(data: ExtrapolationInput, degree: int) -> ExtrapolationFit:
    """
    Least-squares polynomial c_0 + c_1 λ + ... + c_d λ^d; intercept = c_0.

    Raises:
        ExtrapolationError: If degree < 1, m <= degree, or the Vandermonde
            system is ill-conditioned (condition number above 1e12).
    """
    if degree < 1:
        raise ExtrapolationError(f"degree must be at least 1, got {degree}")
    if data.m <= degree:
        raise ExtrapolationError(f"degree {degree} needs at least {degree + 1} points, got {data.m}")
    x, y = data.scales, data.values
    vander = np.vander(x, degree + 1, increasing=True)
    condition = float(np.linalg.cond(vander))
    if not condition <= MAX_CONDITION:
        raise ExtrapolationError(f"ill-conditioned degree-{degree} fit (condition {condition:.3g})")
    try:
        coefficients, *_ = np.linalg.lstsq(vander, y, rcond=None)
    except np.linalg.LinAlgError as e:
        raise ExtrapolationError(f"degree-{degree} fit failed: {e}") from e
    residuals = y - vander @ coefficients
    return ExtrapolationFit(
        method=f"poly{degree}",
        intercept=float(coefficients[0]),
        coefficients=tuple(float(c) for c in coefficients),
        diagnostics={"rss": float(residuals @ residuals), "condition": condition},
    )


def richardson(data: ExtrapolationInput) -> ExtrapolationFit:
    """
    Evaluates the interpolating polynomial through all points at λ = 0:
    Ê(0) = Σ_j y_j Π_{k≠j} λ_k / (λ_k - λ_j).

    Raises:
        ExtrapolationError: On duplicate scale factors or a singular
            interpolation system.
    """
    x, y = data.scales, data.values
    if len(set(x.tolist())) != len(x):
        raise ExtrapolationError(f"richardson needs distinct scale factors, got {x.tolist()}")
    intercept = 0.0
    for j in range(len(x)):
        others = np.delete(x, j)
        intercept += y[j] * float(np.prod(others / (others - x[j])))
    try:
        coefficients = np.linalg.solve(np.vander(x, len(x), increasing=True), y)
    except np.linalg.LinAlgError as e:
        raise ExtrapolationError(f"richardson system is singular: {e}") from e
    return ExtrapolationFit(
        method="richardson",
        intercept=float(intercept),
        coefficients=tuple(float(c) for c in coefficients),
        diagnostics={"points": float(len(x))},
    )


def extrapolate(data: ExtrapolationInput, method: str) -> ExtrapolationFit:
    """
    Dispatches on 'linear', 'richardson' or 'poly<d>' (e.g. 'poly2').

    Raises:
        ExtrapolationError: On an unknown method or a failed fit.
    """
    if method == "linear":
        return linear_fit(data)
    if method == "richardson":
        return richardson(data)
    match = _POLY_METHOD.match(method)
    if match:
        return polynomial_fit(data, int(match.group(1)))
    raise ExtrapolationError(
        f"unknown extrapolation '{method}'; expected one of {', '.join(EXTRAPOLATION_METHODS)}"
    )
