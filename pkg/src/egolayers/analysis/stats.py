"""Order-independent reductions: paired moments for correlation/OLS, means with CIs.

Sums go through math.fsum, which is correctly rounded, so a reduction gives the
same result however the observations were split between workers.
"""

import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from egolayers.errors import InsufficientDataError, UndefinedCorrelationError

Z95 = float(norm.ppf(0.975))


@dataclass(frozen=True)
class PairMoments:
    """Streaming sums (n, Σx, Σy, Σx², Σy², Σxy) of paired observations."""

    n: int = 0
    sx: float = 0.0
    sy: float = 0.0
    sxx: float = 0.0
    syy: float = 0.0
    sxy: float = 0.0

    @classmethod
    def from_arrays(cls, x, y) -> "PairMoments":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape:
            raise ValueError(f"paired arrays differ in shape: {x.shape} vs {y.shape}")
        return cls(
            n=int(x.size),
            sx=math.fsum(x),
            sy=math.fsum(y),
            sxx=math.fsum(x * x),
            syy=math.fsum(y * y),
            sxy=math.fsum(x * y),
        )

    def __add__(self, other: "PairMoments") -> "PairMoments":
        if not isinstance(other, PairMoments):
            return NotImplemented
        return PairMoments(
            n=self.n + other.n,
            sx=math.fsum((self.sx, other.sx)),
            sy=math.fsum((self.sy, other.sy)),
            sxx=math.fsum((self.sxx, other.sxx)),
            syy=math.fsum((self.syy, other.syy)),
            sxy=math.fsum((self.sxy, other.sxy)),
        )

    # Centred sums of squares and products

    def _dev_sq(self, total: float, squares: float) -> float:
        if self.n == 0:
            return 0.0
        value = squares - total * total / self.n
        # cancellation noise of a constant variable is zero variance
        return value if value > 1e-13 * squares else 0.0

    def dev_sq_x(self) -> float:
        return self._dev_sq(self.sx, self.sxx)

    def dev_sq_y(self) -> float:
        return self._dev_sq(self.sy, self.syy)

    def dev_prod_xy(self) -> float:
        return self.sxy - self.sx * self.sy / self.n if self.n > 0 else 0.0

    def slope(self) -> float:
        devsqx = self.dev_sq_x()
        if devsqx <= 0:
            raise UndefinedCorrelationError("x has zero variance")
        return self.dev_prod_xy() / devsqx

    def intercept(self) -> float:
        return (self.sy - self.slope() * self.sx) / self.n

    def pearson(self) -> float:
        devsqx = self.dev_sq_x()
        devsqy = self.dev_sq_y()
        if devsqx <= 0 or devsqy <= 0:
            raise UndefinedCorrelationError("correlation undefined for a zero-variance variable")
        r = self.dev_prod_xy() / math.sqrt(devsqx * devsqy)
        return min(1.0, max(-1.0, r))


def pearson(x, y) -> float:
    """Pearson correlation of two paired samples (needs n >= 3)."""
    moments = PairMoments.from_arrays(x, y)
    if moments.n < 3:
        raise InsufficientDataError(f"correlation needs at least 3 observations, got {moments.n}")
    return moments.pearson()


@dataclass(frozen=True)
class MeanEstimate:
    """Sample mean with the half-width of its 95% normal-approximation interval."""

    mean: float
    ci95: float
    n: int


def mean_ci95(values: Iterable[float]) -> MeanEstimate:
    values = [float(v) for v in values]
    n = len(values)
    if n == 0:
        return MeanEstimate(math.nan, math.nan, 0)
    mean = math.fsum(values) / n
    if n == 1:
        return MeanEstimate(mean, math.nan, 1)
    variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return MeanEstimate(mean, Z95 * math.sqrt(variance / n), n)
