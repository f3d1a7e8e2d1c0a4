"""Model parameters and state."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class ParameterError(ValueError):
    """Raised when model parameters violate a constraint.

    Attributes:
        constraint: short name of the violated constraint.
    """

    def __init__(self, constraint: str, message: str):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


@dataclass(frozen=True)
class ModelParams:
    """Raw OU/income parameters with derived quantities.

    The short rate follows ``dr = a (b_tilde - r) dt + sigma_tilde dW`` and
    capital grows as ``x + mu t``.  ``b``, ``sigma`` and ``q_mean`` are
    properties so they can never drift from the raw fields.

    Attributes:
        a: mean-reversion speed.
        sigma_tilde: OU volatility.
        b_tilde: long-term mean of the rate.
        mu: income rate.
    """

    a: float
    sigma_tilde: float
    b_tilde: float
    mu: float = 1.0
    _checked: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        for name in ("a", "sigma_tilde", "b_tilde", "mu"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(name, f"must be finite, got {value!r}")
        if not self._checked:
            return
        if self.a <= 0:
            raise ParameterError("a", f"mean-reversion speed must be > 0, got {self.a}")
        if self.sigma_tilde <= 0:
            raise ParameterError(
                "sigma_tilde", f"volatility must be > 0, got {self.sigma_tilde}"
            )
        if self.mu <= 0:
            raise ParameterError("mu", f"income rate must be > 0, got {self.mu}")
        floor = self.sigma_tilde**2 / (2 * self.a**2)
        if not self.b_tilde > floor:
            raise ParameterError(
                "b_tilde",
                f"need b_tilde > sigma_tilde^2/(2a^2) = {floor}, got {self.b_tilde}",
            )

    @property
    def b(self) -> float:
        """Effective discount rate ``b_tilde - sigma_tilde^2 / (2 a^2)``."""
        return self.b_tilde - self.sigma_tilde**2 / (2 * self.a**2)

    @property
    def sigma(self) -> float:
        """Scale ``sigma_tilde / sqrt(2a)`` of the parabolic cylinder argument."""
        return self.sigma_tilde / math.sqrt(2 * self.a)

    @property
    def q_mean(self) -> float:
        """Long-term mean of the rate under the discount-adjusted measure.

        Removing the factor ``exp(-(r - r_t)/a)`` from ``exp(-U_t)`` leaves an
        OU process with mean ``b_tilde - sigma_tilde^2 / a^2`` killed at the
        constant rate ``b``.
        """
        return self.b_tilde - self.sigma_tilde**2 / self.a**2

    @property
    def order(self) -> float:
        """Parabolic cylinder order ``b / a``."""
        return self.b / self.a

    def as_dict(self) -> dict:
        return {
            "a": self.a,
            "sigma_tilde": self.sigma_tilde,
            "b_tilde": self.b_tilde,
            "mu": self.mu,
            "b": self.b,
            "sigma": self.sigma,
        }


def derive_params(a: float, sigma_tilde: float, b_tilde: float, mu: float) -> ModelParams:
    """Validate raw parameters and return a :class:`ModelParams`."""
    return ModelParams(float(a), float(sigma_tilde), float(b_tilde), float(mu))


def unchecked_params(a: float, sigma_tilde: float, b_tilde: float, mu: float = 1.0) -> ModelParams:
    # Test-only: allows sigma_tilde = 0 for deterministic-limit checks.
    return ModelParams(float(a), float(sigma_tilde), float(b_tilde), float(mu), _checked=False)


@dataclass(frozen=True)
class State:
    """Current short rate ``r`` and capital ``x >= 0``."""

    r: float
    x: float

    def __post_init__(self):
        if not self.x >= 0:
            raise ParameterError("x", f"capital must be >= 0, got {self.x}")


EXAMPLE = ModelParams(a=1.0, sigma_tilde=2.0, b_tilde=4.0, mu=1.0)
