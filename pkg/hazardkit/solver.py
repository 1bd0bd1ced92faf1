"""Newton-Raphson iteration policy with step-halving."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .exceptions import NumericalError

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray, np.ndarray]]


@dataclass
class NewtonConfig:
    """
    Configuration for Newton-Raphson maximisation.

    Attributes:
        max_iterations: Maximum number of Newton steps (default: 25)
        max_halvings: Step-halvings tried before a step is abandoned (default: 10)
        loglik_tol: Relative change in the objective that counts as converged (default: 1e-9)
        score_tol: Max-norm of the gradient that counts as converged (default: 1e-8)
        divergence_bound: |coefficient| beyond which a fit is checked for monotone likelihood
    """

    max_iterations: int = 25
    max_halvings: int = 10
    loglik_tol: float = 1e-9
    score_tol: float = 1e-8
    divergence_bound: float = 15.0

    def __post_init__(self):
        """Validate configuration."""
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")
        if self.loglik_tol <= 0 or self.score_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.divergence_bound <= 0:
            raise ValueError("divergence_bound must be > 0")


@dataclass(frozen=True)
class NewtonResult:
    """Outcome of a Newton-Raphson run."""

    x: np.ndarray
    value: float
    gradient: np.ndarray
    information: np.ndarray
    iterations: int
    converged: bool
    history: Tuple[float, ...]


def newton_step(gradient: np.ndarray, information: np.ndarray) -> np.ndarray:
    """
    Solve ``information @ step = gradient``.

    Raises:
        NumericalError: If the information matrix is singular
    """
    try:
        return np.linalg.solve(information, gradient)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"information matrix is singular: {e}") from e


def maximize(
    objective: Objective,
    x0: np.ndarray,
    config: Optional[NewtonConfig] = None,
) -> NewtonResult:
    """
    Maximise a concave objective by Newton-Raphson with step-halving.

    A step is accepted only when it does not decrease the objective, so the
    recorded history is non-decreasing.

    Args:
        objective: Returns (value, gradient, information) at a point
        x0: Starting point
        config: Iteration policy (uses default if None)

    Returns:
        NewtonResult with the final point and convergence status
    """
    if config is None:
        config = NewtonConfig()

    x = np.asarray(x0, dtype=float).copy()
    value, gradient, information = objective(x)
    history = [value]

    if x.size == 0:
        return NewtonResult(x, value, gradient, information, 0, True, tuple(history))

    converged = bool(np.max(np.abs(gradient)) < config.score_tol)
    iterations = 0

    while not converged and iterations < config.max_iterations:
        iterations += 1
        step = full_step = newton_step(gradient, information)

        accepted = False
        for halving in range(config.max_halvings + 1):
            candidate = x + step
            c_value, c_gradient, c_information = objective(candidate)
            if np.isfinite(c_value) and c_value >= value:
                accepted = True
                break
            step = step / 2.0
            logger.debug("iteration %d: halving step (%d)", iterations, halving + 1)

        if not accepted:
            logger.debug(
                "iteration %d: no ascent after %d halvings", iterations, config.max_halvings
            )
            # at the optimum to rounding error
            converged = bool(np.max(np.abs(full_step)) < 1e-6)
            break

        change = abs(c_value - value) / (abs(value) + 1e-10)
        x, value, gradient, information = candidate, c_value, c_gradient, c_information
        history.append(value)
        logger.debug(
            "iteration %d: objective %.10g (relative change %.3g)", iterations, value, change
        )

        if change < config.loglik_tol or np.max(np.abs(gradient)) < config.score_tol:
            converged = True

    return NewtonResult(
        x=x,
        value=value,
        gradient=gradient,
        information=information,
        iterations=iterations,
        converged=converged,
        history=tuple(history),
    )
