# This file is part of mbrec.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

__all__ = ["ParameterCheck", "GradientCheckReport", "finite_diff_check"]

import typing
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, VerificationError
from .tensor_autograd import Node, Parameter, Tape

LossFunction = typing.Callable[[Tape], Node]


@dataclass
class ParameterCheck:
    """Result of the finite-difference check of one parameter."""

    name: str
    max_error: float
    index: tuple[int, ...]
    analytic: float
    numeric: float
    passed: bool


@dataclass
class GradientCheckReport:
    """Result of the finite-difference check of all parameters."""

    checks: list[ParameterCheck] = field(default_factory=list)
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def max_error(self) -> float:
        return max((check.max_error for check in self.checks), default=0.0)

    def get_failed(self) -> list[str]:
        """Get the names of the failed parameters.

        Returns
        -------
        `list` [`str`]
            Names.
        """
        return [check.name for check in self.checks if not check.passed]


def _evaluate(loss_fn: LossFunction, frozen: list[np.ndarray] | None) -> float:
    return float(loss_fn(Tape(requires_grad=False, frozen=frozen)).value)


def finite_diff_check(
    loss_fn: LossFunction,
    params: typing.Iterable[Parameter],
    h: float = 1e-5,
    tol: float = 1e-4,
    abs_tol: float = 1e-6,
    freeze_stop_gradient: bool = True,
    gradient_hook: typing.Callable[[dict[str, np.ndarray]], None] | None = None,
) -> GradientCheckReport:
    """Compare the tape gradients with the central differences
    (f(θ+h) - f(θ-h)) / 2h of every parameter entry.

    The error of one entry is relative, |a - n| / max(|a|, |n|, abs_tol), so
    the magnitudes below abs_tol fall back to the absolute error scaled by
    abs_tol. The outputs of the stop-gradient nodes are held at their values
    of the unperturbed point, which is what the analytic gradient assumes.

    Parameters
    ----------
    loss_fn : `callable`
        Builds the scalar loss on the given tape from the current parameter
        values.
    params : `iterable` [`Parameter`]
        Parameters to check.
    h : `float`, optional
        Step of the central difference. (the default is 1e-5)
    tol : `float`, optional
        Tolerance of the error. (the default is 1e-4)
    abs_tol : `float`, optional
        Floor of the denominator of the relative error. (the default is 1e-6)
    freeze_stop_gradient : `bool`, optional
        Hold the stop-gradient outputs during the perturbations. (the default
        is True)
    gradient_hook : `callable` or None, optional
        Called with the analytic gradients by name before the comparison. It
        may modify them in place, which is used for the fault injection. (the
        default is None)

    Returns
    -------
    report : `GradientCheckReport`
        Maximum error per parameter.

    Raises
    ------
    `ConfigurationError`
        The step is not positive.
    `VerificationError`
        Two evaluations of the loss at the same point disagree.
    """

    if h <= 0.0:
        raise ConfigurationError(f"Finite-difference step should be > 0: {h}.")

    params = list(params)

    for parameter in params:
        parameter.zero_grad()

    tape = Tape()
    loss = loss_fn(tape)
    tape.backward(loss)

    analytic = {parameter.name: parameter.grad.copy() for parameter in params}
    if gradient_hook is not None:
        gradient_hook(analytic)

    frozen = (
        [value.copy() for value in tape.stopped] if freeze_stop_gradient else None
    )

    reference = float(loss.value)
    for _ in range(2):
        repeated = _evaluate(loss_fn, frozen)
        if repeated != reference:
            raise VerificationError(
                f"Loss function is not deterministic: {reference!r} != {repeated!r}."
            )

    report = GradientCheckReport(tol=tol)
    for parameter in params:
        grad = analytic[parameter.name]

        worst = ParameterCheck(parameter.name, 0.0, (), 0.0, 0.0, True)
        for index in np.ndindex(*parameter.value.shape):
            original = parameter.value[index]

            parameter.value[index] = original + h
            loss_plus = _evaluate(loss_fn, frozen)
            parameter.value[index] = original - h
            loss_minus = _evaluate(loss_fn, frozen)
            parameter.value[index] = original

            numeric = (loss_plus - loss_minus) / (2.0 * h)
            value_analytic = float(grad[index])

            error = abs(value_analytic - numeric) / max(
                abs(value_analytic), abs(numeric), abs_tol
            )

            if error > worst.max_error or worst.index == ():
                worst = ParameterCheck(
                    parameter.name, error, index, value_analytic, numeric, True
                )

        worst.passed = worst.max_error < tol
        report.checks.append(worst)

    return report
