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

__all__ = ["AdamState", "adam_step", "AdamOptimizer"]

import typing
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .tensor_autograd import Parameter


@dataclass
class AdamState:
    """First and second moments of the Adam optimizer by parameter name."""

    first_moments: dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: dict[str, np.ndarray] = field(default_factory=dict)
    step_index: int = 0


def adam_step(
    params: typing.Iterable[Parameter],
    state: AdamState,
    lr: float,
    betas: tuple[float, float],
    eps: float,
    step_index: int,
) -> None:
    """Apply one Adam update with the bias correction in place.

    Parameters
    ----------
    params : `iterable` [`Parameter`]
        Parameters with the populated gradients.
    state : `AdamState`
        Moments, updated in place.
    lr : `float`
        Learning rate.
    betas : `tuple`
        Decay rates of the first and second moments.
    eps : `float`
        Term added to the denominator.
    step_index : `int`
        1-based step index used by the bias correction.

    Raises
    ------
    `NumericError`
        Non-finite gradient. No parameter is updated.
    """

    params = list(params)

    # Check every gradient before touching any value
    for parameter in params:
        if not np.all(np.isfinite(parameter.grad)):
            raise NumericError(
                f"Non-finite gradient of parameter {parameter.name}.",
                name=parameter.name,
            )

    beta1, beta2 = betas
    correction1 = 1.0 - beta1**step_index
    correction2 = 1.0 - beta2**step_index

    for parameter in params:
        name = parameter.name
        grad = parameter.grad

        first = state.first_moments.get(name, np.zeros_like(grad))
        second = state.second_moments.get(name, np.zeros_like(grad))

        first = beta1 * first + (1.0 - beta1) * grad
        second = beta2 * second + (1.0 - beta2) * grad * grad

        state.first_moments[name] = first
        state.second_moments[name] = second

        update = lr * (first / correction1) / (np.sqrt(second / correction2) + eps)
        parameter.value = parameter.value - update

    state.step_index = step_index


class AdamOptimizer(object):
    """Adam optimizer over a fixed parameter list.

    Parameters
    ----------
    params : `iterable` [`Parameter`]
        Parameters to optimize.
    lr : `float`, optional
        Learning rate. (the default is 1e-3)
    betas : `tuple`, optional
        Decay rates of the moments. (the default is (0.9, 0.999))
    eps : `float`, optional
        Term added to the denominator. (the default is 1e-8)

    Attributes
    ----------
    params : `list` [`Parameter`]
        Parameters.
    state : `AdamState`
        Moments and the number of applied steps.
    """

    def __init__(
        self,
        params: typing.Iterable[Parameter],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps

        self.state = AdamState()

    def step(self) -> None:
        """Apply one update with the current gradients."""
        adam_step(
            self.params,
            self.state,
            self.lr,
            self.betas,
            self.eps,
            self.state.step_index + 1,
        )

    def get_moments(self) -> dict[str, np.ndarray]:
        """Get the moments in a flat mapping for serialization.

        Returns
        -------
        `dict`
            Keys are "m/<name>" and "v/<name>", plus "step_index".
        """

        moments: dict[str, np.ndarray] = {
            "step_index": np.array(self.state.step_index, dtype=np.int64)
        }
        for name, value in self.state.first_moments.items():
            moments[f"m/{name}"] = value
        for name, value in self.state.second_moments.items():
            moments[f"v/{name}"] = value

        return moments

    def set_moments(self, moments: dict[str, np.ndarray]) -> None:
        """Set the moments from the flat mapping of get_moments().

        Parameters
        ----------
        moments : `dict`
            Flat mapping.
        """

        self.state = AdamState(step_index=int(moments.get("step_index", 0)))
        for key, value in moments.items():
            if key.startswith("m/"):
                self.state.first_moments[key[2:]] = np.array(value, dtype=np.float64)
            elif key.startswith("v/"):
                self.state.second_moments[key[2:]] = np.array(value, dtype=np.float64)
