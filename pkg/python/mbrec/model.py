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

__all__ = ["InferenceState", "Model"]

import logging
from dataclasses import dataclass

import numpy as np

from .cogcn import BehaviorRepresentations, forward_all
from .config import Config
from .data_graph import BehaviorGraph
from .dfme import FittingCache, fitting_propagate, get_gate_names, predict
from .enums import GateSharing, HeadMode
from .tensor_autograd import Node, ParameterStore, Tape
from .utils import xavier_uniform


@dataclass
class InferenceState:
    """Frozen factors to score all items of the target task in closed form.

    The score of (u, v) is sum_j g_j(u, v) * <left_j[u], right_j[v]> / d, with
    the gate logits split into the user part and the item part.

    Attributes
    ----------
    left_factors : `list` [`numpy.ndarray`]
        M x d user factor of each expert.
    right_factors : `list` [`numpy.ndarray`]
        N x d item factor of each expert.
    gate_user : `numpy.ndarray` or None
        M x K user part of the gate logits (bias included). None for a single
        expert without gate.
    gate_item : `numpy.ndarray` or None
        N x K item part of the gate logits.
    dim : `int`
        Embedding size, d.
    """

    left_factors: list[np.ndarray]
    right_factors: list[np.ndarray]
    gate_user: np.ndarray | None
    gate_item: np.ndarray | None
    dim: int

    @property
    def num_items(self) -> int:
        return self.right_factors[0].shape[0]

    def score(self, users: np.ndarray) -> np.ndarray:
        """Score all items of the users.

        Parameters
        ----------
        users : `numpy.ndarray`
            User ids.

        Returns
        -------
        `numpy.ndarray`
            len(users) x N scores.
        """

        users = np.asarray(users, dtype=np.int64)

        dots = [
            (left[users] @ right.T) / self.dim
            for left, right in zip(self.left_factors, self.right_factors)
        ]

        if self.gate_user is None or self.gate_item is None:
            return dots[0]

        logits = self.gate_user[users][:, None, :] + self.gate_item[None, :, :]
        logits = logits - logits.max(axis=2, keepdims=True)
        weights = np.exp(logits)
        weights /= weights.sum(axis=2, keepdims=True)

        scores = np.zeros((len(users), self.num_items))
        for j, dot in enumerate(dots):
            scores += weights[:, :, j] * dot

        return scores


class Model(object):
    """Fusion network and prediction head with their parameters.

    Parameters
    ----------
    config : `Config`
        Configuration.
    num_users : `int`
        Number of users.
    num_items : `int`
        Number of items.
    seed : `int` or None, optional
        Seed of the initialization. If None, config.seed is used. (the
        default is None)
    log : `logging.Logger` or None, optional
        A logger. If None, a logger will be instantiated. (the default is
        None)

    Attributes
    ----------
    config : `Config`
        Configuration.
    num_users : `int`
        Number of users.
    num_items : `int`
        Number of items.
    params : `ParameterStore`
        Trainable parameters.
    log : `logging.Logger`
        A logger.
    """

    def __init__(
        self,
        config: Config,
        num_users: int,
        num_items: int,
        seed: int | None = None,
        log: logging.Logger | None = None,
    ) -> None:
        self.config = config
        self.num_users = num_users
        self.num_items = num_items

        if log is None:
            self.log = logging.getLogger(type(self).__name__)
        else:
            self.log = log.getChild(type(self).__name__)

        self.params = ParameterStore()
        self._initialize(config.seed if seed is None else seed)

    def _initialize(self, seed: int) -> None:
        """Initialize the parameters with the Xavier uniform distribution.

        Parameters
        ----------
        seed : `int`
            Random seed.
        """

        rng = np.random.default_rng(seed)

        dim = self.config.dim
        num_behaviors = self.config.num_behaviors

        self.params.add(
            "user_embedding", xavier_uniform(rng, (self.num_users, dim))
        )
        self.params.add(
            "item_embedding", xavier_uniform(rng, (self.num_items, dim))
        )

        if self.config.head_mode == HeadMode.Bilinear:
            for k in range(num_behaviors):
                self.params.add(f"relation_{k}", np.ones((1, dim)), init="ones")

        else:
            if self.config.fitting_on and num_behaviors > 1:
                for k in range(num_behaviors):
                    self.params.add(
                        f"fitting_relation_{k}", xavier_uniform(rng, (1, dim))
                    )
                for layer in range(1, self.config.layers + 1):
                    self.params.add(
                        f"fitting_transform_{layer}", xavier_uniform(rng, (dim, dim))
                    )

            tasks = (
                [0]
                if self.config.gate_sharing == GateSharing.Shared
                else list(range(num_behaviors))
            )
            for k in tasks:
                name_weight, name_bias = get_gate_names(k, self.config.gate_sharing)
                self.params.add(
                    name_weight, xavier_uniform(rng, (num_behaviors, 2 * dim))
                )
                self.params.add(name_bias, np.zeros((1, num_behaviors)), init="zeros")

        self.log.debug(
            f"Initialized {len(self.params)} parameters with the seed {seed}."
        )

    def forward(
        self, graphs: BehaviorGraph, tape: Tape | None = None
    ) -> BehaviorRepresentations:
        """Run the fusion network.

        Parameters
        ----------
        graphs : `BehaviorGraph`
            Operators.
        tape : `Tape` or None, optional
            Tape to record on. (the default is None)

        Returns
        -------
        `BehaviorRepresentations`
            Representations.
        """
        return forward_all(self.params, graphs, self.config, tape=tape)

    def predict(
        self,
        reps: BehaviorRepresentations,
        graphs: BehaviorGraph,
        k: int,
        users: np.ndarray,
        items: np.ndarray,
        cache: FittingCache | None = None,
        terms: list[Node] | None = None,
    ) -> Node:
        """Predict the pairs of the task.

        Parameters
        ----------
        reps : `BehaviorRepresentations`
            Representations.
        graphs : `BehaviorGraph`
            Operators.
        k : `int`
            Task index.
        users : `numpy.ndarray`
            User ids.
        items : `numpy.ndarray`
            Item ids.
        cache : `dict` or None, optional
            Fitting propagation cache. (the default is None)
        terms : `list` or None, optional
            Collector of the weighted terms. (the default is None)

        Returns
        -------
        `Node`
            Prediction of each pair.
        """
        return predict(
            reps,
            k,
            users,
            items,
            graphs,
            self.params,
            self.config,
            cache=cache,
            terms=terms,
        )

    def infer(self, graphs: BehaviorGraph) -> InferenceState:
        """Freeze the factors to score the target task.

        Parameters
        ----------
        graphs : `BehaviorGraph`
            Operators.

        Returns
        -------
        `InferenceState`
            Frozen factors.
        """

        tape = Tape(requires_grad=False)
        reps = self.forward(graphs, tape=tape)

        target = self.config.target_index
        user_target = reps.get_user(target).value
        item_target = reps.get_item(target).value

        if self.config.head_mode == HeadMode.Bilinear:
            relation = self.params[f"relation_{target}"].value
            return InferenceState(
                [user_target * relation], [item_target], None, None, self.config.dim
            )

        left_factors = list()
        right_factors = list()
        for j in range(self.config.num_behaviors):
            if j == target or not self.config.fitting_on:
                left_factors.append(reps.get_user(j).value)
                right_factors.append(reps.get_item(j).value)
            else:
                joint = fitting_propagate(
                    reps, j, target, graphs, self.params, self.config
                ).value
                left_factors.append(joint[: self.num_users])
                right_factors.append(joint[self.num_users :])

        name_weight, name_bias = get_gate_names(target, self.config.gate_sharing)
        weight = self.params[name_weight].value
        bias = self.params[name_bias].value

        dim = self.config.dim
        return InferenceState(
            left_factors,
            right_factors,
            user_target @ weight[:, :dim].T + bias,
            item_target @ weight[:, dim:].T,
            dim,
        )
