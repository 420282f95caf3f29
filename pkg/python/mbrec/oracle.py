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

__all__ = [
    "DenseFixture",
    "DenseTrace",
    "DenseNetwork",
    "load_fixture",
    "get_fixture_config",
    "get_fixture_interactions",
    "get_fixture_batch",
    "make_random_fixture",
    "dense_forward",
    "numerical_gradient",
    "reference_metrics",
]

import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config, make_config
from .data_graph import InteractionSet
from .enums import (
    Backbone,
    BprReduction,
    DegreeMode,
    GateSharing,
    HeadMode,
    InMode,
    PostMode,
    PreMode,
    SelfLoopMode,
    Similarity,
    StopGradMode,
)
from .errors import ConfigurationError
from .model import Model
from .training import TripleBatch
from .utils import get_data_dir, read_yaml_file

# Key of one recorded term: (task, users, items, expert)
TermKey = tuple[int, bytes, bytes, int]


@dataclass
class DenseFixture:
    """Tiny instance evaluated with dense arithmetic.

    Attributes
    ----------
    num_users : `int`
        Number of users, M.
    num_items : `int`
        Number of items, N.
    behaviors : `list` [`str`]
        Ordered behavior names.
    interactions : `list` [`numpy.ndarray`]
        M x N 0/1 interaction matrix of each behavior.
    params : `dict` [`str`, `numpy.ndarray`]
        Parameter values by name.
    triples : `list` [`numpy.ndarray`]
        (u, s, t) rows of each behavior used by the losses.
    config : `dict`
        Configuration values of the fixture.
    """

    num_users: int
    num_items: int
    behaviors: list[str]
    interactions: list[np.ndarray]
    params: dict[str, np.ndarray]
    triples: list[np.ndarray]
    config: dict = field(default_factory=dict)


@dataclass
class DenseTrace:
    """Intermediates of the dense forward pass. The experts, gates and
    predictions are evaluated on all (u, v) pairs in the row-major order."""

    layers: list[list[np.ndarray]]
    users: list[np.ndarray]
    items: list[np.ndarray]
    fitting: dict[tuple[int, int], np.ndarray]
    experts: list[list[np.ndarray]]
    gates: list[np.ndarray | None]
    predictions: list[np.ndarray]


def load_fixture(filepath: Path | str | None = None) -> DenseFixture:
    """Load the fixture file.

    Parameters
    ----------
    filepath : `pathlib.Path`, `str`, or None, optional
        Yaml file. If None, the bundled 3-user, 3-item, 2-behavior fixture is
        used. (the default is None)

    Returns
    -------
    `DenseFixture`
        Fixture.

    Raises
    ------
    `ConfigurationError`
        Inconsistent shapes.
    """

    if filepath is None:
        filepath = get_data_dir() / "fixture_gradcheck.yaml"

    content = read_yaml_file(filepath)

    behaviors = [str(name) for name in content["behaviors"]]
    num_users = int(content["num_users"])
    num_items = int(content["num_items"])

    interactions = list()
    triples = list()
    for name in behaviors:
        matrix = np.array(content["interactions"][name], dtype=np.float64)
        if matrix.shape != (num_users, num_items):
            raise ConfigurationError(
                f"Interactions of {name} have the shape {matrix.shape}, "
                f"expect {(num_users, num_items)}."
            )
        interactions.append(matrix)

        rows = content.get("triples", dict()).get(name, list())
        triples.append(np.array(rows, dtype=np.int64).reshape(-1, 3))

    params = {
        name: np.array(value, dtype=np.float64)
        for name, value in content["params"].items()
    }

    return DenseFixture(
        num_users=num_users,
        num_items=num_items,
        behaviors=behaviors,
        interactions=interactions,
        params=params,
        triples=triples,
        config=dict(content.get("config", dict())),
    )


def get_fixture_config(fixture: DenseFixture, **overrides: typing.Any) -> Config:
    """Get the configuration of the fixture.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.
    **overrides : `dict`
        Values applied after the fixture configuration.

    Returns
    -------
    `Config`
        Configuration.
    """

    content = dict(fixture.config)
    content["behaviors"] = list(fixture.behaviors)

    return make_config(content, **overrides)


def get_fixture_interactions(fixture: DenseFixture) -> InteractionSet:
    """Get the interaction set of the fixture. The edges are in the row-major
    order of the interaction matrices.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.

    Returns
    -------
    `InteractionSet`
        Interactions without timestamps.
    """

    edges = list()
    for matrix in fixture.interactions:
        users, items = np.nonzero(matrix)
        edges.append(np.stack([users, items], axis=1).astype(np.int64).reshape(-1, 2))

    return InteractionSet(
        num_users=fixture.num_users,
        num_items=fixture.num_items,
        behaviors=list(fixture.behaviors),
        edges=edges,
        timestamps=[np.full(len(edge), np.nan) for edge in edges],
        user_ids=[str(idx) for idx in range(fixture.num_users)],
        item_ids=[str(idx) for idx in range(fixture.num_items)],
    )


def get_fixture_batch(fixture: DenseFixture) -> TripleBatch:
    """Get the fixed triples of the fixture.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.

    Returns
    -------
    `TripleBatch`
        Triples.
    """

    return TripleBatch(
        users=[triple[:, 0].copy() for triple in fixture.triples],
        positives=[triple[:, 1].copy() for triple in fixture.triples],
        negatives=[triple[:, 2].copy() for triple in fixture.triples],
    )


def make_random_fixture(
    config: Config,
    num_users: int,
    num_items: int,
    seed: int,
    density: float = 0.4,
    num_triples: int = 3,
) -> DenseFixture:
    """Make a random fixture for the configuration.

    Parameters
    ----------
    config : `Config`
        Configuration. Its behaviors define K.
    num_users : `int`
        Number of users.
    num_items : `int`
        Number of items.
    seed : `int`
        Random seed.
    density : `float`, optional
        Probability of an interaction. (the default is 0.4)
    num_triples : `int`, optional
        Maximum number of triples per behavior. (the default is 3)

    Returns
    -------
    `DenseFixture`
        Fixture with normal random parameters.
    """

    rng = np.random.default_rng(seed)

    interactions = list()
    triples = list()
    for _ in config.behaviors:
        matrix = (rng.random((num_users, num_items)) < density).astype(np.float64)
        interactions.append(matrix)

        rows = list()
        for user, item in zip(*np.nonzero(matrix)):
            negatives = np.flatnonzero(matrix[user] == 0)
            if len(negatives) != 0 and len(rows) < num_triples:
                rows.append([user, item, int(rng.choice(negatives))])
        triples.append(np.array(rows, dtype=np.int64).reshape(-1, 3))

    # Names and shapes only
    shapes = Model(config, num_users, num_items, seed=seed).params
    params = {
        parameter.name: 0.5 * rng.standard_normal(parameter.shape)
        for parameter in shapes
    }

    content = config.to_dict()
    content.pop("behaviors")

    return DenseFixture(
        num_users=num_users,
        num_items=num_items,
        behaviors=list(config.behaviors),
        interactions=interactions,
        params=params,
        triples=triples,
        config=content,
    )


class DenseNetwork(object):
    """Dense re-implementation of the fusion network, the head and the
    losses.

    The graph products accumulate each output row left to right over the
    nonzero columns, which is the summation order of the compressed sparse
    row product.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.
    config : `Config`
        Configuration.
    params : `dict` or None, optional
        Parameter values. If None, the fixture values are used. (the default
        is None)

    Attributes
    ----------
    fixture : `DenseFixture`
        Fixture.
    config : `Config`
        Configuration.
    params : `dict` [`str`, `numpy.ndarray`]
        Parameter values.
    adjacency : `list` [`numpy.ndarray`]
        Joint adjacency of each behavior.
    propagation : `list` [`numpy.ndarray`]
        Row-normalized adjacency of each behavior.
    layers : `list` [`list` [`numpy.ndarray`]]
        Joint layers of each behavior.
    users : `list` [`numpy.ndarray`]
        Fused user matrices.
    items : `list` [`numpy.ndarray`]
        Fused item matrices.
    fitting : `dict`
        Propagated fitting inputs by (k, k_other).
    terms : `dict`
        Weighted terms recorded by predict().
    """

    def __init__(
        self,
        fixture: DenseFixture,
        config: Config,
        params: dict[str, np.ndarray] | None = None,
    ) -> None:
        self.fixture = fixture
        self.config = config
        self.params = fixture.params if params is None else params

        num_users = fixture.num_users
        num_nodes = num_users + fixture.num_items

        self.adjacency: list[np.ndarray] = list()
        for matrix in fixture.interactions:
            adjacency = np.zeros((num_nodes, num_nodes))
            adjacency[:num_users, num_users:] = matrix
            adjacency[num_users:, :num_users] = matrix.T
            self.adjacency.append(adjacency)

        if config.degree_mode == DegreeMode.Joint:
            joint = np.zeros(num_nodes)
            for adjacency in self.adjacency:
                joint = joint + adjacency.sum(axis=1)
            degrees = [joint] * len(self.adjacency)
        else:
            degrees = [adjacency.sum(axis=1) for adjacency in self.adjacency]

        self.propagation: list[np.ndarray] = list()
        for adjacency, degree in zip(self.adjacency, degrees):
            normalized = np.zeros_like(adjacency)
            for row in range(num_nodes):
                if degree[row] > 0:
                    normalized[row] = adjacency[row] * (1.0 / degree[row])
            self.propagation.append(normalized)

        self.layers: list[list[np.ndarray]] = list()
        self.users: list[np.ndarray] = list()
        self.items: list[np.ndarray] = list()
        self.fitting: dict[tuple[int, int], np.ndarray] = dict()
        self.terms: dict[TermKey, np.ndarray] = dict()

        self._run_fusion()

    @staticmethod
    def product(matrix: np.ndarray, dense: np.ndarray) -> np.ndarray:
        """Row-by-row product accumulated over the nonzero columns in the
        ascending order.

        Parameters
        ----------
        matrix : `numpy.ndarray`
            Dense operator.
        dense : `numpy.ndarray`
            Dense input.

        Returns
        -------
        `numpy.ndarray`
            Product.
        """

        result = np.zeros((matrix.shape[0], dense.shape[1]))
        for row in range(matrix.shape[0]):
            accumulated = np.zeros(dense.shape[1])
            for column in range(matrix.shape[1]):
                if matrix[row, column] != 0.0:
                    accumulated = accumulated + matrix[row, column] * dense[column]
            result[row] = accumulated

        return result

    @staticmethod
    def _add_all(values: list[np.ndarray]) -> np.ndarray:
        total = values[0]
        for value in values[1:]:
            total = total + value
        return total

    def _get_relations(self, k: int) -> list[int]:
        num_behaviors = len(self.propagation)
        if self.config.in_mode == InMode.Full:
            return list(range(k + 1))
        if self.config.in_mode == InMode.Strict:
            return [k]
        return list(range(num_behaviors))

    def _run_fusion(self) -> None:
        config = self.config
        num_users = self.fixture.num_users
        initial = np.concatenate(
            [self.params["user_embedding"], self.params["item_embedding"]], axis=0
        )

        last_layers = list()
        seed = initial
        for k in range(len(self.propagation)):
            layers = [initial if config.backbone == Backbone.Lightgcn else seed]

            for _ in range(config.layers):
                current = layers[-1]
                if config.backbone == Backbone.Lightgcn:
                    layers.append(self.product(self.propagation[k], current))
                    continue

                relations = self._get_relations(k)
                if config.self_loop_mode == SelfLoopMode.PerRelation:
                    layers.append(
                        self._add_all(
                            [
                                self.product(self.propagation[relation], current)
                                + current
                                for relation in relations
                            ]
                        )
                    )
                else:
                    layers.append(
                        self._add_all(
                            [
                                self.product(self.propagation[relation], current)
                                for relation in relations
                            ]
                        )
                        + current
                    )

            fused = self._add_all(layers)
            if config.backbone == Backbone.Lightgcn:
                fused = fused * (1.0 / len(layers))

            self.layers.append(layers)
            self.users.append(fused[:num_users])
            self.items.append(fused[num_users:])

            last_layers.append(layers[-1])
            if config.pre_mode == PreMode.Full:
                seed = self._add_all(last_layers) + initial
            elif config.pre_mode == PreMode.Strict:
                seed = last_layers[-1] + initial
            else:
                seed = initial

        if config.post_mode == PostMode.Fused and len(self.users) > 1:
            scale = 1.0 / len(self.users)
            self.users = [self._add_all(self.users) * scale]
            self.items = [self._add_all(self.items) * scale]

    def get_user(self, k: int) -> np.ndarray:
        return self.users[0] if len(self.users) == 1 else self.users[k]

    def get_item(self, k: int) -> np.ndarray:
        return self.items[0] if len(self.items) == 1 else self.items[k]

    def get_fitting(self, k: int, k_other: int) -> np.ndarray:
        """Propagated fitting input of the behavior pair.

        Parameters
        ----------
        k : `int`
            Current behavior.
        k_other : `int`
            Other behavior.

        Returns
        -------
        `numpy.ndarray`
            Joint (M+N) x d matrix.
        """

        key = (k, k_other)
        if key not in self.fitting:
            config = self.config
            joint_k = np.concatenate([self.get_user(k), self.get_item(k)], axis=0)
            joint_other = np.concatenate(
                [self.get_user(k_other), self.get_item(k_other)], axis=0
            )

            current = (joint_k * config.alpha + joint_other * config.beta) * 0.5
            relation = self.params[f"fitting_relation_{k_other}"]
            for layer in range(1, config.layers + 1):
                relation = relation @ self.params[f"fitting_transform_{layer}"].T
                weighted = current * relation
                current = self.product(self.propagation[k_other], weighted) + weighted

            self.fitting[key] = current

        return self.fitting[key]

    def get_experts(
        self, k: int, users: np.ndarray, items: np.ndarray
    ) -> list[np.ndarray]:
        """Experts of the task on the pairs.

        Parameters
        ----------
        k : `int`
            Task index.
        users : `numpy.ndarray`
            User ids.
        items : `numpy.ndarray`
            Item ids.

        Returns
        -------
        `list` [`numpy.ndarray`]
            B x d expert of each behavior j.
        """

        num_users = self.fixture.num_users

        experts = list()
        for j in range(self.config.num_behaviors):
            if j == k or not self.config.fitting_on:
                experts.append(self.get_user(j)[users] * self.get_item(j)[items])
            else:
                joint = self.get_fitting(j, k)
                experts.append(joint[users] * joint[items + num_users])

        return experts

    def get_gates(self, k: int, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        """Gate weights of the task on the pairs.

        Parameters
        ----------
        k : `int`
            Task index.
        users : `numpy.ndarray`
            User ids.
        items : `numpy.ndarray`
            Item ids.

        Returns
        -------
        `numpy.ndarray`
            B x K weights.
        """

        if self.config.gate_sharing == GateSharing.Shared:
            weight = self.params["gate_weight"]
            bias = self.params["gate_bias"]
        else:
            weight = self.params[f"gate_weight_{k}"]
            bias = self.params[f"gate_bias_{k}"]

        features = np.concatenate(
            [self.get_user(k)[users], self.get_item(k)[items]], axis=1
        )
        logits = features @ weight.T + bias
        exp = np.exp(logits - logits.max(axis=1, keepdims=True))

        return exp / exp.sum(axis=1, keepdims=True)

    def _is_stopped(self, j: int, k: int) -> bool:
        mode = self.config.stop_grad_mode
        target = self.config.num_behaviors - 1
        if mode == StopGradMode.TargetOnly:
            return k != target and j == target
        if mode == StopGradMode.All:
            return j != k
        return False

    def predict(
        self,
        k: int,
        users: np.ndarray,
        items: np.ndarray,
        frozen: dict[TermKey, np.ndarray] | None = None,
    ) -> np.ndarray:
        """Predictions of the task on the pairs.

        Parameters
        ----------
        k : `int`
            Task index.
        users : `numpy.ndarray`
            User ids.
        items : `numpy.ndarray`
            Item ids.
        frozen : `dict` or None, optional
            Terms recorded by another network. The stop-gradient terms are
            taken from it. (the default is None)

        Returns
        -------
        `numpy.ndarray`
            Prediction of each pair.
        """

        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)

        if self.config.head_mode == HeadMode.Bilinear:
            product = (
                self.get_user(k)[users]
                * self.get_item(k)[items]
                * self.params[f"relation_{k}"]
            )
            return product.sum(axis=1) / self.config.dim

        experts = self.get_experts(k, users, items)
        gates = self.get_gates(k, users, items)

        summed = np.zeros_like(experts[0])
        for j, expert in enumerate(experts):
            key = (k, users.tobytes(), items.tobytes(), j)
            term = expert * gates[:, j : j + 1]
            self.terms[key] = term

            if frozen is not None and self._is_stopped(j, k):
                term = frozen[key]

            summed = summed + term

        return summed.sum(axis=1) / self.config.dim

    def _contrastive_side(self, anchor: np.ndarray, positive: np.ndarray) -> float:
        if self.config.similarity == Similarity.Cosine:
            anchor = anchor / np.maximum(
                np.linalg.norm(anchor, axis=1, keepdims=True), 1e-12
            )
            positive = positive / np.maximum(
                np.linalg.norm(positive, axis=1, keepdims=True), 1e-12
            )

        total = 0.0
        for row in range(anchor.shape[0]):
            scores = positive @ anchor[row] / self.config.tau
            peak = scores.max()
            total += (
                math.log(np.exp(scores - peak).sum())
                + peak
                - float(anchor[row] @ positive[row]) / self.config.tau
            )

        return total / anchor.shape[0]

    def contrastive(self, k: int) -> float:
        """Contrastive loss of the auxiliary behavior over all users and
        items.

        Parameters
        ----------
        k : `int`
            Auxiliary behavior.

        Returns
        -------
        `float`
            Loss.
        """

        target = self.config.num_behaviors - 1
        return self._contrastive_side(
            self.get_user(target), self.get_user(k)
        ) + self._contrastive_side(self.get_item(target), self.get_item(k))

    def losses(
        self, frozen: dict[TermKey, np.ndarray] | None = None
    ) -> dict[str, float]:
        """Loss components on the fixture triples.

        Parameters
        ----------
        frozen : `dict` or None, optional
            Recorded terms for the stop-gradient replay. (the default is None)

        Returns
        -------
        `dict`
            "bpr_<k>" (unweighted), "bpr", "cl", "reg" and "total".
        """

        config = self.config
        weights = config.get_loss_weights()

        values: dict[str, float] = dict()
        bpr = 0.0
        for k, triples in enumerate(self.fixture.triples):
            if len(triples) == 0:
                continue

            positive = self.predict(k, triples[:, 0], triples[:, 1], frozen=frozen)
            negative = self.predict(k, triples[:, 0], triples[:, 2], frozen=frozen)

            # -ln(sigmoid(x)) = ln(1 + e^-x)
            per_triple = np.logaddexp(0.0, -(positive - negative))
            value = (
                float(per_triple.sum()) / len(per_triple)
                if config.bpr_reduction == BprReduction.Mean
                else float(per_triple.sum())
            )

            values[f"bpr_{k}"] = value
            bpr += weights[k] * value

        cl = 0.0
        if (
            config.contrastive_on
            and config.head_mode == HeadMode.Dfme
            and config.num_behaviors > 1
        ):
            for k in range(config.num_behaviors - 1):
                cl += self.contrastive(k)

        reg = config.reg * sum(
            float((value * value).sum()) for value in self.params.values()
        )

        values["bpr"] = bpr
        values["cl"] = cl
        values["reg"] = reg
        values["total"] = bpr + config.gamma * cl + reg

        return values


def dense_forward(fixture: DenseFixture, config: Config) -> DenseTrace:
    """Evaluate every intermediate with dense arithmetic.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.
    config : `Config`
        Configuration.

    Returns
    -------
    `DenseTrace`
        Intermediates. Experts, gates and predictions are on all pairs in the
        row-major order.
    """

    network = DenseNetwork(fixture, config)

    users = np.repeat(np.arange(fixture.num_users), fixture.num_items)
    items = np.tile(np.arange(fixture.num_items), fixture.num_users)

    experts = list()
    gates: list[np.ndarray | None] = list()
    predictions = list()
    for k in range(config.num_behaviors):
        if config.head_mode == HeadMode.Dfme:
            experts.append(network.get_experts(k, users, items))
            gates.append(network.get_gates(k, users, items))
        else:
            experts.append(list())
            gates.append(None)
        predictions.append(network.predict(k, users, items))

    return DenseTrace(
        layers=network.layers,
        users=network.users,
        items=network.items,
        fitting=network.fitting,
        experts=experts,
        gates=gates,
        predictions=predictions,
    )


def numerical_gradient(
    fixture: DenseFixture,
    config: Config,
    selection: str = "total",
    h: float = 1e-5,
    respect_stop_gradient: bool = True,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of a loss component for every parameter
    entry.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.
    config : `Config`
        Configuration.
    selection : `str`, optional
        Loss component: "total", "bpr", "cl", "reg" or "bpr_<k>". (the
        default is "total")
    h : `float`, optional
        Step in [1e-6, 1e-4]. (the default is 1e-5)
    respect_stop_gradient : `bool`, optional
        Hold the stop-gradient terms at their unperturbed values. (the default
        is True)

    Returns
    -------
    `dict` [`str`, `numpy.ndarray`]
        Gradient tables by parameter name.

    Raises
    ------
    `ConfigurationError`
        Step out of range or unknown selection.
    """

    if not (1e-6 <= h <= 1e-4):
        raise ConfigurationError(f"Step should be in [1e-6, 1e-4]: {h}.")

    base = DenseNetwork(fixture, config)
    values = base.losses()
    if selection not in values:
        raise ConfigurationError(
            f"Unknown loss selection {selection!r}, use {list(values.keys())}."
        )

    frozen = base.terms if respect_stop_gradient else None

    gradients: dict[str, np.ndarray] = dict()
    for name, value in fixture.params.items():
        gradient = np.zeros_like(value)
        for index in np.ndindex(*value.shape):
            evaluations = list()
            for step in (h, -h):
                params = {key: array.copy() for key, array in fixture.params.items()}
                params[name][index] += step
                network = DenseNetwork(fixture, config, params=params)
                evaluations.append(network.losses(frozen=frozen)[selection])

            gradient[index] = (evaluations[0] - evaluations[1]) / (2.0 * h)

        gradients[name] = gradient

    return gradients


def reference_metrics(
    scores: np.ndarray,
    held_out: dict[int, int],
    k: int = 10,
    candidates: dict[int, np.ndarray] | None = None,
) -> tuple[float, float]:
    """Hit ratio and NDCG by an explicit full sort of every user.

    Parameters
    ----------
    scores : `numpy.ndarray`
        Users x items score table.
    held_out : `dict` [`int`, `int`]
        Held-out item of each test user.
    k : `int`, optional
        Cutoff. (the default is 10)
    candidates : `dict` or None, optional
        Boolean candidate mask of each user. If None, all items are
        candidates. (the default is None)

    Returns
    -------
    hr : `float`
        Hit ratio.
    ndcg : `float`
        Normalized discounted cumulative gain.
    """

    hits = 0.0
    gains = 0.0
    for user in sorted(held_out.keys()):
        item = held_out[user]

        mask = (
            np.ones(scores.shape[1], dtype=bool)
            if candidates is None
            else candidates[user].copy()
        )
        mask[item] = True

        ordered = sorted(
            (int(value) for value in np.flatnonzero(mask)),
            key=lambda value: (-float(scores[user, value]), value),
        )
        rank = ordered.index(item) + 1

        hits += 1.0 if rank <= k else 0.0
        gains += (1.0 / math.log2(rank + 1)) if rank <= k else 0.0

    return hits / len(held_out), gains / len(held_out)
