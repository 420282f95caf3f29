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
    "get_gate_names",
    "contrastive_loss",
    "specific_expert",
    "fitting_propagate",
    "fitting_expert",
    "gate",
    "aggregate_and_predict",
    "bilinear_predict",
    "predict",
]

import numpy as np

from .cogcn import BehaviorRepresentations
from .config import Config
from .data_graph import BehaviorGraph
from .enums import GateSharing, HeadMode, NegativeMode, Similarity, StopGradMode
from .errors import ConfigurationError
from .tensor_autograd import Node, ParameterStore

FittingCache = dict[tuple[int, int], Node]


def get_gate_names(k: int, gate_sharing: GateSharing) -> tuple[str, str]:
    """Get the names of the gate weight and bias of the task.

    Parameters
    ----------
    k : `int`
        Task (behavior) index.
    gate_sharing : enum `GateSharing`
        Shared or per-task gates.

    Returns
    -------
    `tuple`
        Names of the weight and the bias.
    """

    if gate_sharing == GateSharing.Shared:
        return "gate_weight", "gate_bias"

    return f"gate_weight_{k}", f"gate_bias_{k}"


def _infonce(anchor: Node, positive: Node, tau: float, similarity: Similarity) -> Node:
    tape = anchor.tape

    if similarity == Similarity.Cosine:
        anchor = tape.normalize_rows(anchor)
        positive = tape.normalize_rows(positive)

    scores = tape.scale(tape.matmul(anchor, tape.transpose(positive)), 1.0 / tau)
    matched = tape.scale(tape.sum(tape.mul(anchor, positive), axis=1), 1.0 / tau)

    return tape.mean(tape.sub(tape.logsumexp(scores, axis=1), matched))


def contrastive_loss(
    reps: BehaviorRepresentations,
    k: int,
    config: Config,
    users: np.ndarray | None = None,
    items: np.ndarray | None = None,
) -> Node:
    """InfoNCE alignment of the target representations with the auxiliary
    behavior, summed over the user and item sides.

    The anchors are the target rows, the positives are the auxiliary rows of
    the same user (item), and the denominator runs over the negative set with
    the positive included.

    Parameters
    ----------
    reps : `BehaviorRepresentations`
        Representations.
    k : `int`
        Auxiliary behavior index.
    config : `Config`
        Configuration.
    users : `numpy.ndarray` or None, optional
        Batch users used by the batch negative mode. (the default is None)
    items : `numpy.ndarray` or None, optional
        Batch items used by the batch negative mode. (the default is None)

    Returns
    -------
    `Node`
        Scalar loss.

    Raises
    ------
    `ConfigurationError`
        Non-positive temperature, or k is the target behavior.
    """

    if config.tau <= 0.0:
        raise ConfigurationError(f"tau should be > 0: {config.tau}.")

    target = config.target_index
    if k == target:
        raise ConfigurationError(f"Behavior {k} is the target behavior.")

    tape = reps.get_user(target).tape

    sides = list()
    for anchor, positive, index in (
        (reps.get_user(target), reps.get_user(k), users),
        (reps.get_item(target), reps.get_item(k), items),
    ):
        if config.neg_mode == NegativeMode.Batch and index is not None:
            unique = np.unique(index)
            anchor = tape.gather(anchor, unique)
            positive = tape.gather(positive, unique)

        sides.append(_infonce(anchor, positive, config.tau, config.similarity))

    return tape.add(sides[0], sides[1])


def specific_expert(
    reps: BehaviorRepresentations, k: int, users: np.ndarray, items: np.ndarray
) -> Node:
    """Hadamard product of the fused user and item rows of the behavior.

    Parameters
    ----------
    reps : `BehaviorRepresentations`
        Representations.
    k : `int`
        Behavior index.
    users : `numpy.ndarray`
        User ids.
    items : `numpy.ndarray`
        Item ids.

    Returns
    -------
    `Node`
        B x d experts.
    """

    tape = reps.get_user(k).tape
    return tape.mul(
        tape.gather(reps.get_user(k), users), tape.gather(reps.get_item(k), items)
    )


def fitting_propagate(
    reps: BehaviorRepresentations,
    k: int,
    k_other: int,
    graphs: BehaviorGraph,
    params: ParameterStore,
    config: Config,
) -> Node:
    """Propagate the blended representations on the graph of the other
    behavior.

    The input is (alpha * E^k + beta * E^k') / 2. With r_0 = R^k' and
    r_l = W^l r_{l-1}, each layer is E^l = (P_k' + I)(E^{l-1} o r_l), where
    the relation vector r_l is broadcast over the rows.

    Parameters
    ----------
    reps : `BehaviorRepresentations`
        Representations.
    k : `int`
        Current behavior.
    k_other : `int`
        Other behavior.
    graphs : `BehaviorGraph`
        Operators.
    params : `ParameterStore`
        Parameters with "fitting_relation_<k'>" and "fitting_transform_<l>".
    config : `Config`
        Configuration.

    Returns
    -------
    `Node`
        Joint (M+N) x d output.

    Raises
    ------
    `ConfigurationError`
        Same behaviors, or missing transform of a layer.
    """

    if k == k_other:
        raise ConfigurationError(f"Fitting expert needs two behaviors, got {k} twice.")

    for layer in range(1, config.layers + 1):
        if f"fitting_transform_{layer}" not in params:
            raise ConfigurationError(
                f"Fitting depth {config.layers} exceeds the available transforms."
            )

    tape = reps.get_user(k).tape

    embedding = tape.scale(
        tape.add(
            tape.scale(reps.get_joint(k), config.alpha),
            tape.scale(reps.get_joint(k_other), config.beta),
        ),
        0.5,
    )

    relation = tape.parameter(params[f"fitting_relation_{k_other}"])
    for layer in range(1, config.layers + 1):
        transform = tape.parameter(params[f"fitting_transform_{layer}"])
        relation = tape.matmul(relation, tape.transpose(transform))

        weighted = tape.mul(embedding, relation)
        embedding = tape.add(
            tape.spmm(graphs.propagation[k_other], weighted), weighted
        )

    return embedding


def fitting_expert(
    reps: BehaviorRepresentations,
    k: int,
    k_other: int,
    graphs: BehaviorGraph,
    params: ParameterStore,
    config: Config,
    users: np.ndarray,
    items: np.ndarray,
    cache: FittingCache | None = None,
) -> Node:
    """Behavior-fitting expert: hadamard product of the propagated user and
    item rows.

    Parameters
    ----------
    reps : `BehaviorRepresentations`
        Representations.
    k : `int`
        Current behavior.
    k_other : `int`
        Other behavior.
    graphs : `BehaviorGraph`
        Operators.
    params : `ParameterStore`
        Parameters.
    config : `Config`
        Configuration.
    users : `numpy.ndarray`
        User ids.
    items : `numpy.ndarray`
        Item ids.
    cache : `dict` or None, optional
        Propagated outputs by (k, k_other) reused inside one forward pass.
        (the default is None)

    Returns
    -------
    `Node`
        B x d experts.
    """

    key = (k, k_other)
    if (cache is not None) and (key in cache):
        joint = cache[key]
    else:
        joint = fitting_propagate(reps, k, k_other, graphs, params, config)
        if cache is not None:
            cache[key] = joint

    tape = joint.tape
    return tape.mul(
        tape.gather(joint, users), tape.gather(joint, items + reps.num_users)
    )


def gate(
    reps: BehaviorRepresentations,
    k: int,
    users: np.ndarray,
    items: np.ndarray,
    params: ParameterStore,
    config: Config,
) -> Node:
    """Softmax gate of the task over the K experts.

    Parameters
    ----------
    reps : `BehaviorRepresentations`
        Representations.
    k : `int`
        Task index.
    users : `numpy.ndarray`
        User ids.
    items : `numpy.ndarray`
        Item ids.
    params : `ParameterStore`
        Parameters.
    config : `Config`
        Configuration.

    Returns
    -------
    `Node`
        B x K weights. Each row is positive and sums to 1.
    """

    tape = reps.get_user(k).tape
    name_weight, name_bias = get_gate_names(k, config.gate_sharing)

    features = tape.concat(
        [tape.gather(reps.get_user(k), users), tape.gather(reps.get_item(k), items)],
        axis=1,
    )
    logits = tape.add(
        tape.matmul(features, tape.transpose(tape.parameter(params[name_weight]))),
        tape.parameter(params[name_bias]),
    )

    return tape.softmax(logits, axis=1)


def _is_stopped(j: int, k: int, target: int, mode: StopGradMode) -> bool:
    if mode == StopGradMode.TargetOnly:
        return (k != target) and (j == target)
    elif mode == StopGradMode.All:
        return j != k
    else:
        return False


def aggregate_and_predict(
    experts: list[Node],
    gates: Node,
    k: int,
    config: Config,
    terms: list[Node] | None = None,
) -> Node:
    """Gate-weighted sum of the experts followed by the averaging tower.

    Parameters
    ----------
    experts : `list` [`Node`]
        B x d expert of each behavior j.
    gates : `Node`
        B x K gate weights of the task.
    k : `int`
        Task index.
    config : `Config`
        Configuration.
    terms : `list` or None, optional
        If given, the weighted terms before the stop-gradient wrapper are
        appended in the order of j. (the default is None)

    Returns
    -------
    `Node`
        Prediction of each pair.
    """

    tape = gates.tape
    target = config.target_index

    weighted = list()
    for j, expert in enumerate(experts):
        term = tape.mul(expert, tape.columns(gates, j, j + 1))
        if terms is not None:
            terms.append(term)

        if _is_stopped(j, k, target, config.stop_grad_mode):
            term = tape.stop_gradient(term)

        weighted.append(term)

    return tape.mean(tape.add_n(weighted), axis=1)


def bilinear_predict(
    reps: BehaviorRepresentations,
    k: int,
    users: np.ndarray,
    items: np.ndarray,
    params: ParameterStore,
) -> Node:
    """Prediction mean_d(e_u o r_k o e_v) with the relation vector of the
    behavior.

    Parameters
    ----------
    reps : `BehaviorRepresentations`
        Representations.
    k : `int`
        Behavior index.
    users : `numpy.ndarray`
        User ids.
    items : `numpy.ndarray`
        Item ids.
    params : `ParameterStore`
        Parameters with "relation_<k>".

    Returns
    -------
    `Node`
        Prediction of each pair.
    """

    tape = reps.get_user(k).tape
    product = tape.mul(
        specific_expert(reps, k, users, items),
        tape.parameter(params[f"relation_{k}"]),
    )

    return tape.mean(product, axis=1)


def predict(
    reps: BehaviorRepresentations,
    k: int,
    users: np.ndarray,
    items: np.ndarray,
    graphs: BehaviorGraph,
    params: ParameterStore,
    config: Config,
    cache: FittingCache | None = None,
    terms: list[Node] | None = None,
) -> Node:
    """Predict the pairs for the task with the configured head.

    Parameters
    ----------
    reps : `BehaviorRepresentations`
        Representations.
    k : `int`
        Task index.
    users : `numpy.ndarray`
        User ids.
    items : `numpy.ndarray`
        Item ids.
    graphs : `BehaviorGraph`
        Operators.
    params : `ParameterStore`
        Parameters.
    config : `Config`
        Configuration.
    cache : `dict` or None, optional
        Fitting propagation cache. (the default is None)
    terms : `list` or None, optional
        Collector of the weighted terms. (the default is None)

    Returns
    -------
    `Node`
        Prediction of each pair.
    """

    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)

    if config.head_mode == HeadMode.Bilinear:
        return bilinear_predict(reps, k, users, items, params)

    experts = list()
    for j in range(config.num_behaviors):
        if j == k or not config.fitting_on:
            experts.append(specific_expert(reps, j, users, items))
        else:
            experts.append(
                fitting_expert(
                    reps, j, k, graphs, params, config, users, items, cache=cache
                )
            )

    gates = gate(reps, k, users, items, params, config)
    return aggregate_and_predict(experts, gates, k, config, terms=terms)
