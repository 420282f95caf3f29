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
    "BehaviorRepresentations",
    "get_relations",
    "propagate_layer",
    "transfer_between_behaviors",
    "fuse_layers",
    "forward_all",
]

from dataclasses import dataclass, field

from .config import Config
from .data_graph import BehaviorGraph
from .enums import Backbone, InMode, PostMode, PreMode, SelfLoopMode
from .errors import ConfigurationError
from .tensor_autograd import Node, ParameterStore, Tape


@dataclass
class BehaviorRepresentations:
    """Fused user and item representations of every behavior.

    Attributes
    ----------
    num_users : `int`
        Number of users.
    users : `list` [`Node`]
        M x d fused user matrix of each behavior. A single entry when the
        outputs are fused.
    items : `list` [`Node`]
        N x d fused item matrix of each behavior. A single entry when the
        outputs are fused.
    layers : `list` [`list` [`Node`]]
        Joint (M+N) x d matrices E^{k,0..L} of each behavior.
    """

    num_users: int
    users: list[Node] = field(default_factory=list)
    items: list[Node] = field(default_factory=list)
    layers: list[list[Node]] = field(default_factory=list)

    def get_user(self, k: int) -> Node:
        return self.users[0] if len(self.users) == 1 else self.users[k]

    def get_item(self, k: int) -> Node:
        return self.items[0] if len(self.items) == 1 else self.items[k]

    def get_joint(self, k: int) -> Node:
        """Get the stacked (M+N) x d fused matrix of the behavior."""
        user = self.get_user(k)
        return user.tape.concat([user, self.get_item(k)], axis=0)


def get_relations(k: int, num_behaviors: int, in_mode: InMode) -> list[int]:
    """Get the relations propagated inside the behavior.

    Parameters
    ----------
    k : `int`
        Behavior index.
    num_behaviors : `int`
        Number of behaviors.
    in_mode : enum `InMode`
        In-behavior constraint.

    Returns
    -------
    `list` [`int`]
        Ascending behavior indices.

    Raises
    ------
    `ConfigurationError`
        Behavior index out of range.
    """

    if not (0 <= k < num_behaviors):
        raise ConfigurationError(
            f"Behavior index {k} is out of range [0, {num_behaviors})."
        )

    if in_mode == InMode.Full:
        return list(range(k + 1))
    elif in_mode == InMode.Strict:
        return [k]
    else:
        return list(range(num_behaviors))


def propagate_layer(
    embedding: Node, k: int, graphs: BehaviorGraph, config: Config
) -> Node:
    """Propagate one graph convolution layer inside the behavior.

    With the per-relation self loop, E' = sum_{k' in S} (P_k' E + E).
    Otherwise, E' = sum_{k' in S} P_k' E + E. The relations are summed in the
    ascending order.

    Parameters
    ----------
    embedding : `Node`
        Joint (M+N) x d matrix.
    k : `int`
        Behavior index.
    graphs : `BehaviorGraph`
        Operators.
    config : `Config`
        Configuration.

    Returns
    -------
    `Node`
        Next layer.

    Raises
    ------
    `ConfigurationError`
        Behavior index out of range.
    """

    tape = embedding.tape
    relations = get_relations(k, graphs.num_behaviors, config.in_mode)

    if config.self_loop_mode == SelfLoopMode.PerRelation:
        return tape.add_n(
            [
                tape.add(tape.spmm(graphs.propagation[relation], embedding), embedding)
                for relation in relations
            ]
        )

    neighbors = tape.add_n(
        [tape.spmm(graphs.propagation[relation], embedding) for relation in relations]
    )
    return tape.add(neighbors, embedding)


def transfer_between_behaviors(
    layer_outputs: list[Node], initial: Node, config: Config
) -> Node:
    """Seed the next behavior from the last layers of the upstream behaviors.

    Parameters
    ----------
    layer_outputs : `list` [`Node`]
        E^{k',L} of the behaviors up to the current one, in order.
    initial : `Node`
        Initial embedding E^{1,0}.
    config : `Config`
        Configuration.

    Returns
    -------
    `Node`
        Initial layer of the next behavior.
    """

    tape = initial.tape

    if config.pre_mode == PreMode.Full:
        return tape.add(tape.add_n(layer_outputs), initial)
    elif config.pre_mode == PreMode.Strict:
        return tape.add(layer_outputs[-1], initial)
    else:
        return initial


def fuse_layers(
    intermediates: list[Node], num_users: int, average: bool = False
) -> tuple[Node, Node]:
    """Sum the layers and split the users from the items.

    Parameters
    ----------
    intermediates : `list` [`Node`]
        Joint matrices E^{k,0..L}.
    num_users : `int`
        Number of users, M.
    average : `bool`, optional
        Average instead of sum. (the default is False)

    Returns
    -------
    user : `Node`
        First M rows.
    item : `Node`
        Remaining rows.
    """

    tape = intermediates[0].tape
    fused = tape.add_n(intermediates)
    if average:
        fused = tape.scale(fused, 1.0 / len(intermediates))

    num_nodes = fused.shape[0]
    return tape.rows(fused, 0, num_users), tape.rows(fused, num_users, num_nodes)


def forward_all(
    params: ParameterStore,
    graphs: BehaviorGraph,
    config: Config,
    tape: Tape | None = None,
) -> BehaviorRepresentations:
    """Run the fusion network over all behaviors.

    Parameters
    ----------
    params : `ParameterStore`
        Parameters with "user_embedding" and "item_embedding".
    graphs : `BehaviorGraph`
        Operators.
    config : `Config`
        Configuration.
    tape : `Tape` or None, optional
        Tape to record on. If None, a new tape is used. (the default is None)

    Returns
    -------
    `BehaviorRepresentations`
        Representations.
    """

    if tape is None:
        tape = Tape()

    initial = tape.concat(
        [
            tape.parameter(params["user_embedding"]),
            tape.parameter(params["item_embedding"]),
        ],
        axis=0,
    )

    num_users = graphs.num_users
    reps = BehaviorRepresentations(num_users=num_users)

    if config.backbone == Backbone.Lightgcn:
        # Independent stacks over the shared table, without the self term
        for k in range(graphs.num_behaviors):
            layers = [initial]
            for _ in range(config.layers):
                layers.append(tape.spmm(graphs.propagation[k], layers[-1]))

            user, item = fuse_layers(layers, num_users, average=True)
            reps.layers.append(layers)
            reps.users.append(user)
            reps.items.append(item)

    else:
        last_layers = list()
        seed = initial
        for k in range(graphs.num_behaviors):
            layers = [seed]
            for _ in range(config.layers):
                layers.append(propagate_layer(layers[-1], k, graphs, config))

            user, item = fuse_layers(layers, num_users)
            reps.layers.append(layers)
            reps.users.append(user)
            reps.items.append(item)

            last_layers.append(layers[-1])
            if k < graphs.num_behaviors - 1:
                seed = transfer_between_behaviors(last_layers, initial, config)

    if config.post_mode == PostMode.Fused and len(reps.users) > 1:
        scale = 1.0 / len(reps.users)
        reps.users = [tape.scale(tape.add_n(reps.users), scale)]
        reps.items = [tape.scale(tape.add_n(reps.items), scale)]

    return reps
