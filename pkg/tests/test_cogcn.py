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

import numpy as np
import pytest
from mbrec import (
    BehaviorGraph,
    Config,
    ConfigurationError,
    InMode,
    InteractionSet,
    Model,
    Tape,
    build_behavior_graphs,
    densify,
    forward_all,
    fuse_layers,
    get_relations,
    make_config,
    propagate_layer,
    transfer_between_behaviors,
)

NUM_USERS = 5
NUM_ITEMS = 4


def _make_interactions(seed: int, num_behaviors: int = 3) -> InteractionSet:
    rng = np.random.default_rng(seed)

    edges = list()
    for _ in range(num_behaviors):
        users, items = np.nonzero(rng.random((NUM_USERS, NUM_ITEMS)) < 0.5)
        edges.append(np.stack([users, items], axis=1).astype(np.int64).reshape(-1, 2))

    return InteractionSet(
        num_users=NUM_USERS,
        num_items=NUM_ITEMS,
        behaviors=["view", "cart", "buy"][-num_behaviors:],
        edges=edges,
        timestamps=[np.full(len(edge), np.nan) for edge in edges],
    )


def _get_initial(model: Model) -> np.ndarray:
    return np.concatenate(
        [model.params["user_embedding"].value, model.params["item_embedding"].value]
    )


def _forward(config: Config, graphs: BehaviorGraph, seed: int = 0):
    model = Model(config, NUM_USERS, NUM_ITEMS, seed=seed)
    return model, forward_all(model.params, graphs, config)


def test_get_relations() -> None:
    assert get_relations(1, 3, InMode.Full) == [0, 1]
    assert get_relations(1, 3, InMode.Strict) == [1]
    assert get_relations(1, 3, InMode.Off) == [0, 1, 2]

    with pytest.raises(ConfigurationError):
        get_relations(3, 3, InMode.Full)


def test_propagate_layer() -> None:
    graphs = build_behavior_graphs(_make_interactions(1))
    embedding = np.random.default_rng(2).normal(size=(NUM_USERS + NUM_ITEMS, 4))

    tape = Tape()
    layer = propagate_layer(tape.constant(embedding), 1, graphs, Config(dim=4))

    expected = sum(
        densify(graphs.propagation[relation]) @ embedding + embedding
        for relation in (0, 1)
    )
    np.testing.assert_allclose(layer.value, expected, rtol=0.0, atol=1e-12)

    config = make_config(dict(dim=4, self_loop_mode="once"))
    layer = propagate_layer(tape.constant(embedding), 1, graphs, config)

    expected = sum(
        densify(graphs.propagation[relation]) @ embedding for relation in (0, 1)
    )
    np.testing.assert_allclose(layer.value, expected + embedding, rtol=0.0, atol=1e-12)


def test_fuse_layers() -> None:
    tape = Tape()
    layers = [tape.constant(np.full((3, 2), float(idx))) for idx in range(3)]

    user, item = fuse_layers(layers, 1)
    assert user.shape == (1, 2)
    assert item.shape == (2, 2)
    assert np.all(user.value == 3.0)

    user, _ = fuse_layers(layers, 1, average=True)
    assert np.all(user.value == 1.0)


def test_transfer_between_behaviors() -> None:
    tape = Tape()
    initial = tape.constant(np.ones((3, 2)))
    outputs = [tape.constant(np.full((3, 2), float(idx + 1))) for idx in range(2)]

    seed = transfer_between_behaviors(outputs, initial, Config(dim=2))
    assert np.all(seed.value == 4.0)

    config = make_config(dict(dim=2, pre_mode="strict"))
    seed = transfer_between_behaviors(outputs, initial, config)
    assert np.all(seed.value == 3.0)

    config = make_config(dict(dim=2, pre_mode="none"))
    seed = transfer_between_behaviors(outputs, initial, config)
    assert np.all(seed.value == 1.0)


def test_forward_all() -> None:
    config = Config(dim=4, layers=2)
    graphs = build_behavior_graphs(_make_interactions(3))

    model, reps = _forward(config, graphs)

    assert len(reps.users) == 3
    assert len(reps.layers[0]) == 3
    assert reps.get_user(2).shape == (NUM_USERS, 4)
    assert reps.get_item(2).shape == (NUM_ITEMS, 4)
    assert reps.get_joint(1).shape == (NUM_USERS + NUM_ITEMS, 4)

    # The first behavior starts from the initial embedding
    initial = _get_initial(model)
    np.testing.assert_array_equal(reps.layers[0][0].value, initial)

    # The full pre-behavior constraint seeds with all upstream outputs
    np.testing.assert_allclose(
        reps.layers[2][0].value,
        reps.layers[0][2].value + reps.layers[1][2].value + initial,
        rtol=0.0,
        atol=1e-12,
    )

    fused = sum(layer.value for layer in reps.layers[1])
    np.testing.assert_allclose(reps.users[1].value, fused[:NUM_USERS], atol=1e-12)


@pytest.mark.parametrize("backbone", ["cogcn", "lightgcn"])
def test_forward_all_linear(backbone: str) -> None:
    config = make_config(dict(dim=4, backbone=backbone))
    graphs = build_behavior_graphs(_make_interactions(4))

    model, reps = _forward(config, graphs)

    for name in ("user_embedding", "item_embedding"):
        model.params[name].value = -2.5 * model.params[name].value
    scaled = forward_all(model.params, graphs, config)

    for k in range(3):
        np.testing.assert_allclose(
            scaled.get_joint(k).value, -2.5 * reps.get_joint(k).value, atol=1e-12
        )

    for name in ("user_embedding", "item_embedding"):
        model.params[name].value = np.zeros_like(model.params[name].value)
    zeros = forward_all(model.params, graphs, config)

    for k in range(3):
        np.testing.assert_array_equal(
            zeros.get_joint(k).value, np.zeros((NUM_USERS + NUM_ITEMS, 4))
        )


def test_forward_all_pre_mode() -> None:
    graphs = build_behavior_graphs(_make_interactions(3))

    model, reps = _forward(make_config(dict(dim=4, pre_mode="strict")), graphs)
    np.testing.assert_allclose(
        reps.layers[2][0].value,
        reps.layers[1][2].value + _get_initial(model),
        rtol=0.0,
        atol=1e-12,
    )

    model, reps = _forward(make_config(dict(dim=4, pre_mode="none")), graphs)
    for k in range(3):
        np.testing.assert_array_equal(reps.layers[k][0].value, _get_initial(model))


def test_forward_all_fused() -> None:
    graphs = build_behavior_graphs(_make_interactions(3))

    _, decoupled = _forward(Config(dim=4), graphs)
    _, fused = _forward(make_config(dict(dim=4, post_mode="fused")), graphs)

    assert len(fused.users) == 1
    assert fused.get_user(2) is fused.get_user(0)

    mean = sum(user.value for user in decoupled.users) / 3.0
    np.testing.assert_allclose(fused.users[0].value, mean, atol=1e-12)


def test_forward_all_lightgcn() -> None:
    graphs = build_behavior_graphs(_make_interactions(3))
    model, reps = _forward(make_config(dict(dim=4, backbone="lightgcn")), graphs)

    initial = _get_initial(model)
    for k in range(3):
        propagation = densify(graphs.propagation[k])
        layers = [initial, propagation @ initial, propagation @ propagation @ initial]
        expected = sum(layers) / 3.0

        np.testing.assert_allclose(
            reps.users[k].value, expected[:NUM_USERS], rtol=0.0, atol=1e-12
        )


@pytest.mark.parametrize("seed", range(5))
def test_downstream_leakage(seed: int) -> None:
    config = Config(dim=4, layers=2)
    interactions = _make_interactions(seed)
    _, reps = _forward(config, build_behavior_graphs(interactions))

    rng = np.random.default_rng(100 + seed)
    for k in range(2):
        # Rewrite every edge set downstream of k
        edited = _make_interactions(1000 + seed)
        edges = list(interactions.edges[: k + 1]) + [
            edited.edges[j][rng.random(len(edited.edges[j])) < 0.7]
            for j in range(k + 1, 3)
        ]
        changed = InteractionSet(
            num_users=NUM_USERS,
            num_items=NUM_ITEMS,
            behaviors=list(interactions.behaviors),
            edges=edges,
            timestamps=[np.full(len(edge), np.nan) for edge in edges],
        )

        _, reps_changed = _forward(config, build_behavior_graphs(changed))

        for j in range(k + 1):
            assert np.array_equal(reps_changed.users[j].value, reps.users[j].value)
            assert np.array_equal(reps_changed.items[j].value, reps.items[j].value)


def test_downstream_leakage_all_relations() -> None:
    # Without the in-behavior constraint the downstream edges leak upstream
    config = make_config(dict(dim=4, in_mode="none"))
    interactions = _make_interactions(0)
    _, reps = _forward(config, build_behavior_graphs(interactions))

    edges = list(interactions.edges[:2]) + [interactions.edges[2][:1]]
    changed = InteractionSet(
        num_users=NUM_USERS,
        num_items=NUM_ITEMS,
        behaviors=list(interactions.behaviors),
        edges=edges,
        timestamps=[np.full(len(edge), np.nan) for edge in edges],
    )
    _, reps_changed = _forward(config, build_behavior_graphs(changed))

    assert not np.array_equal(reps_changed.users[0].value, reps.users[0].value)
