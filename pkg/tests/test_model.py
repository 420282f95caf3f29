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

import logging

import numpy as np
import pytest
from mbrec import (
    InteractionSet,
    Model,
    Tape,
    build_behavior_graphs,
    make_config,
)

NUM_USERS = 6
NUM_ITEMS = 5
DIM = 4


@pytest.fixture
def graphs():
    rng = np.random.default_rng(11)

    edges = list()
    for _ in range(3):
        users, items = np.nonzero(rng.random((NUM_USERS, NUM_ITEMS)) < 0.4)
        edges.append(np.stack([users, items], axis=1).astype(np.int64).reshape(-1, 2))

    interactions = InteractionSet(
        num_users=NUM_USERS,
        num_items=NUM_ITEMS,
        behaviors=["view", "cart", "buy"],
        edges=edges,
        timestamps=[np.full(len(edge), np.nan) for edge in edges],
    )
    return build_behavior_graphs(interactions)


def _score_on_tape(model: Model, graphs, users: np.ndarray) -> np.ndarray:
    tape = Tape(requires_grad=False)
    reps = model.forward(graphs, tape=tape)

    scores = np.zeros((len(users), NUM_ITEMS))
    for row, user in enumerate(users):
        prediction = model.predict(
            reps,
            graphs,
            model.config.target_index,
            np.full(NUM_ITEMS, user),
            np.arange(NUM_ITEMS),
        )
        scores[row] = prediction.value

    return scores


def test_init() -> None:
    model = Model(make_config(dict(dim=DIM)), NUM_USERS, NUM_ITEMS)

    assert model.params.names() == [
        "user_embedding",
        "item_embedding",
        "fitting_relation_0",
        "fitting_relation_1",
        "fitting_relation_2",
        "fitting_transform_1",
        "fitting_transform_2",
        "gate_weight",
        "gate_bias",
    ]
    assert model.params["user_embedding"].shape == (NUM_USERS, DIM)
    assert model.params["fitting_relation_0"].shape == (1, DIM)
    assert model.params["gate_weight"].shape == (3, 2 * DIM)
    assert model.params["gate_bias"].shape == (1, 3)
    np.testing.assert_array_equal(model.params["gate_bias"].value, np.zeros((1, 3)))


def test_init_variants() -> None:
    names = Model(
        make_config(dict(dim=DIM, fitting_on=False, gate_sharing="per-task")),
        NUM_USERS,
        NUM_ITEMS,
    ).params.names()
    assert names == [
        "user_embedding",
        "item_embedding",
        "gate_weight_0",
        "gate_bias_0",
        "gate_weight_1",
        "gate_bias_1",
        "gate_weight_2",
        "gate_bias_2",
    ]

    bilinear = Model(
        make_config(dict(dim=DIM, head_mode="bilinear")), NUM_USERS, NUM_ITEMS
    )
    assert bilinear.params.names() == [
        "user_embedding",
        "item_embedding",
        "relation_0",
        "relation_1",
        "relation_2",
    ]
    np.testing.assert_array_equal(
        bilinear.params["relation_1"].value, np.ones((1, DIM))
    )

    single = Model(
        make_config(dict(dim=DIM, behaviors=["buy"])), NUM_USERS, NUM_ITEMS
    )
    assert single.params.names() == [
        "user_embedding",
        "item_embedding",
        "gate_weight",
        "gate_bias",
    ]


def test_init_seed() -> None:
    config = make_config(dict(dim=DIM, seed=3))

    first = Model(config, NUM_USERS, NUM_ITEMS).params.get_values()
    second = Model(config, NUM_USERS, NUM_ITEMS, seed=3).params.get_values()
    other = Model(config, NUM_USERS, NUM_ITEMS, seed=4).params.get_values()

    for name, value in first.items():
        np.testing.assert_array_equal(value, second[name])

    assert not np.array_equal(first["user_embedding"], other["user_embedding"])


def test_init_xavier_bound() -> None:
    model = Model(make_config(dict(dim=DIM)), NUM_USERS, NUM_ITEMS)

    bound = np.sqrt(6.0 / (NUM_USERS + DIM))
    assert np.all(np.abs(model.params["user_embedding"].value) <= bound)


def test_init_log(caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.DEBUG):
        Model(
            make_config(dict(dim=DIM)),
            NUM_USERS,
            NUM_ITEMS,
            log=logging.getLogger(),
        )

    assert "Initialized 9 parameters with the seed 0." in caplog.text


@pytest.mark.parametrize(
    "content",
    [
        dict(),
        dict(fitting_on=False),
        dict(gate_sharing="per-task"),
        dict(head_mode="bilinear"),
        dict(stop_grad_mode="none", in_mode="none"),
        dict(post_mode="fused"),
        dict(backbone="lightgcn"),
    ],
)
def test_infer(graphs, content: dict) -> None:
    config = make_config(dict(dim=DIM, **content))
    model = Model(config, NUM_USERS, NUM_ITEMS, seed=2)

    # Non-trivial gate biases
    for name in ("gate_bias", "gate_bias_2"):
        if name in model.params:
            model.params[name].value = np.array([[0.3, -0.2, 0.1]])

    users = np.array([0, 3, 5])
    state = model.infer(graphs)

    assert state.num_items == NUM_ITEMS
    np.testing.assert_allclose(
        state.score(users),
        _score_on_tape(model, graphs, users),
        rtol=1e-9,
        atol=1e-12,
    )


def test_infer_without_gradient(graphs) -> None:
    model = Model(make_config(dict(dim=DIM)), NUM_USERS, NUM_ITEMS)
    model.infer(graphs)

    for parameter in model.params:
        np.testing.assert_array_equal(parameter.grad, np.zeros_like(parameter.value))
