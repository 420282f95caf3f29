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
    ConfigurationError,
    Tape,
    check_oracle,
    complete_fixture,
    compute_losses,
    get_fixture_batch,
    get_fixture_config,
    get_fixture_interactions,
    load_fixture,
    make_config,
    make_fixture_model,
    make_random_fixture,
    numerical_gradient,
)

VARIANTS = [
    dict(),
    dict(pre_mode="strict"),
    dict(pre_mode="none"),
    dict(in_mode="strict"),
    dict(in_mode="none"),
    dict(post_mode="fused"),
    dict(self_loop_mode="once"),
    dict(degree_mode="joint"),
    dict(backbone="lightgcn"),
    dict(head_mode="bilinear"),
    dict(fitting_on=False),
    dict(gate_sharing="per-task"),
    dict(similarity="cosine"),
    dict(stop_grad_mode="all"),
    dict(layers=1),
    dict(layers=3),
    dict(behaviors=["view", "buy"]),
    dict(behaviors=["buy"]),
    dict(behaviors=["click", "view", "cart", "buy"]),
    dict(bpr_reduction="sum", loss_weights=[0.2, 0.3, 0.5]),
]


def test_load_fixture() -> None:
    fixture = load_fixture()

    assert fixture.num_users == 3
    assert fixture.num_items == 3
    assert fixture.behaviors == ["view", "buy"]
    assert fixture.params["user_embedding"].shape == (3, 4)
    assert fixture.params["gate_weight"].shape == (2, 8)
    assert [len(triples) for triples in fixture.triples] == [3, 3]

    config = get_fixture_config(fixture)
    assert config.dim == 4
    assert config.behaviors == ["view", "buy"]
    assert get_fixture_config(fixture, layers=1).layers == 1

    interactions = get_fixture_interactions(fixture)
    assert [interactions.num_edges(k) for k in range(2)] == [6, 3]
    np.testing.assert_array_equal(interactions.edges[1], [[0, 0], [1, 1], [2, 2]])

    batch = get_fixture_batch(fixture)
    np.testing.assert_array_equal(batch.users[0], [0, 1, 2])
    np.testing.assert_array_equal(batch.negatives[1], [1, 2, 0])


def test_load_fixture_shape(tmp_path) -> None:
    filepath = tmp_path / "fixture.yaml"
    filepath.write_text(
        "num_users: 2\n"
        "num_items: 2\n"
        "behaviors: [buy]\n"
        "interactions:\n"
        "  buy: [[1, 0, 0], [0, 1, 0]]\n"
        "params: {}\n"
    )

    with pytest.raises(ConfigurationError):
        load_fixture(filepath)


@pytest.mark.parametrize("index", range(len(VARIANTS)))
def test_engine_matches_dense(index: int) -> None:
    config = make_config(dict(dim=3, layers=2, **VARIANTS[index]))
    fixture = make_random_fixture(config, 4, 5, seed=index)

    result = check_oracle(fixture, config)

    assert result.passed, result.detail
    assert result.max_error < 1e-10


def test_numerical_gradient_error() -> None:
    fixture = load_fixture()
    config = get_fixture_config(fixture)

    with pytest.raises(ConfigurationError):
        numerical_gradient(fixture, config, h=1e-3)

    with pytest.raises(ConfigurationError):
        numerical_gradient(fixture, config, h=1e-7)

    with pytest.raises(ConfigurationError):
        numerical_gradient(fixture, config, selection="bpr_5")


def test_numerical_gradient() -> None:
    fixture = load_fixture()
    config = get_fixture_config(fixture)
    fixture = complete_fixture(fixture, config)

    model, graphs = make_fixture_model(fixture, config)
    tape = Tape()
    tape.backward(compute_losses(model, graphs, get_fixture_batch(fixture), tape).total)

    gradients = numerical_gradient(fixture, config)

    assert set(gradients.keys()) == set(model.params.names())
    for parameter in model.params:
        np.testing.assert_allclose(
            gradients[parameter.name], parameter.grad, rtol=1e-5, atol=1e-8
        )


def test_numerical_gradient_reg() -> None:
    fixture = load_fixture()
    config = get_fixture_config(fixture)

    gradients = numerical_gradient(fixture, config, selection="reg")

    # d(mu * ||x||^2) / dx = 2 * mu * x
    for name, value in fixture.params.items():
        np.testing.assert_allclose(gradients[name], 2 * 0.01 * value, atol=1e-8)
