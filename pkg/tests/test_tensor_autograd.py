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

import math

import numpy as np
import pytest
from mbrec import (
    ConfigurationError,
    ParameterStore,
    Tape,
    UsageError,
    build_csr,
    densify,
)


@pytest.fixture
def params() -> ParameterStore:
    params = ParameterStore()
    params.add("weight", np.arange(6, dtype=float).reshape(2, 3) / 10.0)
    params.add("bias", np.array([[0.1, -0.2, 0.3]]), init="zeros")

    return params


def test_build_csr() -> None:
    matrix = build_csr([1, 0, 1, 0], [2, 1, 2, 0], [1.0, 2.0, 3.0, 0.0], (2, 3))

    assert matrix.nnz == 2
    assert matrix.has_sorted_indices
    np.testing.assert_array_equal(
        densify(matrix), np.array([[0.0, 2.0, 0.0], [0.0, 0.0, 4.0]])
    )


def test_parameter_store(params: ParameterStore) -> None:
    assert params.names() == ["weight", "bias"]
    assert len(params) == 2
    assert "bias" in params
    assert params["bias"].init == "zeros"

    with pytest.raises(ConfigurationError):
        params.add("weight", np.zeros((2, 3)))


def test_parameter_store_set_values(params: ParameterStore) -> None:
    values = params.get_values()
    values["weight"][0, 0] = 5.0

    # The copy does not alias
    assert params["weight"].value[0, 0] == 0.0

    params.set_values(values)
    assert params["weight"].value[0, 0] == 5.0

    with pytest.raises(ConfigurationError):
        params.set_values(dict(weight=values["weight"]))

    with pytest.raises(ConfigurationError):
        params.set_values(dict(weight=np.zeros((3, 2)), bias=values["bias"]))


def test_parameter_leaf(params: ParameterStore) -> None:
    tape = Tape()

    assert tape.parameter(params["weight"]) is tape.parameter(params["weight"])


def test_backward_accumulate(params: ParameterStore) -> None:
    tape = Tape()
    weight = tape.parameter(params["weight"])

    # Used twice: the gradients accumulate
    loss = tape.sum(tape.mul(weight, weight))
    tape.backward(loss)

    np.testing.assert_allclose(params["weight"].grad, 2.0 * params["weight"].value)

    params.zero_grad()
    assert np.all(params["weight"].grad == 0.0)


def test_backward_error(params: ParameterStore) -> None:
    tape = Tape()
    weight = tape.parameter(params["weight"])

    with pytest.raises(UsageError):
        tape.backward(weight)

    other = Tape()
    loss = other.sum(other.parameter(params["weight"]))
    with pytest.raises(UsageError):
        tape.backward(loss)

    inference = Tape(requires_grad=False)
    loss = inference.sum(inference.parameter(params["weight"]))
    assert len(inference.nodes) == 0
    with pytest.raises(UsageError):
        inference.backward(loss)


def test_broadcast_add(params: ParameterStore) -> None:
    tape = Tape()
    loss = tape.sum(
        tape.add(tape.parameter(params["weight"]), tape.parameter(params["bias"]))
    )
    tape.backward(loss)

    np.testing.assert_array_equal(params["bias"].grad, np.array([[2.0, 2.0, 2.0]]))
    np.testing.assert_array_equal(params["weight"].grad, np.ones((2, 3)))


def test_spmm(params: ParameterStore) -> None:
    matrix = build_csr([0, 1, 1], [0, 0, 1], [1.0, 0.5, 2.0], (2, 2))

    tape = Tape()
    weight = tape.parameter(params["weight"])
    product = tape.spmm(matrix, weight)

    np.testing.assert_allclose(product.value, densify(matrix) @ params["weight"].value)

    tape.backward(tape.sum(product))
    np.testing.assert_allclose(
        params["weight"].grad, densify(matrix).T @ np.ones((2, 3))
    )

    with pytest.raises(ConfigurationError):
        tape.spmm(build_csr([0], [0], [1.0], (3, 3)), weight)


def test_matmul_error(params: ParameterStore) -> None:
    tape = Tape()
    weight = tape.parameter(params["weight"])

    with pytest.raises(ConfigurationError):
        tape.matmul(weight, weight)


def test_gather_scatter_add(params: ParameterStore) -> None:
    tape = Tape()
    rows = tape.gather(tape.parameter(params["weight"]), np.array([0, 0, 1]))
    tape.backward(tape.sum(rows))

    np.testing.assert_array_equal(
        params["weight"].grad, np.array([[2.0] * 3, [1.0] * 3])
    )


def test_softmax() -> None:
    tape = Tape()
    logits = np.array([[math.log(2.0), 0.0, 0.0]])

    value = tape.softmax(tape.constant(logits), axis=1).value
    np.testing.assert_allclose(value, [[0.5, 0.25, 0.25]], rtol=0.0, atol=1e-15)

    shifted = tape.softmax(tape.constant(logits + 123.0), axis=1).value
    np.testing.assert_allclose(shifted, value, rtol=0.0, atol=1e-12)


def test_logsumexp() -> None:
    tape = Tape()
    value = tape.logsumexp(tape.constant(np.array([[1000.0, 1000.0]])), axis=1).value

    assert value[0] == pytest.approx(1000.0 + math.log(2.0))


def test_sigmoid_stable() -> None:
    tape = Tape()
    x = tape.constant(np.array([-800.0, 0.0, 800.0]))

    np.testing.assert_allclose(tape.sigmoid(x).value, [0.0, 0.5, 1.0])

    value = tape.log_sigmoid(x).value
    assert np.all(np.isfinite(value))
    assert value[0] == pytest.approx(-800.0)
    assert value[1] == pytest.approx(-math.log(2.0))
    assert value[2] == pytest.approx(0.0)


def test_normalize_rows() -> None:
    tape = Tape()
    value = tape.normalize_rows(tape.constant(np.array([[3.0, 4.0], [0.0, 0.0]]))).value

    np.testing.assert_allclose(value, [[0.6, 0.8], [0.0, 0.0]])


def test_stop_gradient(params: ParameterStore) -> None:
    tape = Tape()
    weight = tape.parameter(params["weight"])

    blocked = tape.stop_gradient(tape.scale(weight, 3.0))
    loss = tape.sum(tape.add(blocked, weight))

    np.testing.assert_allclose(loss.value, 4.0 * params["weight"].value.sum())
    assert len(tape.stopped) == 1

    tape.backward(loss)
    np.testing.assert_array_equal(params["weight"].grad, np.ones((2, 3)))


def test_stop_gradient_frozen(params: ParameterStore) -> None:
    frozen = [np.full((2, 3), 7.0)]

    tape = Tape(requires_grad=False, frozen=frozen)
    weight = tape.parameter(params["weight"])
    blocked = tape.stop_gradient(weight)

    np.testing.assert_array_equal(blocked.value, frozen[0])

    with pytest.raises(UsageError):
        tape.stop_gradient(weight)


def test_operators(params: ParameterStore) -> None:
    tape = Tape()
    weight = tape.parameter(params["weight"])

    value = ((2.0 * weight + 1.0 - weight) / 2.0).value
    np.testing.assert_allclose(value, (params["weight"].value + 1.0) / 2.0)

    product = weight @ tape.transpose(weight)
    assert product.shape == (2, 2)
