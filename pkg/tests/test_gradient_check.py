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
    Node,
    ParameterStore,
    Tape,
    VerificationError,
    build_csr,
    finite_diff_check,
)


@pytest.fixture
def params() -> ParameterStore:
    rng = np.random.default_rng(3)

    params = ParameterStore()
    params.add("weight", rng.normal(size=(3, 2)))
    params.add("transform", rng.normal(size=(2, 3)))
    params.add("bias", rng.normal(size=(1, 3)))

    return params


def _make_loss(params: ParameterStore):
    matrix = build_csr([0, 1, 2, 2], [1, 0, 0, 2], [0.5, 1.0, 0.3, 0.7], (3, 3))

    def loss_fn(tape: Tape) -> Node:
        weight = tape.parameter(params["weight"])
        transform = tape.parameter(params["transform"])
        bias = tape.parameter(params["bias"])

        logits = tape.add(tape.matmul(weight, transform), bias)
        propagated = tape.spmm(matrix, logits)

        gate = tape.softmax(propagated, axis=1)
        mixed = tape.sum(tape.mul(gate, logits), axis=1)

        joint = tape.concat([weight, tape.normalize_rows(weight)], axis=1)
        picked = tape.gather(joint, np.array([0, 0, 2]))

        terms = [
            tape.mean(tape.log_sigmoid(mixed)),
            tape.sum(tape.logsumexp(logits, axis=1)),
            tape.mean(tape.exp(tape.scale(tape.columns(picked, 0, 2), 0.3))),
            tape.sum(tape.log(tape.sigmoid(tape.rows(logits, 1, 3)))),
        ]
        return tape.add_n(terms)

    return loss_fn


def test_finite_diff_check(params: ParameterStore) -> None:
    report = finite_diff_check(_make_loss(params), params)

    assert report.passed
    assert report.max_error < 1e-4
    assert [check.name for check in report.checks] == params.names()
    assert report.get_failed() == []


def test_finite_diff_check_restore(params: ParameterStore) -> None:
    values = params.get_values()
    finite_diff_check(_make_loss(params), params)

    for name, value in values.items():
        np.testing.assert_array_equal(params[name].value, value)


def test_finite_diff_check_fault_injection(params: ParameterStore) -> None:
    def corrupt(gradients: dict[str, np.ndarray]) -> None:
        gradients["transform"][1, 2] += 1.0

    report = finite_diff_check(_make_loss(params), params, gradient_hook=corrupt)

    assert report.passed is False
    assert report.get_failed() == ["transform"]

    failed = report.checks[1]
    assert failed.index == (1, 2)
    assert failed.analytic == pytest.approx(failed.numeric + 1.0)


def test_finite_diff_check_stop_gradient(params: ParameterStore) -> None:
    def loss_fn(tape: Tape) -> Node:
        weight = tape.parameter(params["weight"])
        return tape.sum(tape.mul(tape.stop_gradient(tape.mul(weight, weight)), weight))

    # The analytic gradient is weight^2 when the blocked term is held
    report = finite_diff_check(loss_fn, [params["weight"]])
    assert report.passed

    report = finite_diff_check(loss_fn, [params["weight"]], freeze_stop_gradient=False)
    assert report.passed is False


def test_finite_diff_check_error(params: ParameterStore) -> None:
    with pytest.raises(ConfigurationError):
        finite_diff_check(_make_loss(params), params, h=0.0)

    counter = [0]

    def unstable(tape: Tape) -> Node:
        counter[0] += 1
        return tape.scale(tape.sum(tape.parameter(params["bias"])), float(counter[0]))

    with pytest.raises(VerificationError):
        finite_diff_check(unstable, [params["bias"]])
