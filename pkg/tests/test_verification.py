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
    ConfigurationError,
    apply_variant,
    check_gradients,
    check_oracle,
    check_stop_gradient,
    complete_fixture,
    get_fixture_config,
    load_fixture,
    make_config,
    make_random_fixture,
    run_verification,
)


@pytest.fixture
def fixture():
    return load_fixture()


def test_complete_fixture(fixture) -> None:
    config = get_fixture_config(fixture, head_mode="bilinear")
    completed = complete_fixture(fixture, config)

    assert sorted(completed.params.keys()) == [
        "item_embedding",
        "relation_0",
        "relation_1",
        "user_embedding",
    ]
    np.testing.assert_array_equal(
        completed.params["user_embedding"], fixture.params["user_embedding"]
    )
    np.testing.assert_array_equal(completed.params["relation_0"], np.ones((1, 4)))


def test_complete_fixture_shape(fixture) -> None:
    config = get_fixture_config(fixture, dim=5)

    with pytest.raises(ConfigurationError):
        complete_fixture(fixture, config)


def test_check_gradients(fixture) -> None:
    result = check_gradients(fixture, get_fixture_config(fixture))

    assert result.passed
    assert result.max_error < 1e-4
    assert result.detail == "all parameters match"


def test_check_gradients_fault_injection(fixture) -> None:
    result = check_gradients(
        fixture, get_fixture_config(fixture), fault_injection=True
    )

    assert not result.passed
    assert "user_embedding" in result.detail


def test_check_stop_gradient(fixture) -> None:
    result = check_stop_gradient(fixture, get_fixture_config(fixture))

    assert result.passed, result.detail
    assert result.max_error < 1e-8


def test_check_stop_gradient_disabled(fixture) -> None:
    result = check_stop_gradient(
        fixture, get_fixture_config(fixture, stop_grad_mode="none")
    )

    assert result.passed
    assert result.max_error > 1e-6
    assert "as expected" in result.detail


def test_check_stop_gradient_not_applicable(fixture) -> None:
    for overrides in (dict(head_mode="bilinear"), dict(post_mode="fused")):
        result = check_stop_gradient(fixture, get_fixture_config(fixture, **overrides))

        assert result.passed
        assert result.detail == "not applicable"


def test_check_stop_gradient_three_behaviors() -> None:
    config = make_config(dict(dim=3, behaviors=["view", "cart", "buy"]))
    fixture = make_random_fixture(config, 3, 4, seed=1, density=0.5)

    result = check_stop_gradient(fixture, config)

    assert result.passed, result.detail


def test_check_oracle(fixture) -> None:
    result = check_oracle(fixture, get_fixture_config(fixture))

    assert result.passed
    assert result.max_error < 1e-10


@pytest.mark.parametrize(
    "variant",
    ["w/o-cogcn", "copf-f", "copf-d", "w/o-dfme", "w/o-con", "w/o-back", "all-sg"],
)
def test_run_verification_variants(fixture, variant: str) -> None:
    config = apply_variant(get_fixture_config(fixture), variant)

    report = run_verification(fixture, config)

    assert report.passed, report.to_dict()


def test_run_verification(fixture, caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.INFO):
        report = run_verification(
            fixture, get_fixture_config(fixture), log=logging.getLogger()
        )

    assert report.passed
    assert [check.name for check in report.checks] == [
        "finite_difference",
        "stop_gradient",
        "oracle",
    ]
    assert "Check oracle: pass" in caplog.text

    content = report.to_dict()
    assert content["passed"] is True
    assert len(content["checks"]) == 3


def test_run_verification_fault_injection(
    fixture, caplog: pytest.LogCaptureFixture
) -> None:
    with caplog.at_level(logging.INFO):
        report = run_verification(
            fixture,
            get_fixture_config(fixture),
            fault_injection=True,
            log=logging.getLogger(),
        )

    assert not report.passed
    assert not report.checks[0].passed
    assert report.checks[2].passed
    assert "Check finite_difference: FAIL" in caplog.text
