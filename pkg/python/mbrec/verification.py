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
    "CheckResult",
    "VerificationReport",
    "complete_fixture",
    "make_fixture_model",
    "check_gradients",
    "check_stop_gradient",
    "check_oracle",
    "run_verification",
]

import dataclasses
import logging
import typing
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .data_graph import BehaviorGraph, build_behavior_graphs
from .dfme import fitting_propagate, gate, specific_expert
from .enums import HeadMode, PostMode, StopGradMode
from .gradient_check import finite_diff_check
from .model import Model
from .oracle import (
    DenseFixture,
    dense_forward,
    get_fixture_batch,
    get_fixture_interactions,
    numerical_gradient,
)
from .tensor_autograd import Node, Tape
from .training import bpr_term, compute_losses

# Thresholds of the checks
GRADIENT_TOLERANCE = 1e-4
ZERO_PATH_LIMIT = 1e-8
NONZERO_PATH_LIMIT = 1e-6
ORACLE_LIMIT = 1e-10


@dataclass
class CheckResult:
    """Result of one verification check."""

    name: str
    passed: bool
    max_error: float
    detail: str = ""


@dataclass
class VerificationReport:
    """Results of the verification checks."""

    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> dict[str, typing.Any]:
        return dict(
            passed=self.passed,
            checks=[
                dict(
                    name=check.name,
                    passed=check.passed,
                    max_error=float(check.max_error),
                    detail=check.detail,
                )
                for check in self.checks
            ],
        )


def complete_fixture(fixture: DenseFixture, config: Config) -> DenseFixture:
    """Complete the fixture parameters for the configuration.

    The parameters the configuration needs but the fixture lacks (e.g. the
    relation vectors of the bilinear head) take the seeded initial values of
    the model. The ones the configuration does not use are dropped.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.
    config : `Config`
        Configuration.

    Returns
    -------
    `DenseFixture`
        Fixture holding exactly the parameters of the model.

    Raises
    ------
    `ConfigurationError`
        A fixture parameter has another shape than the model's.
    """

    params = Model(config, fixture.num_users, fixture.num_items, seed=0).params
    values = params.get_values()
    for name in values.keys():
        if name in fixture.params:
            values[name] = np.array(fixture.params[name], dtype=np.float64)

    # Shape check
    params.set_values(values)

    return dataclasses.replace(fixture, params=values)


def make_fixture_model(
    fixture: DenseFixture, config: Config
) -> tuple[Model, BehaviorGraph]:
    """Make the model holding the fixture parameters.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture with the complete parameters.
    config : `Config`
        Configuration.

    Returns
    -------
    model : `Model`
        Model.
    graphs : `BehaviorGraph`
        Operators of the fixture interactions.
    """

    model = Model(config, fixture.num_users, fixture.num_items)
    model.params.set_values(fixture.params)

    graphs = build_behavior_graphs(
        get_fixture_interactions(fixture), degree_mode=config.degree_mode
    )

    return model, graphs


def check_gradients(
    fixture: DenseFixture, config: Config, fault_injection: bool = False
) -> CheckResult:
    """Compare the tape gradients of the joint loss with the central
    differences.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.
    config : `Config`
        Configuration.
    fault_injection : `bool`, optional
        Corrupt the analytic gradient of the first parameter. (the default is
        False)

    Returns
    -------
    `CheckResult`
        Result naming the failed parameters.
    """

    fixture = complete_fixture(fixture, config)
    model, graphs = make_fixture_model(fixture, config)
    batch = get_fixture_batch(fixture)

    def loss_fn(tape: Tape) -> Node:
        return compute_losses(model, graphs, batch, tape).total

    def corrupt(gradients: dict[str, np.ndarray]) -> None:
        name = next(iter(gradients))
        gradients[name].flat[0] += 1.0

    report = finite_diff_check(
        loss_fn,
        model.params,
        tol=GRADIENT_TOLERANCE,
        gradient_hook=corrupt if fault_injection else None,
    )

    failed = report.get_failed()
    detail = (
        "all parameters match"
        if len(failed) == 0
        else f"mismatched parameters: {', '.join(failed)}"
    )

    return CheckResult("finite_difference", report.passed, report.max_error, detail)


def _max_abs(nodes: list[Node]) -> float:
    return max(
        (0.0 if node.grad is None else float(np.max(np.abs(node.grad))))
        for node in nodes
    )


def check_stop_gradient(fixture: DenseFixture, config: Config) -> CheckResult:
    """Check that the pairwise loss of every auxiliary task sends no gradient
    into its target-expert term, while the target task's loss does reach the
    target representations.

    With the stop-gradient mode "none", the nonzero paths are expected and the
    check passes with a note.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.
    config : `Config`
        Configuration.

    Returns
    -------
    `CheckResult`
        Result. The error is the largest auxiliary gradient on the watched
        nodes.
    """

    if (
        config.head_mode != HeadMode.Dfme
        or config.post_mode == PostMode.Fused
        or config.num_behaviors < 2
    ):
        return CheckResult("stop_gradient", True, 0.0, "not applicable")

    fixture = complete_fixture(fixture, config)
    model, graphs = make_fixture_model(fixture, config)
    batch = get_fixture_batch(fixture)
    target = config.target_index
    if batch.size(target) == 0:
        return CheckResult("stop_gradient", True, 0.0, "not applicable")

    tape = Tape()
    reps = model.forward(graphs, tape=tape)
    cache: dict = dict()

    def _task_loss(k: int, terms: list[Node] | None) -> Node:
        positive = model.predict(
            reps,
            graphs,
            k,
            batch.users[k],
            batch.positives[k],
            cache=cache,
            terms=terms,
        )
        negative = model.predict(
            reps,
            graphs,
            k,
            batch.users[k],
            batch.negatives[k],
            cache=cache,
            terms=terms,
        )
        return bpr_term(positive, negative, reduction=config.bpr_reduction)

    # Layer 0 may be the shared initial table
    representations = list(reps.layers[target][1:]) + [
        reps.users[target],
        reps.items[target],
    ]

    loss_target = _task_loss(target, None)

    max_auxiliary = 0.0
    for k in range(config.num_behaviors):
        if k == target or batch.size(k) == 0:
            continue

        terms: list[Node] = list()
        loss_auxiliary = _task_loss(k, terms)

        # Terms are collected for the positives, then the negatives
        num_experts = config.num_behaviors
        watched = [terms[target], terms[num_experts + target]] + representations

        tape.backward(loss_auxiliary)
        max_auxiliary = max(max_auxiliary, _max_abs(watched))

    tape.backward(loss_target)
    min_target = min(
        (0.0 if node.grad is None else float(np.max(np.abs(node.grad))))
        for node in representations
    )

    # Parameters reached only through the target-expert term
    max_numeric = 0.0
    if config.num_behaviors == 2 and config.fitting_on:
        auxiliary = 1 - target
        gradients = numerical_gradient(fixture, config, selection=f"bpr_{auxiliary}")
        max_numeric = float(np.max(np.abs(gradients[f"fitting_relation_{auxiliary}"])))

    if config.stop_grad_mode == StopGradMode.Off:
        return CheckResult(
            "stop_gradient",
            True,
            max_auxiliary,
            (
                f"stop gradient disabled: auxiliary paths are nonzero "
                f"({max_auxiliary:.3e}) as expected for the variant"
            ),
        )

    passed = (
        max_auxiliary < ZERO_PATH_LIMIT
        and max_numeric < ZERO_PATH_LIMIT
        and min_target > NONZERO_PATH_LIMIT
    )
    detail = (
        f"auxiliary analytic {max_auxiliary:.3e}, auxiliary numeric "
        f"{max_numeric:.3e}, target {min_target:.3e}"
    )

    return CheckResult(
        "stop_gradient", passed, max(max_auxiliary, max_numeric), detail
    )


def check_oracle(fixture: DenseFixture, config: Config) -> CheckResult:
    """Compare the sparse engine with the dense oracle on all intermediates.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.
    config : `Config`
        Configuration.

    Returns
    -------
    `CheckResult`
        Result with the largest absolute difference.
    """

    fixture = complete_fixture(fixture, config)
    model, graphs = make_fixture_model(fixture, config)
    trace = dense_forward(fixture, config)

    tape = Tape(requires_grad=False)
    reps = model.forward(graphs, tape=tape)

    users = np.repeat(np.arange(fixture.num_users), fixture.num_items)
    items = np.tile(np.arange(fixture.num_items), fixture.num_users)

    pairs: list[tuple[np.ndarray, np.ndarray]] = list()
    for k, layers in enumerate(reps.layers):
        for node, value in zip(layers, trace.layers[k]):
            pairs.append((node.value, value))

    for k in range(len(reps.users)):
        pairs.append((reps.users[k].value, trace.users[k]))
        pairs.append((reps.items[k].value, trace.items[k]))

    for k in range(config.num_behaviors):
        if config.head_mode == HeadMode.Dfme:
            for j in range(config.num_behaviors):
                if j == k or not config.fitting_on:
                    engine = specific_expert(reps, j, users, items).value
                else:
                    joint = fitting_propagate(
                        reps, j, k, graphs, model.params, config
                    ).value
                    engine = joint[users] * joint[items + fixture.num_users]
                pairs.append((engine, trace.experts[k][j]))

            pairs.append(
                (
                    gate(reps, k, users, items, model.params, config).value,
                    trace.gates[k],
                )
            )

        prediction = model.predict(reps, graphs, k, users, items).value
        pairs.append((prediction, trace.predictions[k]))

    max_error = max(float(np.max(np.abs(engine - dense))) for engine, dense in pairs)

    return CheckResult(
        "oracle",
        max_error < ORACLE_LIMIT,
        max_error,
        f"{len(pairs)} intermediates compared",
    )


def run_verification(
    fixture: DenseFixture,
    config: Config,
    fault_injection: bool = False,
    log: logging.Logger | None = None,
) -> VerificationReport:
    """Run the gradient, stop-gradient and oracle checks.

    Parameters
    ----------
    fixture : `DenseFixture`
        Fixture.
    config : `Config`
        Configuration.
    fault_injection : `bool`, optional
        Corrupt one analytic gradient. (the default is False)
    log : `logging.Logger` or None, optional
        A logger. (the default is None)

    Returns
    -------
    `VerificationReport`
        Report.
    """

    report = VerificationReport()
    for check in (
        check_gradients(fixture, config, fault_injection=fault_injection),
        check_stop_gradient(fixture, config),
        check_oracle(fixture, config),
    ):
        report.checks.append(check)
        if log is not None:
            level = logging.INFO if check.passed else logging.ERROR
            log.log(
                level,
                f"Check {check.name}: {'pass' if check.passed else 'FAIL'}, "
                f"max error {check.max_error:.3e} ({check.detail}).",
            )

    return report
