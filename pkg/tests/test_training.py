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

import dataclasses
import logging
import math
from pathlib import Path

import numpy as np
import pytest
import yaml
from mbrec import (
    CHECKPOINT_FORMAT,
    AdamOptimizer,
    BprReduction,
    ErrorCode,
    FaultManager,
    InteractionSet,
    Model,
    NumericError,
    Split,
    Tape,
    Trainer,
    UsageError,
    bpr_loss,
    bpr_term,
    build_behavior_graphs,
    compute_losses,
    leave_one_out_split,
    load_checkpoint,
    make_config,
    make_synthetic_interactions,
    sample_triples,
    save_checkpoint,
    total_loss,
)
from pytestqt.qtbot import QtBot

TIMEOUT = 1000


@pytest.fixture
def split() -> Split:
    interactions = make_synthetic_interactions(
        num_users=20, num_items=30, seed=4, num_clusters=3, items_per_user=8
    )
    return leave_one_out_split(interactions, seed=0)


def _make_config(**overrides):
    content = dict(dim=8, layers=1, batch_size=128, epochs=2, patience=5)
    content.update(overrides)
    return make_config(content)


def _without_seconds(trainer: Trainer) -> list[dict]:
    logs = list()
    for epoch_log in trainer.epoch_logs:
        content = dataclasses.asdict(epoch_log)
        content.pop("seconds")
        logs.append(content)

    return logs


def test_sample_triples(split: Split) -> None:
    train = split.train
    batch = sample_triples(train, 50, np.random.default_rng(0))

    for k in range(train.num_behaviors):
        matrix = train.get_matrix(k).toarray()

        assert batch.size(k) == 50
        assert np.all(matrix[batch.users[k], batch.positives[k]] == 1)
        assert np.all(matrix[batch.users[k], batch.negatives[k]] == 0)


def test_sample_triples_empty_behavior() -> None:
    interactions = InteractionSet(
        num_users=2,
        num_items=3,
        behaviors=["view", "buy"],
        edges=[np.zeros((0, 2), dtype=np.int64), np.array([[0, 1], [1, 2]])],
        timestamps=[np.zeros(0), np.full(2, np.nan)],
    )

    batch = sample_triples(interactions, 4, np.random.default_rng(0))

    assert batch.size(0) == 0
    assert batch.size(1) == 4
    assert len(batch.get_all_users()) == 4
    assert len(batch.get_all_items()) == 8


def test_sample_triples_exhausted(caplog: pytest.LogCaptureFixture) -> None:
    # User 0 observed every item
    interactions = InteractionSet(
        num_users=2,
        num_items=3,
        behaviors=["buy"],
        edges=[np.array([[0, 0], [0, 1], [0, 2], [1, 0]])],
        timestamps=[np.full(4, np.nan)],
    )

    fault_manager = FaultManager()
    rng = np.random.default_rng(1)
    log = logging.getLogger("sampler")

    with caplog.at_level(logging.WARNING):
        for _ in range(3):
            batch = sample_triples(
                interactions,
                20,
                rng,
                rejection_limit=30,
                fault_manager=fault_manager,
                log=log,
            )

            assert np.all(batch.users[0] == 1)
            assert np.all(batch.negatives[0] != 0)

    assert fault_manager.errors == {ErrorCode.SamplerExhausted}
    assert fault_manager.reported == {(0, 0)}
    assert caplog.text.count("User 0 has no unobserved item") == 1


def test_bpr_term() -> None:
    tape = Tape()
    positive = tape.constant(np.array([2.0, 0.0]))
    negative = tape.constant(np.array([0.0, 0.0]))

    expected = [math.log(1.0 + math.exp(-2.0)), math.log(2.0)]

    assert float(bpr_term(positive, negative).value) == pytest.approx(
        sum(expected) / 2
    )
    assert float(
        bpr_term(positive, negative, reduction=BprReduction.Sum).value
    ) == pytest.approx(sum(expected))


def test_bpr_loss() -> None:
    tape = Tape()
    positives = [None, tape.constant(np.array([1.0])), tape.constant(np.array([0.0]))]
    negatives = [None, tape.constant(np.array([0.0])), tape.constant(np.array([1.0]))]

    loss, terms = bpr_loss(positives, negatives, [0.2, 0.3, 0.5], tape)

    assert terms[0] is None
    assert float(terms[1].value) == pytest.approx(math.log(1.0 + math.exp(-1.0)))
    assert float(terms[2].value) == pytest.approx(math.log(1.0 + math.exp(1.0)))
    assert float(loss.value) == pytest.approx(
        0.3 * float(terms[1].value) + 0.5 * float(terms[2].value)
    )

    empty, _ = bpr_loss([None], [None], [1.0], tape)
    assert float(empty.value) == 0.0


def test_total_loss() -> None:
    config = make_config(dict(dim=2, gamma=0.5, reg=0.1, behaviors=["buy"]))
    model = Model(config, 2, 2)

    tape = Tape()
    bpr = tape.constant(1.5)
    cl_terms = [tape.constant(2.0), tape.constant(4.0)]

    total, cl, reg = total_loss(bpr, cl_terms, model.params, config)

    values = model.params.get_values().values()
    squares = sum(float(np.sum(value**2)) for value in values)
    assert float(cl.value) == pytest.approx(6.0)
    assert float(reg.value) == pytest.approx(0.1 * squares)
    assert float(total.value) == pytest.approx(1.5 + 0.5 * 6.0 + 0.1 * squares)

    _, cl, _ = total_loss(bpr, list(), model.params, config)
    assert float(cl.value) == 0.0


def test_compute_losses(split: Split) -> None:
    config = _make_config(gamma=0.7)
    model = Model(config, split.train.num_users, split.train.num_items)
    graphs = build_behavior_graphs(split.train)
    batch = sample_triples(split.train, 16, np.random.default_rng(0))

    terms = compute_losses(model, graphs, batch, Tape())

    assert len(terms.bpr_per_behavior) == 3
    assert float(terms.cl.value) > 0.0
    assert float(terms.total.value) == pytest.approx(
        float(terms.bpr.value) + 0.7 * float(terms.cl.value) + float(terms.reg.value)
    )

    # Contrastive term switched off
    config = _make_config(contrastive_on=False)
    model = Model(config, split.train.num_users, split.train.num_items)
    assert float(compute_losses(model, graphs, batch, Tape()).cl.value) == 0.0


def test_train_step(split: Split) -> None:
    trainer = Trainer(_make_config(), split, seed=1)
    before = trainer.model.params.get_values()

    total, l_bpr, l_cl, l_reg = trainer.train_step(trainer.sample())

    assert np.isfinite(total)
    assert total == pytest.approx(l_bpr + l_cl + l_reg)
    assert not np.array_equal(
        before["user_embedding"], trainer.model.params["user_embedding"].value
    )
    assert trainer.optimizer.state.step_index == 1


def test_train_step_non_finite(split: Split) -> None:
    trainer = Trainer(_make_config(), split, seed=1)
    trainer.model.params["gate_bias"].value[0, 0] = np.nan
    before = trainer.model.params.get_values()

    with pytest.raises(NumericError):
        trainer.train_step(trainer.sample())

    after = trainer.model.params.get_values()
    for name, value in before.items():
        np.testing.assert_array_equal(after[name], value)

    assert trainer.fault_manager.errors == {ErrorCode.NonFiniteLoss}
    assert trainer.optimizer.state.step_index == 0


def test_checkpoint(tmp_path: Path, split: Split) -> None:
    trainer = Trainer(_make_config(), split)
    trainer.train_step(trainer.sample())

    filepath = tmp_path / "checkpoint.npz"
    save_checkpoint(filepath, trainer.model.params, trainer.optimizer, "abc", 7)

    checkpoint = load_checkpoint(filepath)

    assert checkpoint.config_hash == "abc"
    assert checkpoint.epoch == 7
    assert set(checkpoint.values.keys()) == set(trainer.model.params.names())
    for name, value in trainer.model.params.get_values().items():
        np.testing.assert_array_equal(checkpoint.values[name], value)

    assert checkpoint.moments.keys() == trainer.optimizer.get_moments().keys()


def test_load_checkpoint_unknown_format(tmp_path: Path) -> None:
    filepath = tmp_path / "other.npz"
    np.savez(filepath, format=np.array("other-format"))

    with pytest.raises(UsageError):
        load_checkpoint(filepath)

    assert CHECKPOINT_FORMAT != "other-format"


def test_get_num_batches(split: Split) -> None:
    train = split.train
    num_edges = sum(train.num_edges(k) for k in range(train.num_behaviors))

    trainer = Trainer(_make_config(batch_size=50), split)
    assert trainer.get_num_batches() == math.ceil(num_edges / 50)

    trainer = Trainer(_make_config(batch_size=100000), split)
    assert trainer.get_num_batches() == 1


def test_train(qtbot: QtBot, tmp_path: Path, split: Split) -> None:
    trainer = Trainer(_make_config(epochs=3, eval_every=2), split, seed=2)

    with qtbot.waitSignal(trainer.signal_training.checkpoint, timeout=TIMEOUT):
        result = trainer.train(directory=tmp_path)

    assert len(result.epoch_logs) == 3
    assert result.epoch_logs[0].hr10 is None
    assert result.epoch_logs[1].hr10 is not None
    assert result.epoch_logs[2].hr10 is not None
    assert result.best_epoch in (2, 3)
    assert 0.0 <= result.best_hr <= 1.0

    assert result.checkpoint == tmp_path / "checkpoint_seed2.npz"
    assert result.checkpoint.exists()
    assert load_checkpoint(result.checkpoint).epoch == result.best_epoch

    lines = (tmp_path / "epoch_log_seed2.yaml").read_text().splitlines()
    assert len(lines) == 3

    first = yaml.safe_load(lines[0])
    assert first["epoch"] == 1
    assert first["hr10"] is None
    assert yaml.safe_load(lines[1])["hr10"] == result.epoch_logs[1].hr10


def test_train_signals(qtbot: QtBot, split: Split) -> None:
    trainer = Trainer(_make_config(epochs=1), split)

    with qtbot.waitSignals(
        [trainer.signal_training.epoch, trainer.signal_training.evaluation],
        timeout=TIMEOUT,
    ):
        trainer.train()

    with qtbot.assertNotEmitted(trainer.signal_training.checkpoint):
        trainer.train()


def test_train_zero_lr(split: Split) -> None:
    trainer = Trainer(_make_config(epochs=3, lr=0.0), split)
    initial = trainer.evaluate()

    result = trainer.train()

    for epoch_log in result.epoch_logs:
        assert epoch_log.hr10 == initial.hr
        assert epoch_log.ndcg10 == initial.ndcg

    assert result.best_epoch == 1


def test_train_early_stop(split: Split) -> None:
    trainer = Trainer(_make_config(epochs=6, lr=0.0, patience=2), split)
    result = trainer.train()

    # Best at epoch 1, then two stale evaluations
    assert len(result.epoch_logs) == 3


def test_train_zero_epochs(split: Split) -> None:
    trainer = Trainer(_make_config(epochs=0), split)
    result = trainer.train()

    assert result.epoch_logs == list()
    assert result.best_epoch == 0
    assert result.best_hr == trainer.evaluate().hr


def test_train_keeps_best(split: Split) -> None:
    trainer = Trainer(_make_config(epochs=4, lr=0.05), split, seed=3)
    result = trainer.train()

    assert trainer.evaluate().hr == result.best_hr


def test_train_deterministic(split: Split) -> None:
    first = Trainer(_make_config(), split, seed=5)
    first.train()
    second = Trainer(_make_config(), split, seed=5)
    second.train()

    assert _without_seconds(first) == _without_seconds(second)
    for name, value in first.model.params.get_values().items():
        np.testing.assert_array_equal(second.model.params[name].value, value)


def test_cache_forward_single_batch(split: Split) -> None:
    # One batch per epoch makes the cached forward pass exact
    plain = Trainer(_make_config(batch_size=100000), split, seed=6)
    plain.train()
    cached = Trainer(_make_config(batch_size=100000, cache_forward=True), split, seed=6)
    cached.train()

    assert _without_seconds(plain) == _without_seconds(cached)


def test_cache_forward_frozen_parameters(split: Split) -> None:
    # Several batches reuse the epoch-start forward pass, which is exact while
    # the parameters do not move
    plain = Trainer(_make_config(batch_size=32, lr=0.0), split, seed=6)
    cached = Trainer(
        _make_config(batch_size=32, lr=0.0, cache_forward=True), split, seed=6
    )
    assert cached.get_num_batches() > 1

    plain.train()
    cached.train()

    assert _without_seconds(plain) == _without_seconds(cached)


def test_adam_optimizer_shared(split: Split) -> None:
    trainer = Trainer(_make_config(), split)

    assert isinstance(trainer.optimizer, AdamOptimizer)
    assert trainer.optimizer.lr == trainer.config.lr
