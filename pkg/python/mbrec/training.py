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
    "CHECKPOINT_FORMAT",
    "TripleBatch",
    "LossTerms",
    "EpochLog",
    "Checkpoint",
    "TrainResult",
    "sample_triples",
    "bpr_term",
    "bpr_loss",
    "total_loss",
    "compute_losses",
    "save_checkpoint",
    "load_checkpoint",
    "Trainer",
]

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cogcn import BehaviorRepresentations
from .config import Config
from .data_graph import BehaviorGraph, InteractionSet, Split, build_behavior_graphs
from .dfme import contrastive_loss
from .enums import BprReduction, ErrorCode, HeadMode
from .errors import NumericError, UsageError
from .evaluation import EvaluationResult, evaluate
from .fault_manager import FaultManager
from .model import Model
from .optimizer import AdamOptimizer
from .signals import SignalTraining
from .tensor_autograd import Node, ParameterStore, Tape
from .utils import format_yaml_line

CHECKPOINT_FORMAT = "mbrec-checkpoint-1"


@dataclass
class TripleBatch:
    """(u, s, t) triples of every behavior: (u, s) observed and (u, t)
    unobserved under the behavior."""

    users: list[np.ndarray]
    positives: list[np.ndarray]
    negatives: list[np.ndarray]

    def size(self, k: int) -> int:
        return int(self.users[k].shape[0])

    def get_all_users(self) -> np.ndarray:
        return np.concatenate(self.users)

    def get_all_items(self) -> np.ndarray:
        return np.concatenate(self.positives + self.negatives)


@dataclass
class LossTerms:
    """Nodes of the loss components."""

    total: Node
    bpr: Node
    cl: Node
    reg: Node
    bpr_per_behavior: list[Node | None] = field(default_factory=list)


@dataclass
class EpochLog:
    """Summary of one epoch. The metrics are None when not evaluated."""

    epoch: int
    loss: float
    l_bpr: float
    l_cl: float
    l_reg: float
    hr10: float | None
    ndcg10: float | None
    seconds: float

    def to_line(self) -> str:
        return format_yaml_line(dataclasses.asdict(self))


@dataclass
class Checkpoint:
    """Content of a checkpoint file."""

    values: dict[str, np.ndarray]
    moments: dict[str, np.ndarray]
    config_hash: str
    epoch: int


@dataclass
class TrainResult:
    """Result of a training run."""

    epoch_logs: list[EpochLog]
    best_epoch: int
    best_hr: float
    best_ndcg: float
    checkpoint: Path | None = None


def sample_triples(
    interactions: InteractionSet,
    batch_size: int,
    rng: np.random.Generator,
    rejection_limit: int = 100,
    fault_manager: FaultManager | None = None,
    log: logging.Logger | None = None,
) -> TripleBatch:
    """Sample the training triples of every behavior.

    The positives are drawn uniformly from the edges of the behavior. The
    negative item is redrawn uniformly until the pair is unobserved; a triple
    still without a valid negative after the rejection limit is skipped and
    its user is reported once.

    Parameters
    ----------
    interactions : `InteractionSet`
        Training interactions.
    batch_size : `int`
        Number of triples per behavior.
    rng : `numpy.random.Generator`
        Random number generator.
    rejection_limit : `int`, optional
        Number of draws of the negative item. (the default is 100)
    fault_manager : `FaultManager` or None, optional
        Fault manager to report the skipped users once. (the default is None)
    log : `logging.Logger` or None, optional
        A logger. (the default is None)

    Returns
    -------
    `TripleBatch`
        Triples. A behavior without edges has no triple.
    """

    num_items = interactions.num_items

    users_all = list()
    positives_all = list()
    negatives_all = list()
    for k in range(interactions.num_behaviors):
        edges = interactions.edges[k]
        if edges.shape[0] == 0:
            users_all.append(np.zeros(0, dtype=np.int64))
            positives_all.append(np.zeros(0, dtype=np.int64))
            negatives_all.append(np.zeros(0, dtype=np.int64))
            continue

        matrix = interactions.get_matrix(k)

        index = rng.integers(edges.shape[0], size=batch_size)
        users = edges[index, 0]
        positives = edges[index, 1]

        negatives = rng.integers(num_items, size=batch_size)
        valid = np.asarray(matrix[users, negatives]).ravel() == 0
        for _ in range(rejection_limit - 1):
            pending = np.flatnonzero(~valid)
            if len(pending) == 0:
                break

            negatives[pending] = rng.integers(num_items, size=len(pending))
            valid[pending] = (
                np.asarray(matrix[users[pending], negatives[pending]]).ravel() == 0
            )

        if not np.all(valid):
            for user in np.unique(users[~valid]):
                key = (k, int(user))
                if (fault_manager is not None) and (not fault_manager.report_once(key)):
                    continue

                detail = (
                    f"User {user} has no unobserved item under behavior "
                    f"{interactions.behaviors[k]}, skipped."
                )
                if fault_manager is not None:
                    fault_manager.add_error(ErrorCode.SamplerExhausted, detail=detail)
                if log is not None:
                    log.warning(detail)

        users_all.append(users[valid])
        positives_all.append(positives[valid])
        negatives_all.append(negatives[valid])

    return TripleBatch(users_all, positives_all, negatives_all)


def bpr_term(
    positive: Node, negative: Node, reduction: BprReduction = BprReduction.Mean
) -> Node:
    """Pairwise loss -ln(sigmoid(positive - negative)) of one behavior.

    Parameters
    ----------
    positive : `Node`
        Predictions of the observed pairs.
    negative : `Node`
        Predictions of the unobserved pairs.
    reduction : enum `BprReduction`, optional
        Reduction over the triples. (the default is BprReduction.Mean)

    Returns
    -------
    `Node`
        Scalar loss.
    """

    tape = positive.tape
    terms = tape.scale(tape.log_sigmoid(tape.sub(positive, negative)), -1.0)

    if reduction == BprReduction.Mean:
        return tape.mean(terms)

    return tape.sum(terms)


def bpr_loss(
    positives: list[Node | None],
    negatives: list[Node | None],
    weights: list[float],
    tape: Tape,
    reduction: BprReduction = BprReduction.Mean,
) -> tuple[Node, list[Node | None]]:
    """Weighted pairwise loss over the behaviors.

    Parameters
    ----------
    positives : `list`
        Predictions of the observed pairs of each behavior. None for a
        behavior without triples.
    negatives : `list`
        Predictions of the unobserved pairs of each behavior.
    weights : `list` [`float`]
        Loss weight of each behavior.
    tape : `Tape`
        Tape to record on.
    reduction : enum `BprReduction`, optional
        Reduction over the triples of one behavior. (the default is
        BprReduction.Mean)

    Returns
    -------
    loss : `Node`
        Scalar loss.
    terms : `list`
        Unweighted loss of each behavior, None for a behavior without
        triples.
    """

    terms: list[Node | None] = list()
    weighted = list()
    for positive, negative, weight in zip(positives, negatives, weights):
        if positive is None or negative is None:
            terms.append(None)
            continue

        term = bpr_term(positive, negative, reduction=reduction)
        terms.append(term)
        weighted.append(tape.scale(term, weight))

    if len(weighted) == 0:
        return tape.constant(0.0), terms

    return tape.add_n(weighted), terms


def total_loss(
    bpr: Node, cl_terms: list[Node], params: ParameterStore, config: Config
) -> tuple[Node, Node, Node]:
    """Joint loss L = L_bpr + gamma * sum(L_cl) + mu * ||params||^2.

    Parameters
    ----------
    bpr : `Node`
        Pairwise loss.
    cl_terms : `list` [`Node`]
        Contrastive loss of each auxiliary behavior.
    params : `ParameterStore`
        Parameters of the L2 term.
    config : `Config`
        Configuration.

    Returns
    -------
    total : `Node`
        Joint loss.
    cl : `Node`
        Unweighted sum of the contrastive terms.
    reg : `Node`
        Weighted L2 term.
    """

    tape = bpr.tape

    cl = tape.add_n(cl_terms) if len(cl_terms) != 0 else tape.constant(0.0)

    squares = [
        tape.sum(tape.mul(tape.parameter(parameter), tape.parameter(parameter)))
        for parameter in params
    ]
    reg = tape.scale(tape.add_n(squares), config.reg)

    total = tape.add(tape.add(bpr, tape.scale(cl, config.gamma)), reg)

    return total, cl, reg


def compute_losses(
    model: Model,
    graphs: BehaviorGraph,
    batch: TripleBatch,
    tape: Tape,
    reps: BehaviorRepresentations | None = None,
) -> LossTerms:
    """Build the joint loss of the batch on the tape.

    Parameters
    ----------
    model : `Model`
        Model.
    graphs : `BehaviorGraph`
        Operators.
    batch : `TripleBatch`
        Triples.
    tape : `Tape`
        Tape to record on.
    reps : `BehaviorRepresentations` or None, optional
        Representations recorded on the tape already. If None, the fusion
        network is run. (the default is None)

    Returns
    -------
    `LossTerms`
        Loss components.
    """

    config = model.config
    if reps is None:
        reps = model.forward(graphs, tape=tape)

    cache: dict = dict()
    positives: list[Node | None] = list()
    negatives: list[Node | None] = list()
    for k in range(config.num_behaviors):
        if batch.size(k) == 0:
            positives.append(None)
            negatives.append(None)
            continue

        positives.append(
            model.predict(
                reps, graphs, k, batch.users[k], batch.positives[k], cache=cache
            )
        )
        negatives.append(
            model.predict(
                reps, graphs, k, batch.users[k], batch.negatives[k], cache=cache
            )
        )

    bpr, per_behavior = bpr_loss(
        positives,
        negatives,
        config.get_loss_weights(),
        tape,
        reduction=config.bpr_reduction,
    )

    cl_terms = list()
    if (
        config.contrastive_on
        and config.head_mode == HeadMode.Dfme
        and config.num_behaviors > 1
    ):
        users = batch.get_all_users()
        items = batch.get_all_items()
        for k in range(config.num_behaviors - 1):
            cl_terms.append(contrastive_loss(reps, k, config, users=users, items=items))

    total, cl, reg = total_loss(bpr, cl_terms, model.params, config)

    return LossTerms(
        total=total, bpr=bpr, cl=cl, reg=reg, bpr_per_behavior=per_behavior
    )


def save_checkpoint(
    filepath: Path | str,
    params: ParameterStore,
    optimizer: AdamOptimizer,
    config_hash: str,
    epoch: int,
) -> None:
    """Save the parameters, the optimizer moments and the configuration hash.

    Parameters
    ----------
    filepath : `pathlib.Path` or `str`
        Npz file path.
    params : `ParameterStore`
        Parameters.
    optimizer : `AdamOptimizer`
        Optimizer.
    config_hash : `str`
        Hash of the configuration.
    epoch : `int`
        Epoch of the parameters.
    """

    arrays: dict[str, np.ndarray] = {
        "format": np.array(CHECKPOINT_FORMAT),
        "config_hash": np.array(config_hash),
        "epoch": np.array(epoch, dtype=np.int64),
    }
    for name, value in params.get_values().items():
        arrays[f"param/{name}"] = value
    for name, value in optimizer.get_moments().items():
        arrays[f"optim/{name}"] = value

    np.savez(filepath, **arrays)


def load_checkpoint(filepath: Path | str) -> Checkpoint:
    """Load the checkpoint saved by save_checkpoint().

    Parameters
    ----------
    filepath : `pathlib.Path` or `str`
        Npz file path.

    Returns
    -------
    `Checkpoint`
        Content.

    Raises
    ------
    `UsageError`
        Unknown format.
    """

    with np.load(filepath) as arrays:
        content = {name: arrays[name] for name in arrays.files}

    tag = str(content.get("format", ""))
    if tag != CHECKPOINT_FORMAT:
        raise UsageError(f"Unknown checkpoint format {tag!r} in {filepath}.")

    return Checkpoint(
        values={
            name[len("param/") :]: value
            for name, value in content.items()
            if name.startswith("param/")
        },
        moments={
            name[len("optim/") :]: value
            for name, value in content.items()
            if name.startswith("optim/")
        },
        config_hash=str(content["config_hash"]),
        epoch=int(content["epoch"]),
    )


class Trainer(object):
    """Trainer of the model on one split with one seed.

    Parameters
    ----------
    config : `Config`
        Configuration.
    split : `Split`
        Split. Its behaviors must be config.behaviors.
    graphs : `BehaviorGraph` or None, optional
        Operators of the training interactions. If None, they are built. (the
        default is None)
    seed : `int` or None, optional
        Seed of the initialization and the sampler. If None, config.seed is
        used. (the default is None)
    log : `logging.Logger` or None, optional
        A logger. If None, a logger will be instantiated. (the default is
        None)
    fault_manager : `FaultManager` or None, optional
        Fault manager. If None, a new one is used. (the default is None)

    Attributes
    ----------
    config : `Config`
        Configuration.
    split : `Split`
        Split.
    graphs : `BehaviorGraph`
        Operators.
    seed : `int`
        Seed.
    log : `logging.Logger`
        A logger.
    fault_manager : `FaultManager`
        Fault manager.
    signal_training : `SignalTraining`
        Signal of the progress.
    model : `Model`
        Model.
    optimizer : `AdamOptimizer`
        Optimizer.
    epoch_logs : `list` [`EpochLog`]
        Logs of the finished epochs.
    """

    def __init__(
        self,
        config: Config,
        split: Split,
        graphs: BehaviorGraph | None = None,
        seed: int | None = None,
        log: logging.Logger | None = None,
        fault_manager: FaultManager | None = None,
    ) -> None:
        self.config = config
        self.split = split
        self.graphs = (
            build_behavior_graphs(split.train, degree_mode=config.degree_mode)
            if graphs is None
            else graphs
        )
        self.seed = config.seed if seed is None else seed

        if log is None:
            self.log = logging.getLogger(type(self).__name__)
        else:
            self.log = log.getChild(type(self).__name__)

        self.fault_manager = FaultManager() if fault_manager is None else fault_manager
        self.signal_training = SignalTraining()

        train = split.train
        self.model = Model(
            config, train.num_users, train.num_items, seed=self.seed, log=self.log
        )
        self.optimizer = AdamOptimizer(
            self.model.params,
            lr=config.lr,
            betas=(config.adam_beta1, config.adam_beta2),
            eps=config.adam_eps,
        )

        self.epoch_logs: list[EpochLog] = list()

        # Separate stream from the initialization
        self._rng = np.random.default_rng([self.seed, 1])

    def get_num_batches(self) -> int:
        """Get the number of batches of one epoch.

        Returns
        -------
        `int`
            ceil(training edges / batch size), at least 1.
        """

        train = self.split.train
        num_edges = sum(train.num_edges(k) for k in range(train.num_behaviors))
        return max(1, math.ceil(num_edges / self.config.batch_size))

    def sample(self) -> TripleBatch:
        """Sample one batch.

        Returns
        -------
        `TripleBatch`
            Triples.
        """
        return sample_triples(
            self.split.train,
            self.config.batch_size,
            self._rng,
            rejection_limit=self.config.rejection_limit,
            fault_manager=self.fault_manager,
            log=self.log,
        )

    def train_step(
        self,
        batch: TripleBatch,
        tape: Tape | None = None,
        reps: BehaviorRepresentations | None = None,
    ) -> tuple[float, float, float, float]:
        """Run one optimization step.

        Parameters
        ----------
        batch : `TripleBatch`
            Triples.
        tape : `Tape` or None, optional
            Tape holding the cached representations. (the default is None)
        reps : `BehaviorRepresentations` or None, optional
            Cached representations. (the default is None)

        Returns
        -------
        `tuple`
            Values of the total, pairwise, contrastive and L2 terms.

        Raises
        ------
        `NumericError`
            Non-finite loss or gradient. The parameters are not updated.
        """

        self.model.params.zero_grad()

        if tape is None:
            tape = Tape()
            reps = None

        terms = compute_losses(self.model, self.graphs, batch, tape, reps=reps)

        total = float(terms.total.value)
        if not np.isfinite(total):
            self.fault_manager.add_error(ErrorCode.NonFiniteLoss, detail=str(total))
            raise NumericError(f"Non-finite loss: {total}.", name="loss")

        tape.backward(terms.total)

        try:
            self.optimizer.step()
        except NumericError as error:
            self.fault_manager.add_error(ErrorCode.NonFiniteGradient, detail=error.name)
            raise

        return (
            total,
            float(terms.bpr.value),
            float(terms.cl.value),
            float(terms.reg.value),
        )

    def run_epoch(self, epoch: int) -> EpochLog:
        """Run one epoch.

        With cache_forward, the batches share one forward pass of the fusion
        network computed at the start of the epoch (see `Config`).

        Parameters
        ----------
        epoch : `int`
            1-based epoch index.

        Returns
        -------
        `EpochLog`
            Mean loss components over the batches. The metrics are None.
        """

        time_start = time.perf_counter()

        tape = None
        reps = None
        if self.config.cache_forward:
            tape = Tape()
            reps = self.model.forward(self.graphs, tape=tape)

        num_batches = self.get_num_batches()
        sums = np.zeros(4)
        for _ in range(num_batches):
            sums += np.array(self.train_step(self.sample(), tape=tape, reps=reps))

        means = sums / num_batches

        return EpochLog(
            epoch=epoch,
            loss=float(means[0]),
            l_bpr=float(means[1]),
            l_cl=float(means[2]),
            l_reg=float(means[3]),
            hr10=None,
            ndcg10=None,
            seconds=time.perf_counter() - time_start,
        )

    def evaluate(self) -> EvaluationResult:
        """Evaluate the current parameters.

        Returns
        -------
        `EvaluationResult`
            Metrics.
        """
        return evaluate(self.model, self.graphs, self.split, self.config)

    def train(self, directory: Path | str | None = None) -> TrainResult:
        """Train the model with the evaluation cadence and early stopping.

        The best parameters by the hit ratio are kept in the model at the end
        and written to "checkpoint_seed<seed>.npz". Each epoch is appended to
        "epoch_log_seed<seed>.yaml" as one line.

        Parameters
        ----------
        directory : `pathlib.Path`, `str`, or None, optional
            Run directory. If None, nothing is written. (the default is None)

        Returns
        -------
        `TrainResult`
            Result.

        Raises
        ------
        `NumericError`
            Non-finite loss or gradient. The last written checkpoint is kept.
        """

        filepath_log = None
        filepath_checkpoint = None
        if directory is not None:
            directory = Path(directory)
            directory.mkdir(parents=True, exist_ok=True)

            filepath_log = directory / f"epoch_log_seed{self.seed}.yaml"
            filepath_log.write_text("")
            filepath_checkpoint = directory / f"checkpoint_seed{self.seed}.npz"

        config_hash = self.config.hash()

        best_hr = -1.0
        best_ndcg = 0.0
        best_epoch = 0
        best_values = self.model.params.get_values()
        num_stale = 0

        def _keep_best(epoch: int, result: EvaluationResult) -> bool:
            nonlocal best_hr, best_ndcg, best_epoch, best_values

            if result.hr <= best_hr:
                return False

            best_hr, best_ndcg, best_epoch = result.hr, result.ndcg, epoch
            best_values = self.model.params.get_values()

            if filepath_checkpoint is not None:
                save_checkpoint(
                    filepath_checkpoint,
                    self.model.params,
                    self.optimizer,
                    config_hash,
                    epoch,
                )
                self.signal_training.checkpoint.emit(str(filepath_checkpoint))

            return True

        self.log.info(
            f"Train {self.config.epochs} epochs of {self.get_num_batches()} "
            f"batches with the seed {self.seed}."
        )

        for epoch in range(1, self.config.epochs + 1):
            try:
                epoch_log = self.run_epoch(epoch)
            except NumericError as error:
                self.log.error(f"Abort at epoch {epoch}: {error}")
                raise

            if (epoch % self.config.eval_every == 0) or (epoch == self.config.epochs):
                result = self.evaluate()
                epoch_log.hr10 = result.hr
                epoch_log.ndcg10 = result.ndcg
                self.signal_training.evaluation.emit((epoch, result.hr, result.ndcg))

                num_stale = 0 if _keep_best(epoch, result) else (num_stale + 1)

            self.epoch_logs.append(epoch_log)
            line = epoch_log.to_line()
            if filepath_log is not None:
                with open(filepath_log, "a") as file:
                    file.write(line + "\n")

            self.log.info(line)
            self.signal_training.epoch.emit(epoch_log)

            if num_stale >= self.config.patience:
                self.log.info(f"Early stop at epoch {epoch}.")
                break

        if best_hr < 0.0:
            _keep_best(0, self.evaluate())

        self.model.params.set_values(best_values)

        return TrainResult(
            epoch_logs=list(self.epoch_logs),
            best_epoch=best_epoch,
            best_hr=best_hr,
            best_ndcg=best_ndcg,
            checkpoint=filepath_checkpoint,
        )
