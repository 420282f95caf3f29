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
    "RankResult",
    "EvaluationResult",
    "rank_from_scores",
    "get_candidate_mask",
    "rank_items",
    "hr_ndcg",
    "evaluate",
]

import math
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .data_graph import BehaviorGraph, Split
from .enums import CandidateMode
from .model import InferenceState, Model

# Number of users scored together
CHUNK_SIZE = 64


@dataclass
class RankResult:
    """Rank of the held-out item of one user (1-based)."""

    user: int
    rank: int
    num_candidates: int


@dataclass
class EvaluationResult:
    """Metrics with the rank of every test user."""

    hr: float
    ndcg: float
    topk: int
    results: list[RankResult] = field(default_factory=list)


def rank_from_scores(
    user: int, scores: np.ndarray, held_out: int, candidates: np.ndarray
) -> RankResult:
    """Rank the held-out item by the descending score. Ties are broken by the
    ascending item id.

    Parameters
    ----------
    user : `int`
        User id.
    scores : `numpy.ndarray`
        Score of every item.
    held_out : `int`
        Held-out item id.
    candidates : `numpy.ndarray`
        Boolean mask of the candidate items. The held-out item is always a
        candidate.

    Returns
    -------
    `RankResult`
        Rank.
    """

    candidates = candidates.copy()
    candidates[held_out] = True

    score = scores[held_out]
    higher = np.count_nonzero(candidates & (scores > score))
    tied = np.count_nonzero(candidates[:held_out] & (scores[:held_out] == score))

    return RankResult(
        user=int(user),
        rank=int(1 + higher + tied),
        num_candidates=int(np.count_nonzero(candidates)),
    )


def get_candidate_mask(
    split: Split,
    user: int,
    held_out: int,
    config: Config,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Get the candidate items of the user.

    The training target items of the user are excluded, and the auxiliary
    items too when config.exclude_auxiliary is True. In the sampled mode, a
    random subset of the remaining items is kept.

    Parameters
    ----------
    split : `Split`
        Split.
    user : `int`
        User id.
    held_out : `int`
        Held-out item id.
    config : `Config`
        Configuration.
    rng : `numpy.random.Generator` or None, optional
        Generator of the sampled mode. (the default is None)

    Returns
    -------
    candidates : `numpy.ndarray`
        Boolean mask over the items, the held-out item included.
    """

    train = split.train
    candidates = np.ones(train.num_items, dtype=bool)

    behaviors = (
        range(train.num_behaviors)
        if config.exclude_auxiliary
        else [train.target_index]
    )
    for k in behaviors:
        matrix = train.get_matrix(k)
        start, stop = matrix.indptr[user], matrix.indptr[user + 1]
        candidates[matrix.indices[start:stop]] = False

    candidates[held_out] = False

    if config.candidate_mode == CandidateMode.Sampled:
        if rng is None:
            rng = np.random.default_rng([config.seed, user])

        pool = np.flatnonzero(candidates)
        size = min(config.num_sampled_candidates, len(pool))
        candidates[:] = False
        candidates[rng.choice(pool, size=size, replace=False)] = True

    candidates[held_out] = True

    return candidates


def rank_items(
    state: InferenceState, split: Split, user: int, config: Config
) -> RankResult:
    """Rank the held-out item of the test user among the candidates.

    Parameters
    ----------
    state : `InferenceState`
        Frozen factors.
    split : `Split`
        Split.
    user : `int`
        Test user.
    config : `Config`
        Configuration.

    Returns
    -------
    `RankResult`
        Rank.

    Raises
    ------
    `ValueError`
        The user is not in the test set.
    """

    position = np.flatnonzero(split.test_users == user)
    if len(position) == 0:
        raise ValueError(f"User {user} is not in the test set.")

    held_out = int(split.test_items[position[0]])
    scores = state.score(np.array([user]))[0]

    return rank_from_scores(
        user, scores, held_out, get_candidate_mask(split, user, held_out, config)
    )


def hr_ndcg(results: typing.Sequence[RankResult], k: int = 10) -> tuple[float, float]:
    """Hit ratio and NDCG at k, averaged in the ascending user order.

    Parameters
    ----------
    results : `list` [`RankResult`]
        Ranks.
    k : `int`, optional
        Cutoff. (the default is 10)

    Returns
    -------
    hr : `float`
        Hit ratio.
    ndcg : `float`
        Normalized discounted cumulative gain.

    Raises
    ------
    `ValueError`
        No result.
    """

    if len(results) == 0:
        raise ValueError("No rank result to average.")

    hits = 0.0
    gains = 0.0
    for result in sorted(results, key=lambda item: item.user):
        if result.rank <= k:
            hits += 1.0
            gains += 1.0 / math.log2(result.rank + 1)

    return hits / len(results), gains / len(results)


def _rank_chunk(
    state: InferenceState,
    split: Split,
    users: np.ndarray,
    items: np.ndarray,
    config: Config,
) -> list[RankResult]:
    scores = state.score(users)
    return [
        rank_from_scores(
            user,
            scores[row],
            int(item),
            get_candidate_mask(split, int(user), int(item), config),
        )
        for row, (user, item) in enumerate(zip(users, items))
    ]


def evaluate(
    model: Model,
    graphs: BehaviorGraph,
    split: Split,
    config: Config,
    threads: int | None = None,
) -> EvaluationResult:
    """Evaluate the target task on the test users.

    Parameters
    ----------
    model : `Model`
        Model.
    graphs : `BehaviorGraph`
        Operators of the training interactions.
    split : `Split`
        Split.
    config : `Config`
        Configuration.
    threads : `int` or None, optional
        Number of worker threads. If None, config.threads is used. (the
        default is None)

    Returns
    -------
    `EvaluationResult`
        Metrics at config.topk.
    """

    state = model.infer(graphs)

    # Build the cached matrices before the workers read them
    for k in range(split.train.num_behaviors):
        split.train.get_matrix(k)

    threads = config.threads if threads is None else threads
    chunks = [
        (
            split.test_users[start : start + CHUNK_SIZE],
            split.test_items[start : start + CHUNK_SIZE],
        )
        for start in range(0, len(split.test_users), CHUNK_SIZE)
    ]

    results: list[RankResult] = list()
    if threads <= 1:
        for users, items in chunks:
            results.extend(_rank_chunk(state, split, users, items, config))
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            futures = [
                executor.submit(_rank_chunk, state, split, users, items, config)
                for users, items in chunks
            ]
            for future in futures:
                results.extend(future.result())

    results.sort(key=lambda item: item.user)
    hr, ndcg = hr_ndcg(results, k=config.topk)

    return EvaluationResult(hr=hr, ndcg=ndcg, topk=config.topk, results=results)
