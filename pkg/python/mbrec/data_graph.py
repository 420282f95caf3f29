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
    "SNAPSHOT_FORMAT",
    "InteractionSet",
    "BehaviorGraph",
    "Split",
    "load_interactions",
    "write_interactions",
    "select_behaviors",
    "build_behavior_graph",
    "build_behavior_graphs",
    "leave_one_out_split",
    "save_snapshot",
    "load_snapshot",
    "dataset_hash",
    "dataset_stats",
    "make_synthetic_interactions",
]

import hashlib
import logging
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .enums import DegreeMode
from .errors import IngestionError, SplitError
from .tensor_autograd import build_csr
from .utils import read_yaml_file, write_yaml_file

SNAPSHOT_FORMAT = "mbrec-snapshot-1"

log = logging.getLogger(__name__)


@dataclass
class InteractionSet:
    """Deduplicated interactions of every behavior with contiguous ids.

    Attributes
    ----------
    num_users : `int`
        Number of users, M.
    num_items : `int`
        Number of items, N.
    behaviors : `list` [`str`]
        Ordered behavior names. The last one is the target behavior.
    edges : `list` [`numpy.ndarray`]
        (u, v) pairs of each behavior as an (E, 2) integer array.
    timestamps : `list` [`numpy.ndarray`]
        Timestamp of each edge. NaN is a missing timestamp.
    user_ids : `list` [`str`]
        External user id of each internal id.
    item_ids : `list` [`str`]
        External item id of each internal id.
    """

    num_users: int
    num_items: int
    behaviors: list[str]
    edges: list[np.ndarray]
    timestamps: list[np.ndarray]
    user_ids: list[str] = field(default_factory=list)
    item_ids: list[str] = field(default_factory=list)

    _matrices: dict[int, sparse.csr_matrix] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    @property
    def num_behaviors(self) -> int:
        return len(self.behaviors)

    @property
    def target_index(self) -> int:
        return len(self.behaviors) - 1

    def num_edges(self, k: int) -> int:
        return int(self.edges[k].shape[0])

    def get_matrix(self, k: int) -> sparse.csr_matrix:
        """Get the M x N interaction matrix of the behavior.

        Parameters
        ----------
        k : `int`
            Behavior index.

        Returns
        -------
        `scipy.sparse.csr_matrix`
            Binary matrix.
        """

        if k not in self._matrices:
            edges = self.edges[k]
            self._matrices[k] = build_csr(
                edges[:, 0],
                edges[:, 1],
                np.ones(edges.shape[0]),
                (self.num_users, self.num_items),
            )

        return self._matrices[k]


@dataclass(frozen=True)
class BehaviorGraph:
    """Adjacency and propagation operators of every behavior over the
    M + N joint nodes (users first, then items)."""

    num_users: int
    num_items: int
    adjacency: tuple[sparse.csr_matrix, ...]
    propagation: tuple[sparse.csr_matrix, ...]

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def num_behaviors(self) -> int:
        return len(self.propagation)


@dataclass
class Split:
    """Leave-one-out split of the target behavior.

    Attributes
    ----------
    train : `InteractionSet`
        Training interactions.
    test_users : `numpy.ndarray`
        Test users in ascending order.
    test_items : `numpy.ndarray`
        Held-out target item of each test user.
    """

    train: InteractionSet
    test_users: np.ndarray
    test_items: np.ndarray

    def get_test_pairs(self) -> list[tuple[int, int]]:
        return [
            (int(user), int(item))
            for user, item in zip(self.test_users, self.test_items)
        ]


def _parse_line(text: str, filepath: Path, line_number: int) -> tuple:
    separator = "\t" if "\t" in text else ","
    fields = [value.strip() for value in text.split(separator)]

    if len(fields) not in (2, 3) or (fields[0] == "") or (fields[1] == ""):
        raise IngestionError(
            f"{filepath}:{line_number}: expect user, item[, timestamp], got {text!r}."
        )

    timestamp = np.nan
    if len(fields) == 3 and fields[2] != "":
        try:
            timestamp = float(int(fields[2]))
        except ValueError:
            raise IngestionError(
                f"{filepath}:{line_number}: invalid timestamp {fields[2]!r}."
            )

    return fields[0], fields[1], timestamp


def load_interactions(
    paths: typing.Sequence[Path | str] | dict[str, Path | str],
    behavior_order: typing.Sequence[str],
) -> InteractionSet:
    """Load the interaction files.

    Each line is "user<TAB>item[<TAB>timestamp]" or the comma-separated
    equivalent. Lines starting with "#" are comments. Duplicated pairs inside
    one behavior keep the earliest timestamp; a pair without the timestamp
    keeps its first occurrence. The ids are mapped to contiguous integers by
    their first appearance, reading the files in the behavior order.

    Parameters
    ----------
    paths : `list` or `dict`
        Files by behavior name, or a list of files named after their behavior
        (e.g. "buy.txt").
    behavior_order : `list` [`str`]
        Ordered behavior names. The last one is the target behavior.

    Returns
    -------
    `InteractionSet`
        Interactions.

    Raises
    ------
    `IngestionError`
        Unknown behavior, unreadable file or line, or empty target behavior.
    """

    if isinstance(paths, dict):
        files = {str(name): Path(path) for name, path in paths.items()}
    else:
        files = {Path(path).stem: Path(path) for path in paths}

    for name, filepath in files.items():
        if name not in behavior_order:
            raise IngestionError(
                f"Unknown behavior {name!r} of the file {filepath}, "
                f"use {list(behavior_order)}."
            )

    user_map: dict[str, int] = dict()
    item_map: dict[str, int] = dict()

    edges = list()
    timestamps = list()
    for name in behavior_order:
        records: dict[tuple[int, int], float] = dict()

        filepath = files.get(name)
        if filepath is not None:
            try:
                with open(filepath, "r", encoding="utf-8") as file:
                    for line_number, line in enumerate(file, start=1):
                        text = line.strip()
                        if (text == "") or text.startswith("#"):
                            continue

                        user, item, timestamp = _parse_line(text, filepath, line_number)
                        pair = (
                            user_map.setdefault(user, len(user_map)),
                            item_map.setdefault(item, len(item_map)),
                        )

                        if pair not in records:
                            records[pair] = timestamp
                        elif timestamp < records[pair]:
                            # Comparisons with NaN are False
                            records[pair] = timestamp
            except (OSError, UnicodeDecodeError) as error:
                raise IngestionError(f"Cannot read {filepath}: {error}") from error

        if len(records) == 0:
            log.info(f"Behavior {name} has no interaction.")

        edges.append(np.array(list(records.keys()), dtype=np.int64).reshape(-1, 2))
        timestamps.append(np.array(list(records.values()), dtype=np.float64))

    if edges[-1].shape[0] == 0:
        raise IngestionError(
            f"Target behavior {behavior_order[-1]!r} has no interaction "
            f"(file: {files.get(behavior_order[-1])})."
        )

    return InteractionSet(
        num_users=len(user_map),
        num_items=len(item_map),
        behaviors=list(behavior_order),
        edges=edges,
        timestamps=timestamps,
        user_ids=list(user_map.keys()),
        item_ids=list(item_map.keys()),
    )


def write_interactions(
    interactions: InteractionSet, directory: Path | str
) -> list[Path]:
    """Write one tab-separated file per behavior with the external ids.

    Parameters
    ----------
    interactions : `InteractionSet`
        Interactions.
    directory : `pathlib.Path` or `str`
        Output directory.

    Returns
    -------
    filepaths : `list` [`pathlib.Path`]
        Files in the behavior order, named "<behavior>.txt".
    """

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    user_ids = interactions.user_ids or [
        str(idx) for idx in range(interactions.num_users)
    ]
    item_ids = interactions.item_ids or [
        str(idx) for idx in range(interactions.num_items)
    ]

    filepaths = list()
    for k, name in enumerate(interactions.behaviors):
        filepath = directory / f"{name}.txt"
        with open(filepath, "w", encoding="utf-8") as file:
            for (user, item), timestamp in zip(
                interactions.edges[k], interactions.timestamps[k]
            ):
                line = f"{user_ids[user]}\t{item_ids[item]}"
                if not np.isnan(timestamp):
                    line += f"\t{int(timestamp)}"
                file.write(line + "\n")

        filepaths.append(filepath)

    return filepaths


def select_behaviors(
    interactions: InteractionSet, names: typing.Sequence[str]
) -> InteractionSet:
    """Select the behaviors by name, keeping all ids.

    Parameters
    ----------
    interactions : `InteractionSet`
        Interactions.
    names : `list` [`str`]
        Ordered behavior names to keep.

    Returns
    -------
    `InteractionSet`
        Interactions of the selected behaviors.

    Raises
    ------
    `IngestionError`
        Unknown behavior name.
    """

    indices = list()
    for name in names:
        if name not in interactions.behaviors:
            raise IngestionError(
                f"Unknown behavior {name!r}, use {interactions.behaviors}."
            )
        indices.append(interactions.behaviors.index(name))

    return InteractionSet(
        num_users=interactions.num_users,
        num_items=interactions.num_items,
        behaviors=list(names),
        edges=[interactions.edges[k] for k in indices],
        timestamps=[interactions.timestamps[k] for k in indices],
        user_ids=interactions.user_ids,
        item_ids=interactions.item_ids,
    )


def _get_adjacency(interactions: InteractionSet, k: int) -> sparse.csr_matrix:
    num_users = interactions.num_users
    edges = interactions.edges[k]

    users = edges[:, 0]
    items = edges[:, 1] + num_users
    num_nodes = num_users + interactions.num_items

    return build_csr(
        np.concatenate([users, items]),
        np.concatenate([items, users]),
        np.ones(2 * edges.shape[0]),
        (num_nodes, num_nodes),
    )


def _normalize(
    adjacency: sparse.csr_matrix, degrees: np.ndarray
) -> sparse.csr_matrix:
    inverse = np.zeros_like(degrees)
    np.divide(1.0, degrees, out=inverse, where=degrees > 0)

    coo = adjacency.tocoo()
    return build_csr(coo.row, coo.col, coo.data * inverse[coo.row], adjacency.shape)


def build_behavior_graph(
    interactions: InteractionSet,
    k: int,
    degrees: np.ndarray | None = None,
) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Build the adjacency A_k and propagation operator P_k = D^-1 A_k of one
    behavior.

    Parameters
    ----------
    interactions : `InteractionSet`
        Interactions.
    k : `int`
        Behavior index.
    degrees : `numpy.ndarray` or None, optional
        Node degrees used by D. If None, the degrees of A_k are used. (the
        default is None)

    Returns
    -------
    adjacency : `scipy.sparse.csr_matrix`
        Symmetric (M+N) x (M+N) adjacency with zero diagonal blocks.
    propagation : `scipy.sparse.csr_matrix`
        Row-normalized adjacency. Zero-degree rows are zero.
    """

    adjacency = _get_adjacency(interactions, k)
    if degrees is None:
        degrees = np.asarray(adjacency.sum(axis=1), dtype=np.float64).ravel()

    return adjacency, _normalize(adjacency, degrees)


def build_behavior_graphs(
    interactions: InteractionSet, degree_mode: DegreeMode = DegreeMode.PerBehavior
) -> BehaviorGraph:
    """Build the operators of all behaviors.

    Parameters
    ----------
    interactions : `InteractionSet`
        Interactions.
    degree_mode : enum `DegreeMode`, optional
        Normalize by the degree of each behavior or by the degree summed over
        all behaviors. (the default is DegreeMode.PerBehavior)

    Returns
    -------
    `BehaviorGraph`
        Operators.
    """

    degrees = None
    if degree_mode == DegreeMode.Joint:
        degrees = np.zeros(interactions.num_users + interactions.num_items)
        for k in range(interactions.num_behaviors):
            degrees += np.asarray(
                _get_adjacency(interactions, k).sum(axis=1), dtype=np.float64
            ).ravel()

    adjacency = list()
    propagation = list()
    for k in range(interactions.num_behaviors):
        matrix_a, matrix_p = build_behavior_graph(interactions, k, degrees=degrees)
        adjacency.append(matrix_a)
        propagation.append(matrix_p)

    return BehaviorGraph(
        num_users=interactions.num_users,
        num_items=interactions.num_items,
        adjacency=tuple(adjacency),
        propagation=tuple(propagation),
    )


def leave_one_out_split(interactions: InteractionSet, seed: int = 0) -> Split:
    """Hold out the latest target interaction of every user who has at least
    two of them.

    Ties and missing timestamps are broken uniformly at random under the
    seed. Users with a single target interaction stay in training only.

    Parameters
    ----------
    interactions : `InteractionSet`
        Interactions.
    seed : `int`, optional
        Seed of the tie breaking. (the default is 0)

    Returns
    -------
    `Split`
        Split.

    Raises
    ------
    `SplitError`
        No target interaction, or no user qualifies for the test.
    """

    target = interactions.target_index
    edges = interactions.edges[target]
    timestamps = interactions.timestamps[target]

    if edges.shape[0] == 0:
        raise SplitError("Target behavior has no interaction.")

    rng = np.random.default_rng(seed)

    # Edge positions of each user in the file order
    positions: dict[int, list[int]] = dict()
    for position, user in enumerate(edges[:, 0]):
        positions.setdefault(int(user), list()).append(position)

    held_out = list()
    for user in sorted(positions.keys()):
        user_positions = np.array(positions[user])
        if len(user_positions) < 2:
            continue

        user_timestamps = timestamps[user_positions]
        if np.any(np.isnan(user_timestamps)):
            candidates = user_positions
        else:
            candidates = user_positions[user_timestamps == user_timestamps.max()]

        choice = 0 if len(candidates) == 1 else int(rng.integers(len(candidates)))
        held_out.append(int(candidates[choice]))

    if len(held_out) == 0:
        raise SplitError("No user has at least two target interactions.")

    held_out_array = np.array(held_out, dtype=np.int64)
    keep = np.ones(edges.shape[0], dtype=bool)
    keep[held_out_array] = False

    train_edges = list(interactions.edges)
    train_timestamps = list(interactions.timestamps)
    train_edges[target] = edges[keep]
    train_timestamps[target] = timestamps[keep]

    train = InteractionSet(
        num_users=interactions.num_users,
        num_items=interactions.num_items,
        behaviors=list(interactions.behaviors),
        edges=train_edges,
        timestamps=train_timestamps,
        user_ids=interactions.user_ids,
        item_ids=interactions.item_ids,
    )

    return Split(
        train=train,
        test_users=edges[held_out_array, 0].copy(),
        test_items=edges[held_out_array, 1].copy(),
    )


def _get_arrays(interactions: InteractionSet, split: Split) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = dict()
    for k in range(interactions.num_behaviors):
        arrays[f"edges_{k}"] = interactions.edges[k]
        arrays[f"timestamps_{k}"] = interactions.timestamps[k]
        arrays[f"train_edges_{k}"] = split.train.edges[k]
        arrays[f"train_timestamps_{k}"] = split.train.timestamps[k]

    arrays["test_users"] = split.test_users
    arrays["test_items"] = split.test_items
    arrays["user_ids"] = np.array(interactions.user_ids, dtype=np.str_)
    arrays["item_ids"] = np.array(interactions.item_ids, dtype=np.str_)

    return arrays


def dataset_hash(interactions: InteractionSet, split: Split) -> str:
    """Hash of the content of the interactions and the split.

    Parameters
    ----------
    interactions : `InteractionSet`
        Interactions.
    split : `Split`
        Split.

    Returns
    -------
    `str`
        Hexadecimal SHA-256 digest.
    """

    digest = hashlib.sha256()
    digest.update(repr(interactions.behaviors).encode())
    for name, array in _get_arrays(interactions, split).items():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(array).tobytes())

    return digest.hexdigest()


def save_snapshot(
    directory: Path | str, interactions: InteractionSet, split: Split
) -> str:
    """Save the interactions and the split.

    Two files are written: "snapshot.npz" with the arrays and "snapshot.yaml"
    with the format tag, the behaviors, the counts and the hash.

    Parameters
    ----------
    directory : `pathlib.Path` or `str`
        Output directory.
    interactions : `InteractionSet`
        Interactions.
    split : `Split`
        Split.

    Returns
    -------
    `str`
        Dataset hash.
    """

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    np.savez(directory / "snapshot.npz", **_get_arrays(interactions, split))

    digest = dataset_hash(interactions, split)
    write_yaml_file(
        directory / "snapshot.yaml",
        dict(
            format=SNAPSHOT_FORMAT,
            behaviors=list(interactions.behaviors),
            num_users=interactions.num_users,
            num_items=interactions.num_items,
            hash=digest,
        ),
    )

    return digest


def load_snapshot(directory: Path | str) -> tuple[InteractionSet, Split, str]:
    """Load the interactions and the split saved by save_snapshot().

    Parameters
    ----------
    directory : `pathlib.Path` or `str`
        Snapshot directory.

    Returns
    -------
    interactions : `InteractionSet`
        Interactions.
    split : `Split`
        Split.
    digest : `str`
        Dataset hash.

    Raises
    ------
    `IngestionError`
        Missing snapshot or unknown format.
    """

    directory = Path(directory)
    filepath_meta = directory / "snapshot.yaml"
    if not filepath_meta.exists():
        raise IngestionError(f"No snapshot in {directory}.")

    meta = read_yaml_file(filepath_meta)
    if meta.get("format") != SNAPSHOT_FORMAT:
        raise IngestionError(
            f"Unknown snapshot format {meta.get('format')!r}, "
            f"expect {SNAPSHOT_FORMAT!r}."
        )

    behaviors = list(meta["behaviors"])
    with np.load(directory / "snapshot.npz") as arrays:
        content = {name: arrays[name] for name in arrays.files}

    user_ids = [str(value) for value in content["user_ids"]]
    item_ids = [str(value) for value in content["item_ids"]]

    def _make(prefix: str) -> InteractionSet:
        return InteractionSet(
            num_users=int(meta["num_users"]),
            num_items=int(meta["num_items"]),
            behaviors=list(behaviors),
            edges=[
                content[f"{prefix}edges_{k}"].reshape(-1, 2)
                for k in range(len(behaviors))
            ],
            timestamps=[
                content[f"{prefix}timestamps_{k}"] for k in range(len(behaviors))
            ],
            user_ids=user_ids,
            item_ids=item_ids,
        )

    interactions = _make("")
    split = Split(
        train=_make("train_"),
        test_users=content["test_users"],
        test_items=content["test_items"],
    )

    return interactions, split, str(meta["hash"])


def dataset_stats(interactions: InteractionSet) -> dict[str, typing.Any]:
    """Statistics of the interactions.

    Parameters
    ----------
    interactions : `InteractionSet`
        Interactions.

    Returns
    -------
    `dict`
        Numbers of users, items, interactions of each behavior, all
        interactions and target interactions.
    """

    per_behavior = {
        name: interactions.num_edges(k) for k, name in enumerate(interactions.behaviors)
    }

    return dict(
        users=interactions.num_users,
        items=interactions.num_items,
        interactions=per_behavior,
        total=int(sum(per_behavior.values())),
        target=interactions.num_edges(interactions.target_index),
    )


def make_synthetic_interactions(
    num_users: int = 1000,
    num_items: int = 500,
    behaviors: typing.Sequence[str] = ("view", "cart", "buy"),
    seed: int = 0,
    num_clusters: int = 10,
    items_per_user: int = 24,
    in_cluster_ratio: float = 0.8,
    keep_ratio: float = 0.5,
) -> InteractionSet:
    """Make the synthetic interactions with a planted upstream to target
    dependence.

    Every user belongs to a taste cluster of items. The first behavior draws
    items mostly inside the cluster. Each following behavior keeps a random
    subset of the interactions of the previous one, so the downstream
    interactions are predictable from the upstream ones.

    Parameters
    ----------
    num_users : `int`, optional
        Number of users. (the default is 1000)
    num_items : `int`, optional
        Number of items. (the default is 500)
    behaviors : `list` [`str`], optional
        Ordered behavior names. (the default is ("view", "cart", "buy"))
    seed : `int`, optional
        Random seed. (the default is 0)
    num_clusters : `int`, optional
        Number of taste clusters. (the default is 10)
    items_per_user : `int`, optional
        Number of first-behavior items of each user. (the default is 24)
    in_cluster_ratio : `float`, optional
        Ratio of the first-behavior items inside the user's cluster. (the
        default is 0.8)
    keep_ratio : `float`, optional
        Ratio of the interactions kept by each following behavior. (the
        default is 0.5)

    Returns
    -------
    `InteractionSet`
        Interactions with the timestamps ordered by behavior.

    Raises
    ------
    `ValueError`
        More items per user than items.
    """

    if items_per_user > num_items:
        raise ValueError(
            f"Items per user ({items_per_user}) exceed the items ({num_items})."
        )

    rng = np.random.default_rng(seed)

    item_clusters = rng.integers(num_clusters, size=num_items)
    cluster_items = [
        np.flatnonzero(item_clusters == idx) for idx in range(num_clusters)
    ]
    user_clusters = rng.integers(num_clusters, size=num_users)

    edges: list[list[tuple[int, int]]] = [list() for _ in behaviors]
    timestamps: list[list[float]] = [list() for _ in behaviors]
    for user in range(num_users):
        members = cluster_items[user_clusters[user]]
        num_in = min(int(round(items_per_user * in_cluster_ratio)), len(members))

        chosen = set(rng.choice(members, size=num_in, replace=False).tolist())
        while len(chosen) < items_per_user:
            chosen.add(int(rng.integers(num_items)))

        items = np.array(sorted(chosen), dtype=np.int64)
        for k in range(len(behaviors)):
            if k > 0:
                keep = rng.random(len(items)) < keep_ratio
                # At least two interactions survive so the user can be tested
                if keep.sum() < 2:
                    forced = rng.choice(
                        len(items), size=min(2, len(items)), replace=False
                    )
                    keep[forced] = True
                items = items[keep]

            order = rng.permutation(len(items))
            for rank, position in enumerate(order):
                edges[k].append((user, int(items[position])))
                timestamps[k].append(float(k * items_per_user + rank))

    return InteractionSet(
        num_users=num_users,
        num_items=num_items,
        behaviors=list(behaviors),
        edges=[np.array(values, dtype=np.int64).reshape(-1, 2) for values in edges],
        timestamps=[np.array(values, dtype=np.float64) for values in timestamps],
        user_ids=[f"u{idx}" for idx in range(num_users)],
        item_ids=[f"i{idx}" for idx in range(num_items)],
    )
