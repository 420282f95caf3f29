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
    "PreMode",
    "InMode",
    "PostMode",
    "SelfLoopMode",
    "DegreeMode",
    "Backbone",
    "HeadMode",
    "NegativeMode",
    "StopGradMode",
    "GateSharing",
    "Similarity",
    "BprReduction",
    "CandidateMode",
    "ErrorCode",
]

from enum import IntEnum, auto

# Members spelled "none" in the configuration file are named Off.


class PreMode(IntEnum):
    """Pre-behavior constraint: which upstream outputs seed the next
    behavior."""

    Full = 1
    Strict = auto()
    Off = auto()


class InMode(IntEnum):
    """In-behavior constraint: which relations propagate inside a
    behavior."""

    Full = 1
    Strict = auto()
    Off = auto()


class PostMode(IntEnum):
    """Post-behavior constraint: decoupled outputs per behavior or a single
    fused output."""

    Decoupled = 1
    Fused = auto()


class SelfLoopMode(IntEnum):
    """How many times the self term is added in one propagation layer."""

    PerRelation = 1
    Once = auto()


class DegreeMode(IntEnum):
    """Degree used to normalize the adjacency of one behavior."""

    PerBehavior = 1
    Joint = auto()


class Backbone(IntEnum):
    """Fusion network."""

    Cogcn = 1
    Lightgcn = auto()


class HeadMode(IntEnum):
    """Prediction head."""

    Dfme = 1
    Bilinear = auto()


class NegativeMode(IntEnum):
    """Negative set of the contrastive loss."""

    Full = 1
    Batch = auto()


class StopGradMode(IntEnum):
    """Where the stop-gradient wrapper is applied in the expert
    aggregation."""

    TargetOnly = 1
    All = auto()
    Off = auto()


class GateSharing(IntEnum):
    """Gate parameters shared by all tasks or one set per task."""

    Shared = 1
    PerTask = auto()


class Similarity(IntEnum):
    """Similarity function of the contrastive loss."""

    Inner = 1
    Cosine = auto()


class BprReduction(IntEnum):
    """Reduction of the pairwise loss over the triples of one behavior."""

    Mean = 1
    Sum = auto()


class CandidateMode(IntEnum):
    """Candidate items ranked against the held-out item."""

    Full = 1
    Sampled = auto()


class ErrorCode(IntEnum):
    """Faults recorded during training and verification."""

    NonFiniteGradient = 1
    NonFiniteLoss = auto()
    SamplerExhausted = auto()
    GradientMismatch = auto()
