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
    "Config",
    "VARIANTS",
    "make_config",
    "read_config",
    "apply_variant",
    "parse_override",
    "parse_grid",
]

import dataclasses
import typing
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import yaml

from .enums import (
    Backbone,
    BprReduction,
    CandidateMode,
    DegreeMode,
    GateSharing,
    HeadMode,
    InMode,
    NegativeMode,
    PostMode,
    PreMode,
    SelfLoopMode,
    Similarity,
    StopGradMode,
)
from .errors import ConfigurationError, UsageError
from .utils import get_enum_name, hash_text, parse_enum, read_yaml_file

# Settings of the named variants, applied on top of a configuration
VARIANTS: dict[str, dict[str, typing.Any]] = {
    "w/o-cogcn": dict(backbone=Backbone.Lightgcn),
    "copf-p": dict(pre_mode=PreMode.Off),
    "copf-a": dict(in_mode=InMode.Off),
    "copf-f": dict(pre_mode=PreMode.Off, in_mode=InMode.Off),
    "copf-c": dict(pre_mode=PreMode.Strict, in_mode=InMode.Strict),
    "copf-b": dict(pre_mode=PreMode.Strict),
    "copf-h": dict(in_mode=InMode.Strict),
    "copf-d": dict(
        post_mode=PostMode.Fused, head_mode=HeadMode.Bilinear, contrastive_on=False
    ),
    "w/o-dfme": dict(head_mode=HeadMode.Bilinear, contrastive_on=False),
    "w/o-con": dict(gamma=0.0, contrastive_on=False),
    "w/o-for": dict(fitting_on=False),
    "w/o-back": dict(stop_grad_mode=StopGradMode.Off),
    "all-sg": dict(stop_grad_mode=StopGradMode.All),
    "w/o-fit": dict(fitting_on=False, stop_grad_mode=StopGradMode.Off),
    "full": dict(),
    "single-behavior": dict(single_behavior=True),
}


@dataclass
class Config:
    """Configuration of the data, network, head, training and evaluation.

    The last behavior in the list is the target behavior.

    With cache_forward, the fusion network runs once at the start of each
    epoch and every batch of the epoch reuses these representations and their
    tape. After the first optimizer step the later batches see stale forward
    values of the fusion network, and the tape grows with every batch until
    the epoch ends. The result equals the plain run only with one batch per
    epoch or a zero learning rate.
    """

    behaviors: list[str] = field(default_factory=lambda: ["view", "cart", "buy"])

    # Fusion network
    layers: int = 2
    dim: int = 64
    pre_mode: PreMode = PreMode.Full
    in_mode: InMode = InMode.Full
    post_mode: PostMode = PostMode.Decoupled
    self_loop_mode: SelfLoopMode = SelfLoopMode.PerRelation
    degree_mode: DegreeMode = DegreeMode.PerBehavior
    backbone: Backbone = Backbone.Cogcn

    # Prediction head
    head_mode: HeadMode = HeadMode.Dfme
    tau: float = 0.5
    alpha: float = 0.1
    beta: float = 0.001
    gamma: float = 1.0
    neg_mode: NegativeMode = NegativeMode.Full
    similarity: Similarity = Similarity.Inner
    contrastive_on: bool = True
    fitting_on: bool = True
    stop_grad_mode: StopGradMode = StopGradMode.TargetOnly
    gate_sharing: GateSharing = GateSharing.Shared

    # Training. Empty loss weights mean the uniform weights.
    loss_weights: list[float] = field(default_factory=list)
    reg: float = 0.01
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 2048
    epochs: int = 100
    seed: int = 0
    num_seeds: int = 5
    bpr_reduction: BprReduction = BprReduction.Mean
    cache_forward: bool = False
    rejection_limit: int = 100
    single_behavior: bool = False

    # Evaluation
    eval_every: int = 1
    patience: int = 20
    topk: int = 10
    exclude_auxiliary: bool = False
    candidate_mode: CandidateMode = CandidateMode.Full
    num_sampled_candidates: int = 99
    threads: int = 1

    @property
    def num_behaviors(self) -> int:
        return len(self.behaviors)

    @property
    def target_index(self) -> int:
        return len(self.behaviors) - 1

    def get_loss_weights(self) -> list[float]:
        """Get the loss weight of each behavior.

        Returns
        -------
        `list` [`float`]
            Weights summing to 1.
        """

        if len(self.loss_weights) == 0:
            return [1.0 / self.num_behaviors] * self.num_behaviors

        return [float(weight) for weight in self.loss_weights]

    def validate(self) -> None:
        """Validate the values.

        Raises
        ------
        `ConfigurationError`
            Invalid value.
        """

        if len(self.behaviors) == 0:
            raise ConfigurationError("At least one behavior is needed.")

        if len(set(self.behaviors)) != len(self.behaviors):
            raise ConfigurationError(f"Duplicated behavior names: {self.behaviors}.")

        minimums = dict(
            layers=1,
            dim=1,
            batch_size=1,
            epochs=0,
            num_seeds=1,
            rejection_limit=1,
            eval_every=1,
            patience=1,
            topk=1,
            num_sampled_candidates=1,
            threads=1,
        )
        for name, minimum in minimums.items():
            if getattr(self, name) < minimum:
                raise ConfigurationError(
                    f"{name} should be >= {minimum}: {getattr(self, name)}."
                )

        for name in ("alpha", "beta", "gamma", "reg", "lr"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(
                    f"{name} should be >= 0: {getattr(self, name)}."
                )

        if self.tau <= 0.0:
            raise ConfigurationError(f"tau should be > 0: {self.tau}.")

        if self.adam_eps <= 0.0:
            raise ConfigurationError(f"adam_eps should be > 0: {self.adam_eps}.")

        for name in ("adam_beta1", "adam_beta2"):
            if not (0.0 <= getattr(self, name) < 1.0):
                raise ConfigurationError(
                    f"{name} should be in [0, 1): {getattr(self, name)}."
                )

        if len(self.loss_weights) != 0:
            if len(self.loss_weights) != self.num_behaviors:
                raise ConfigurationError(
                    f"Need {self.num_behaviors} loss weights, got {self.loss_weights}."
                )

            if min(self.loss_weights) < 0.0:
                raise ConfigurationError(
                    f"Loss weights should be >= 0: {self.loss_weights}."
                )

            if abs(sum(self.loss_weights) - 1.0) > 1e-9:
                raise ConfigurationError(
                    f"Loss weights should sum to 1: {self.loss_weights}."
                )

    def to_dict(self) -> dict[str, typing.Any]:
        """Convert to the plain mapping written in the configuration file.

        Returns
        -------
        `dict`
            Enums are written by name.
        """

        content: dict[str, typing.Any] = dict()
        for item in dataclasses.fields(self):
            value = getattr(self, item.name)
            if isinstance(value, IntEnum):
                value = get_enum_name(value)
            elif isinstance(value, list):
                value = list(value)
            content[item.name] = value

        return content

    def hash(self) -> str:
        """Hash of the canonical yaml dump.

        Returns
        -------
        `str`
            Hexadecimal SHA-256 digest.
        """
        return hash_text(yaml.safe_dump(self.to_dict(), sort_keys=True))


def _convert(item: dataclasses.Field, value: typing.Any) -> typing.Any:
    default = (
        item.default_factory()  # type: ignore[misc]
        if item.default is dataclasses.MISSING
        else item.default
    )

    if isinstance(default, IntEnum):
        try:
            return parse_enum(type(default), value)
        except ValueError as error:
            raise ConfigurationError(f"{item.name}: {error}") from error

    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{item.name} should be a boolean: {value!r}.")
        return value

    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{item.name} should be an integer: {value!r}.")
        return value

    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{item.name} should be a number: {value!r}.")
        return float(value)

    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{item.name} should be a list: {value!r}.")
        if item.name == "behaviors":
            return [str(name) for name in value]
        return [float(weight) for weight in value]

    return value


def make_config(
    content: dict[str, typing.Any] | None = None, **overrides: typing.Any
) -> Config:
    """Make the validated configuration.

    Parameters
    ----------
    content : `dict` or None, optional
        Values by key. (the default is None)
    **overrides : `dict`
        Values applied after the content.

    Returns
    -------
    config : `Config`
        Validated configuration.

    Raises
    ------
    `ConfigurationError`
        Unknown key or invalid value.
    """

    merged = dict() if content is None else dict(content)
    merged.update(overrides)

    items = {item.name: item for item in dataclasses.fields(Config)}
    values: dict[str, typing.Any] = dict()
    for name, value in merged.items():
        if name not in items:
            raise ConfigurationError(f"{name} does not exist in the Config class.")

        values[name] = _convert(items[name], value)

    config = Config(**values)
    config.validate()

    return config


def read_config(
    filepath: Path | str | None = None, **overrides: typing.Any
) -> Config:
    """Read the configuration file.

    Parameters
    ----------
    filepath : `pathlib.Path`, `str`, or None, optional
        Yaml file of a flat mapping. If None, the defaults are used. (the
        default is None)
    **overrides : `dict`
        Values applied after the file.

    Returns
    -------
    `Config`
        Validated configuration.

    Raises
    ------
    `ConfigurationError`
        The file is not a mapping, or it has an unknown key or invalid value.
    """

    content: dict = dict()
    if filepath is not None:
        content = read_yaml_file(filepath) or dict()
        if not isinstance(content, dict):
            raise ConfigurationError(f"Configuration file {filepath} is not a mapping.")

    return make_config(content, **overrides)


def apply_variant(config: Config, name: str) -> Config:
    """Apply the named variant on the configuration.

    Parameters
    ----------
    config : `Config`
        Base configuration.
    name : `str`
        Variant name in VARIANTS.

    Returns
    -------
    `Config`
        New configuration.

    Raises
    ------
    `UsageError`
        Unknown variant.
    """

    if name not in VARIANTS:
        raise UsageError(f"Unknown variant: {name!r}, use {list(VARIANTS.keys())}.")

    settings = dict(VARIANTS[name])
    if settings.get("single_behavior", False):
        settings["behaviors"] = [config.behaviors[-1]]
        settings["loss_weights"] = []

    variant = dataclasses.replace(config, **settings)
    variant.validate()

    return variant


def parse_override(text: str) -> tuple[str, typing.Any]:
    """Parse the "key=value" override of the command line.

    Parameters
    ----------
    text : `str`
        Override. The value is parsed as yaml, e.g. "layers=3" or
        "behaviors=[view, buy]".

    Returns
    -------
    `tuple`
        Key and value.

    Raises
    ------
    `UsageError`
        No "=" in the text.
    """

    if "=" not in text:
        raise UsageError(f"Override should be key=value: {text!r}.")

    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def parse_grid(text: str) -> tuple[str, list[typing.Any]]:
    """Parse the "key=v1,v2,..." grid axis of the command line.

    Parameters
    ----------
    text : `str`
        Grid axis, e.g. "layers=1,2,3,4" or "tau=0.1,0.2".

    Returns
    -------
    `tuple`
        Key and the values parsed as yaml.

    Raises
    ------
    `UsageError`
        No "=" in the text or no value.
    """

    key, value = parse_override(text)
    pieces = [piece.strip() for piece in str(value).split(",") if piece.strip()]
    if (value is None) or (len(pieces) == 0):
        raise UsageError(f"Grid axis has no value: {text!r}.")

    return key, [yaml.safe_load(piece) for piece in pieces]
