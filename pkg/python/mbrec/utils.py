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
    "get_data_dir",
    "read_yaml_file",
    "write_yaml_file",
    "format_yaml_line",
    "get_enum_name",
    "parse_enum",
    "hash_text",
    "xavier_uniform",
]

import hashlib
import re
import typing
from enum import IntEnum
from pathlib import Path

import numpy as np
import yaml


def get_data_dir() -> Path:
    """Get the directory of the packaged data files.

    Returns
    -------
    `pathlib.Path`
        Data directory.
    """

    return Path(__file__).resolve().parent / "data"


def read_yaml_file(filepath: Path | str) -> typing.Any:
    """Read the yaml file.

    Parameters
    ----------
    filepath : `pathlib.Path` or `str`
        Yaml file path.

    Returns
    -------
    `any`
        Content of the file.
    """

    with open(filepath, "r") as file:
        return yaml.safe_load(file)


def write_yaml_file(filepath: Path | str, content: typing.Any) -> None:
    """Write the yaml file.

    Parameters
    ----------
    filepath : `pathlib.Path` or `str`
        Yaml file path.
    content : `any`
        Content to write.
    """

    with open(filepath, "w") as file:
        yaml.safe_dump(content, file, sort_keys=False)


def format_yaml_line(content: dict) -> str:
    """Format the mapping as a single-line yaml document.

    Parameters
    ----------
    content : `dict`
        Mapping of plain values.

    Returns
    -------
    `str`
        Flow-style yaml without the trailing newline.
    """

    return yaml.safe_dump(
        content, default_flow_style=True, sort_keys=False, width=float("inf")
    ).strip()


def get_enum_name(member: IntEnum) -> str:
    """Get the configuration spelling of the enum member.

    Parameters
    ----------
    member : `enum.IntEnum`
        Enum member.

    Returns
    -------
    `str`
        Lower-case spelling with hyphens, e.g. "per-relation". The member Off
        is spelled "none".
    """

    if member.name == "Off":
        return "none"

    return re.sub(r"(?<!^)(?=[A-Z])", "-", member.name).lower()


def parse_enum(enum_class: type[IntEnum], value: typing.Any) -> IntEnum:
    """Parse the configuration spelling of the enum.

    Parameters
    ----------
    enum_class : `type`
        Enum class.
    value : `any`
        Member, integer value, or spelling such as "target-only".

    Returns
    -------
    `enum.IntEnum`
        Enum member.

    Raises
    ------
    `ValueError`
        Unknown spelling.
    """

    if isinstance(value, enum_class):
        return value

    if isinstance(value, int) and not isinstance(value, bool):
        return enum_class(value)

    key = str(value).replace("-", "").replace("_", "").lower()
    if key == "none":
        key = "off"

    for member in enum_class:
        if member.name.lower() == key:
            return member

    names = [get_enum_name(member) for member in enum_class]
    raise ValueError(f"Unknown {enum_class.__name__} value: {value!r}, use {names}.")


def hash_text(text: str) -> str:
    """Hash the text.

    Parameters
    ----------
    text : `str`
        Text.

    Returns
    -------
    `str`
        Hexadecimal SHA-256 digest.
    """

    return hashlib.sha256(text.encode()).hexdigest()


def xavier_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan: tuple[int, int] | None = None
) -> np.ndarray:
    """Draw the Xavier (Glorot) uniform initialization.

    Parameters
    ----------
    rng : `numpy.random.Generator`
        Random number generator.
    shape : `tuple`
        Shape of the array.
    fan : `tuple` or None, optional
        (fan_in, fan_out). If None, the last two dimensions of the shape are
        used; a vector uses (1, length). (the default is None)

    Returns
    -------
    `numpy.ndarray`
        Array of 64-bit reals.
    """

    if fan is None:
        fan = (1, shape[0]) if len(shape) == 1 else (shape[-2], shape[-1])

    bound = np.sqrt(6.0 / (fan[0] + fan[1]))
    return rng.uniform(-bound, bound, size=shape).astype(np.float64)
