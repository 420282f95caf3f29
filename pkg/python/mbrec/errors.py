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
    "ConfigurationError",
    "UsageError",
    "IngestionError",
    "SplitError",
    "NumericError",
    "VerificationError",
]


class ConfigurationError(ValueError):
    """Invalid configuration value, unknown key, or shape mismatch between
    operands."""

    exit_code = 1


class UsageError(RuntimeError):
    """Operation called in a state that does not allow it."""

    exit_code = 1


class IngestionError(ValueError):
    """Interaction files cannot be turned into an interaction set."""

    exit_code = 2


class SplitError(ValueError):
    """No train/test split can be produced."""

    exit_code = 2


class NumericError(RuntimeError):
    """Non-finite value met during optimization.

    Parameters
    ----------
    message : `str`
        Error message.
    name : `str`, optional
        Name of the offending parameter or loss term. (the default is "")
    """

    exit_code = 3

    def __init__(self, message: str, name: str = "") -> None:
        super().__init__(message)

        self.name = name


class VerificationError(RuntimeError):
    """A verification routine cannot produce a trustworthy result."""

    exit_code = 3
