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

__all__ = ["FaultManager"]

from .enums import ErrorCode
from .signals import SignalError


class FaultManager(object):
    """Fault manager to record the faults met during training.

    Attributes
    ----------
    signal_error : `SignalError`
        Signal to report the new or cleared faults.
    errors : `set` [`ErrorCode`]
        Active faults.
    details : `dict`
        Last detail message of each active fault. The key is the fault code.
    reported : `set` [`tuple`]
        Keys of the one-time warnings that were already reported, such as
        (behavior, user) pairs without a valid negative item.
    """

    def __init__(self) -> None:
        self.signal_error = SignalError()

        self.errors: set[ErrorCode] = set()
        self.details: dict[ErrorCode, str] = dict()
        self.reported: set[tuple] = set()

    def add_error(self, error: ErrorCode, detail: str = "") -> None:
        """Add the fault.

        Parameters
        ----------
        error : enum `ErrorCode`
            Fault code.
        detail : `str`, optional
            Detail of the fault. (the default is "")
        """

        self.details[error] = detail
        if error not in self.errors:
            self.errors.add(error)
            self.signal_error.error_new.emit(int(error))

    def clear_error(self, error: ErrorCode) -> None:
        """Clear the fault.

        Parameters
        ----------
        error : enum `ErrorCode`
            Fault code.
        """

        if error in self.errors:
            self.errors.discard(error)
            self.details.pop(error, None)
            self.signal_error.error_cleared.emit(int(error))

    def reset_errors(self) -> None:
        """Reset the faults and the one-time warnings."""

        for error in list(self.errors):
            self.clear_error(error)

        self.reported.clear()

    def has_error(self) -> bool:
        """Has the fault or not.

        Returns
        -------
        `bool`
            True if there is the fault. Otherwise, False.
        """

        return len(self.errors) != 0

    def report_once(self, key: tuple) -> bool:
        """Mark a one-time warning as reported.

        Parameters
        ----------
        key : `tuple`
            Key of the warning.

        Returns
        -------
        `bool`
            True if this is the first report of the key. Otherwise, False.
        """

        if key in self.reported:
            return False

        self.reported.add(key)
        return True
