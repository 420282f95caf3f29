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

__all__ = ["LogMessageHandler"]

import logging

from .signals import SignalMessage


class LogMessageHandler(logging.Handler):
    """Log handler of the command line application.

    Every formatted record is emitted by the message signal. The application
    connects the signal to the writer of "log.txt" in the output directory, so
    the run log holds the same lines as the console.

    Parameters
    ----------
    signal_message : `SignalMessage`
        Signal of the new message.
    message_format : `str`
        Format of the message.
    level : `int`, optional
        Lowest level to forward. (the default is logging.NOTSET)
    """

    def __init__(
        self,
        signal_message: SignalMessage,
        message_format: str,
        level: int = logging.NOTSET,
    ) -> None:
        super().__init__(level=level)

        self._signal_message = signal_message
        self.setFormatter(logging.Formatter(message_format))

    def emit(self, record: logging.LogRecord) -> None:
        try:
            message = self.format(record)
        except Exception:
            # Reported on stderr by the logging module
            self.handleError(record)
            return

        self._signal_message.message.emit(message)
