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

__all__ = ["SignalMessage", "SignalTraining", "SignalError"]

from PySide6 import QtCore


class SignalMessage(QtCore.QObject):
    """Message signal to send the formatted log message."""

    message = QtCore.Signal(str)


class SignalTraining(QtCore.QObject):
    """Training signal to send the progress of an optimization run."""

    # Instance of the EpochLog class, emitted once per finished epoch.
    epoch = QtCore.Signal(object)

    # Evaluation result as a tuple: (epoch, hr, ndcg). The data type of
    # "epoch" is integer and the others are float.
    evaluation = QtCore.Signal(object)

    # Path of the checkpoint file that was just written.
    checkpoint = QtCore.Signal(str)


class SignalError(QtCore.QObject):
    """Error signal to send the fault code."""

    # New fault code (enum ErrorCode)
    error_new = QtCore.Signal(int)

    # Cleared fault code (enum ErrorCode)
    error_cleared = QtCore.Signal(int)
