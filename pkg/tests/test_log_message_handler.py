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

import logging

from mbrec import LogMessageHandler, SignalMessage
from pytestqt.qtbot import QtBot

TIMEOUT = 1000


def test_emit(qtbot: QtBot) -> None:
    signal_message = SignalMessage()
    handler = LogMessageHandler(signal_message, "%(levelname)s, %(message)s")

    log = logging.getLogger("test_log_message_handler")
    log.addHandler(handler)
    log.setLevel(logging.INFO)

    try:
        with qtbot.waitSignal(signal_message.message, timeout=TIMEOUT) as blocker:
            log.info("Epoch 1 finished.")

        assert blocker.args == ["INFO, Epoch 1 finished."]

        with qtbot.assertNotEmitted(signal_message.message, wait=TIMEOUT):
            log.debug("Hidden.")

    finally:
        log.removeHandler(handler)


def test_emit_level(qtbot: QtBot) -> None:
    signal_message = SignalMessage()
    handler = LogMessageHandler(
        signal_message, "%(levelname)s, %(message)s", level=logging.WARNING
    )

    log = logging.getLogger("test_log_message_handler_level")
    log.addHandler(handler)
    log.setLevel(logging.DEBUG)

    try:
        with qtbot.assertNotEmitted(signal_message.message, wait=TIMEOUT):
            log.info("Epoch 1 finished.")

        with qtbot.waitSignal(signal_message.message, timeout=TIMEOUT) as blocker:
            log.warning("Sampler exhausted.")

        assert blocker.args == ["WARNING, Sampler exhausted."]

    finally:
        log.removeHandler(handler)
