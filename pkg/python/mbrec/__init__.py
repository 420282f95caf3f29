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

import typing

if typing.TYPE_CHECKING:
    __version__ = "?"
else:
    try:
        from .version import *
    except ImportError:
        __version__ = "?"

from .enums import *
from .errors import *
from .utils import *
from .signals import *
from .log_message_handler import *
from .fault_manager import *
from .config import *
from .tensor_autograd import *
from .optimizer import *
from .gradient_check import *
from .data_graph import *
from .cogcn import *
from .dfme import *
from .model import *
from .evaluation import *
from .training import *
from .oracle import *
from .verification import *
from .application import *
