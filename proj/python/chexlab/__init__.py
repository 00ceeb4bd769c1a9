from chexlab._core import *  # noqa: F401,F403
from chexlab._core import __version__  # noqa: F401
