"""Policy gradient with episodic kernel quadrature."""

from ._pgkq import *  # noqa: F401,F403
from ._pgkq import __doc__  # noqa: F401
