"""Question-generation-driven text-to-SQL pipeline (C++ core)."""

from ._sqlqg import *  # noqa: F401,F403
from ._sqlqg import __doc__ as _core_doc

__doc__ = _core_doc
__version__ = "0.1.0"
