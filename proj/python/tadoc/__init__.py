"""Time-aware document image dewarping: flow algebra, synthetic data,
training, inference, and evaluation metrics."""

try:
    from ._tadoc import *  # noqa: F401,F403
    from ._tadoc import __doc__ as _core_doc  # noqa: F401
except ImportError:  # development layout: extension on PYTHONPATH
    from _tadoc import *  # noqa: F401,F403

__version__ = "0.1.0"
