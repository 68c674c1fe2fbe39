# https://docs.python.org/3/howto/logging.html#configuring-logging-for-a-library
import logging
logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = (
    "__version__",
)

__version__ = "0.1.0"
