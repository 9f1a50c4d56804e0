from . import _env  # noqa: F401  (must run before numpy is first imported)

__version__ = "0.1.0"
