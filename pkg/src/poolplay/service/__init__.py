from .app import create_app
from .ops import OperationError

__all__ = ["create_app", "OperationError"]
