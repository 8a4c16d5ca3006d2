from .base import LogitBackend
from .factory import OracleFactory

__all__ = ["LogitBackend", "OracleFactory"]
