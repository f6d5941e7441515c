"""Error type shared by every module; `code` carries the stable error identifier."""

from __future__ import annotations


class MemfairError(Exception):
    def __init__(self, code: str, message: str, position: int | None = None):
        self.code = code
        self.message = message
        self.position = position
        where = f" at offset {position}" if position is not None else ""
        super().__init__(f"{code}{where}: {message}")


E_SYNTAX = "E_SYNTAX"
E_UNDECLARED_LOCATION = "E_UNDECLARED_LOCATION"
E_DANGLING_LABEL = "E_DANGLING_LABEL"
E_NOT_ENABLED = "E_NOT_ENABLED"
E_CYCLIC = "E_CYCLIC"
E_NOT_PREFIX_CLOSED = "E_NOT_PREFIX_CLOSED"
E_BOUND_EXCEEDED = "E_BOUND_EXCEEDED"
E_UNSUPPORTED_LOOP = "E_UNSUPPORTED_LOOP"
E_UNPROPAGATED_WRITE = "E_UNPROPAGATED_WRITE"
E_INCONSISTENT_INPUT = "E_INCONSISTENT_INPUT"
