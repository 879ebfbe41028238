"""Workbench-wide error types.

A Refusal is a deliberate precondition gate (CLI exit code 3), distinct
from a FAIL verdict (exit 2) or a usage/config error (64/65).
"""


class Refusal(Exception):
    def __init__(self, message: str, detail=None):
        super().__init__(message)
        self.detail = detail
