"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps these onto its exit codes, so each class carries the code it
should surface as.
"""

from __future__ import annotations


class SkillTransferError(Exception):
    exit_code = 4


class CloudParseError(SkillTransferError):
    """Malformed point-cloud file. ``line`` is 1-based, or None for whole-file issues."""

    exit_code = 1

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class DegeneracyError(SkillTransferError):
    exit_code = 2


class CloudSizeError(SkillTransferError):
    exit_code = 2


class FitFailure(SkillTransferError):
    exit_code = 2


class NoAffordanceError(SkillTransferError):
    """The tool has no part that satisfies the task's part-selection rule."""

    exit_code = 3

    def __init__(self, task: str, rule: str):
        self.task = task
        self.rule = rule
        super().__init__(f"no part of the tool can serve task '{task}': {rule}")


class DSLError(SkillTransferError):
    """Located diagnostic from the skill-description parser."""

    exit_code = 1

    def __init__(self, message: str, line: int, col: int, path: str | None = None):
        self.message = message
        self.line = line
        self.col = col
        self.path = path
        where = f"{path}:{line}:{col}" if path is not None else f"{line}:{col}"
        super().__init__(f"{where}: {message}")


class BindError(SkillTransferError):
    def __init__(self, missing: list[str], detail: str = "unresolved feature"):
        self.missing = list(missing)
        super().__init__(f"{detail}: {', '.join(self.missing)}")


class DegenerateDirectionError(SkillTransferError):
    pass


class SolverError(SkillTransferError):
    pass
