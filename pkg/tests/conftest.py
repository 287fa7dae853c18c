"""Shared pytest hooks.

The acceptance tests each produce one ``[PASS]``/``[FAIL]`` line; stdout of
passing tests is captured, so the lines are buffered here and echoed in the
terminal summary where every run (with or without ``-s``) shows them.
"""

from __future__ import annotations

acceptance_lines: list[str] = []


def record_acceptance_line(line: str) -> None:
    acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in acceptance_lines:
        terminalreporter.write_line(line)
