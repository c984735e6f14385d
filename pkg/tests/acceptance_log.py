"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

LINES = []


def record(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}"
    if detail:
        line += f": {detail}"
    LINES.append(line)
    print(line)
