"""Collects one verdict line per acceptance criterion for the terminal summary."""
from contextlib import contextmanager

LINES: list[str] = []


@contextmanager
def criterion(number: int, title: str):
    """Record PASS/FAIL for the enclosed checks; ``note`` appends measured values."""
    notes: list[str] = []
    try:
        yield notes
    except BaseException as e:
        LINES.append(f"criterion {number:2d} FAIL  {title}  {'; '.join(notes)}  [{type(e).__name__}: {str(e)[:200]}]".rstrip())
        raise
    LINES.append(f"criterion {number:2d} PASS  {title}  {'; '.join(notes)}".rstrip())
