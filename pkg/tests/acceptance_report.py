"""Collects one summary line per acceptance criterion."""

LINES = {}


class Criterion:
    """Context manager recording PASS/FAIL for criterion ``n``.

    Set ``detail`` inside the block; the line is recorded whether or not an
    assertion fails, and failures propagate to pytest unchanged.
    """

    def __init__(self, n, title):
        self.n, self.title, self.detail = n, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        line = f"criterion {self.n:2d} {status}: {self.title}"
        if self.detail:
            line += f" ({self.detail})"
        if exc_type is not None and exc is not None and str(exc):
            line += f" [{str(exc).splitlines()[0][:160]}]"
        LINES[self.n] = line
        print(line)
        return False
