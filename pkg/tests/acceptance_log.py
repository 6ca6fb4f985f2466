"""Outcome of each acceptance criterion, printed at the end of the session."""

RESULTS: dict[int, tuple[bool, str, str]] = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    RESULTS[number] = (ok, title, detail)


def summary_lines() -> list[str]:
    return [f"criterion {n}: {'PASS' if ok else 'FAIL'} - {title} ({detail})"
            for n, (ok, title, detail) in sorted(RESULTS.items())]
