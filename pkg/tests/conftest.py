import contextlib
import time

ACCEPTANCE = {}


@contextlib.contextmanager
def criterion(number, title, max_seconds=None):
    """Record a PASS/FAIL line for an acceptance criterion.

    The body fills ``detail`` (a dict) with the measured quantities; any
    exception, including a failed assertion, marks the criterion FAIL.
    """
    detail = {}
    t0 = time.perf_counter()
    try:
        yield detail
        elapsed = time.perf_counter() - t0
        if max_seconds is not None:
            detail["seconds"] = round(elapsed, 2)
            assert elapsed < max_seconds, f"runtime {elapsed:.1f} s exceeds {max_seconds} s"
    except BaseException as exc:
        ACCEPTANCE[number] = ("FAIL", title, detail, f"{type(exc).__name__}: {exc}".splitlines()[0])
        print(_line(number))
        raise
    ACCEPTANCE[number] = ("PASS", title, detail, "")
    print(_line(number))


def _line(n):
    status, title, detail, err = ACCEPTANCE[n]
    parts = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in detail.items())
    line = f"{status} criterion {n:2d}: {title}"
    if parts:
        line += f" [{parts}]"
    if err:
        line += f" -- {err}"
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(_line(n))
