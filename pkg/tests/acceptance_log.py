"""Shared record of acceptance outcomes, printed in the terminal summary."""

import contextlib

RESULTS = {}


@contextlib.contextmanager
def criterion(n, name, capsys=None):
    try:
        yield
    except BaseException:
        RESULTS[n] = ("FAIL", name)
        _echo(capsys, f"ACCEPTANCE {n:2d} FAIL  {name}")
        raise
    RESULTS[n] = ("PASS", name)
    _echo(capsys, f"ACCEPTANCE {n:2d} PASS  {name}")


def _echo(capsys, line):
    if capsys is None:
        print(line)
        return
    with capsys.disabled():
        print("\n" + line)
