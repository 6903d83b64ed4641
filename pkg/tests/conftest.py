import sys
import zipfile
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from neuroloom import _backend  # noqa: E402

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return _backend.get(request.param)


def write_zip(path, files):
    """Write a connectome-style zip from ``{name: text}``."""
    with zipfile.ZipFile(path, "w") as zf:
        for name, text in files.items():
            zf.writestr(name, text)
    return path


def matrix_text(a):
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(a)) + "\n"


@pytest.fixture
def three_region_zip(tmp_path):
    w = [[0, 1, 0], [0, 0, 2], [3, 0, 0]]
    lengths = [[0, 10, 0], [0, 0, 20], [30, 0, 0]]
    return write_zip(tmp_path / "three.zip", {"weights.txt": matrix_text(w),
                                              "tract_lengths.txt": matrix_text(lengths)})


# -- acceptance report ---------------------------------------------------------------

ACCEPTANCE_KEY = pytest.StashKey[dict]()
N_CRITERIA = 12


@pytest.fixture
def accept(request):
    """``accept(n, ok, detail)`` records criterion ``n`` and asserts it."""
    results = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(n, ok, detail):
        results[n] = (bool(ok), detail)
        assert ok, f"criterion {n}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE_KEY, None)
    if results is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in results:
            ok, detail = results[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL - not evaluated (error or deselected)")
