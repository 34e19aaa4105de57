import os

import pytest

from tsolab.lattice import build_model

FULL = os.environ.get("TSOLAB_FULL", "") not in ("", "0")


def pytest_collection_modifyitems(config, items):
    if FULL:
        return
    skip = pytest.mark.skip(reason="long-horizon run; set TSOLAB_FULL=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


_MODELS = {}


def model(kind):
    """Session-wide model cache (energy and sector tables are cached on the model)."""
    if kind not in _MODELS:
        _MODELS[kind] = build_model(kind)
    return _MODELS[kind]


@pytest.fixture(scope="session")
def tri():
    return model("tri")


@pytest.fixture(scope="session")
def sq():
    return model("sq")


@pytest.fixture(scope="session")
def chain():
    return model("chain")


@pytest.fixture(scope="session")
def ising2d():
    return model("ising2d")


_ACCEPTANCE = pytest.StashKey[dict]()
N_CRITERIA = 8


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records an acceptance outcome and asserts it."""
    results = request.config.stash[_ACCEPTANCE]

    def record(n: int, ok: bool, detail: str = "") -> None:
        results.setdefault(n, []).append((bool(ok), detail))
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n not in results:
            terminalreporter.write_line(f"criterion {n}: NOT RUN")
            continue
        status = "PASS" if all(ok for ok, _ in results[n]) else "FAIL"
        detail = "; ".join(d for _, d in results[n])
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
