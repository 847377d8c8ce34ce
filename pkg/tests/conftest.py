import json
import pathlib

import pytest

from hatealign.config import parse_config
from hatealign.data import GeneratorConfig, generate_corpus

ROOT = pathlib.Path(__file__).resolve().parents[1]
ACCEPTANCE_CONFIG = ROOT / "configs" / "acceptance.json"


def acceptance_doc(**overrides):
    doc = json.loads(ACCEPTANCE_CONFIG.read_text())
    doc.update(overrides)
    return doc


@pytest.fixture(scope="session")
def acceptance_config():
    return parse_config(acceptance_doc())


@pytest.fixture(scope="session")
def small_corpus():
    counts = {"en": (30, 30), "hi": (30, 30), "mr": (30, 30), "ta": (30, 30), "te": (30, 30), "bn": (30, 30)}
    return generate_corpus(GeneratorConfig(per_language_counts=counts, seed=11))


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    n, title = marker.args
    # setup time counts too: shared fixtures do the heavy lifting
    _, ok, seconds = _CRITERIA.get(n, (title, True, 0.0))
    _CRITERIA[n] = (title, ok and not rep.failed, seconds + call.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, seconds = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.1f}s)")
