import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from corefrank.corpus_io import read_conll  # noqa: E402
from corefrank.model import ModelConfig, init_params  # noqa: E402
from corefrank.synthetic import make_corpus, make_embeddings  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = FIXTURES / "golden"
TINY = ModelConfig(embedding_dim=3, m1=5, m2=4, m3=3, dropout=0.0)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def tiny_cfg():
    return TINY


@pytest.fixture
def tiny_table():
    return make_embeddings(3, seed=0)


@pytest.fixture
def small_docs():
    return make_corpus(4, seed=11)


@pytest.fixture
def tiny_params(tiny_table):
    p = init_params(TINY, tiny_table, seed=3)
    rng = np.random.default_rng(5)
    # nonzero biases so every layer is exercised by the gradient checks
    for k, v in p.arrays.items():
        if ".b" in k:
            v[...] = rng.normal(0, 0.1, size=v.shape)
    return p


@pytest.fixture
def fixture_docs():
    return [d for name in ("minimal", "nested", "extended")
            for d in read_conll(FIXTURES / f"{name}.conll", warn_singletons=False)]


def pytest_terminal_summary(terminalreporter):
    import helpers
    if not helpers.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(helpers.ACCEPTANCE):
        ok, line = helpers.ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}  {line.splitlines()[0]}")
