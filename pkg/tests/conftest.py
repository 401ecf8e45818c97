import numpy as np
import pytest

from qldpc_relay.model import DecodingModel


def random_model(rng: np.random.Generator, max_checks: int = 12, max_errors: int = 30,
                 max_col_degree: int = 3, num_logicals: int | None = None) -> DecodingModel:
    """Random sparse model: every column touches 1..max_col_degree distinct checks."""
    m = int(rng.integers(2, max_checks + 1))
    n = int(rng.integers(2, max_errors + 1))
    k = int(rng.integers(1, 3)) if num_logicals is None else num_logicals
    cols = []
    for _ in range(n):
        d = int(rng.integers(1, min(max_col_degree, m) + 1))
        cols.append(sorted(rng.choice(m, size=d, replace=False).tolist()))
    logs = [sorted(rng.choice(k, size=int(rng.integers(0, k + 1)), replace=False).tolist()) for _ in range(n)]
    priors = rng.uniform(0.01, 0.3, size=n).tolist()
    return DecodingModel.from_columns(m, k, cols, logs, priors)


def random_syndrome(model: DecodingModel, rng: np.random.Generator) -> np.ndarray:
    """Half the time a syndrome of a sampled error, otherwise uniform bits."""
    if rng.random() < 0.5:
        e = (rng.random(model.num_errors) < model.priors).astype(np.uint8)
        h = model.dense_check_matrix().astype(np.int64)
        return ((h @ e) & 1).astype(np.uint8)
    return rng.integers(0, 2, model.num_checks, dtype=np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
