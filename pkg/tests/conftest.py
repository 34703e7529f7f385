import json

import numpy as np
import pytest

from dcrnet import numerics as nx
from dcrnet.trainer import toy_corpus


def central_diff(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Numerical gradient of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return float(np.linalg.norm(a - b) / scale) if scale > 0 else 0.0


def check_grads(build, inputs: list[np.ndarray], h: float = 1e-4) -> float:
    """Max relative error between backprop and central differences.

    ``build(*tensors)`` returns a scalar Tensor; ``inputs`` are the raw arrays.
    """
    leaves = [nx.Tensor(a, requires_grad=True) for a in inputs]
    grads = nx.backward(build(*leaves))
    worst = 0.0
    for leaf in leaves:
        def f():
            with nx.no_grad():
                return build(*leaves).item()
        worst = max(worst, rel_err(grads[leaf], central_diff(f, leaf.data, h)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy():
    return toy_corpus()


def write_jsonl(path, dialogs):
    with open(path, "w", encoding="utf-8") as fh:
        for d in dialogs:
            fh.write(json.dumps(d) + "\n")
    return path


def utt(tokens, da="inform", sentiment="neutral", speaker="A"):
    return {"speaker": speaker, "tokens": tokens.split() if isinstance(tokens, str) else tokens, "da": da, "sentiment": sentiment}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
