import numpy as np
import pytest

from csrgl import _accel
from csrgl.graph import EdgeList, build_graph

BACKENDS = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    with _accel.backend(request.param):
        yield request.param


def random_graph(rng, n=None, m=None, weighted=True, undirected=False, self_loops=True):
    n = n if n is not None else int(rng.integers(1, 12))
    m = m if m is not None else int(rng.integers(0, 3 * n + 1))
    src = rng.integers(0, n, m)
    dst = rng.integers(0, n, m)
    if not self_loops:
        keep = src != dst
        src, dst = src[keep], dst[keep]
    w = rng.uniform(0.1, 2.0, len(src)) if weighted else None
    return build_graph(n, EdgeList(src, dst, w), undirected=undirected)


def numeric_grad(f, x, eps=1e-6):
    """Central differences of scalar ``f`` with respect to array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        hi = f()
        x[i] = old - eps
        lo = f()
        x[i] = old
        g[i] = (hi - lo) / (2 * eps)
    return g


def rel_err(a, b):
    # the floor makes analytically vanishing gradients (e.g. a row-constant
    # attention shift under softmax) compare absolutely against FD noise
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-6)
    return float(np.linalg.norm(a - b) / denom)


def grad_check(fn, inputs, seed=0, eps=1e-4):
    """Relative error between tape and central-difference gradients.

    ``fn`` maps a list of Vars to an output Var; the scalar probed is
    ``sum(out * R)`` for a fixed random ``R`` so every output entry matters.
    Returns the worst relative error over all inputs.
    """
    from csrgl import autodiff as ad

    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    probe = {}

    def scalar(vars_):
        out = fn(vars_)
        if "R" not in probe:
            probe["R"] = np.random.default_rng(seed).standard_normal(out.shape)
        return out, float(np.sum(out.value * probe["R"]))

    vars_ = [ad.param(a) for a in arrays]
    with ad.Tape() as tape:
        out, _ = scalar(vars_)
        tape.backward(out, probe["R"])
    worst = 0.0
    for i, v in enumerate(vars_):
        def f():
            return scalar([ad.Var(a) for a in arrays])[1]
        num = numeric_grad(f, arrays[i], eps)
        got = np.zeros_like(arrays[i]) if v.grad is None else v.grad
        worst = max(worst, rel_err(got, num))
    return worst


# acceptance reporting ---------------------------------------------------------------

@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, print it, and assert it."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(cid: str, title: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  {cid:<4} {title}" + (f"  [{detail}]" if detail else "")
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
