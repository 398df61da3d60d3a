import numpy as np
import pytest

from ticketbench.net import loss_and_grad


def fd_grads(net, X, y, kind, h=1e-6):
    """Central finite differences of the loss w.r.t. every parameter entry."""
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            orig = p[i]
            p[i] = orig + h
            lp = loss_and_grad(net, X, y, kind)[0]
            p[i] = orig - h
            lm = loss_and_grad(net, X, y, kind)[0]
            p[i] = orig
            g[i] = (lp - lm) / (2 * h)
        out.append(g)
    return out


def max_rel_err(a_list, b_list):
    a = np.concatenate([np.ravel(x) for x in a_list])
    b = np.concatenate([np.ravel(x) for x in b_list])
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# lines recorded by test_acceptance, printed at the end of the session
ACCEPTANCE = []


def record(criterion, ok, detail, elapsed):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s]"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
