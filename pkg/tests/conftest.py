import numpy as np
import pytest

from hiersel import Dataset, ModelAlpha, make_family

# acceptance verdicts, printed in the terminal summary
VERDICTS: dict[int, str] = {}


def record_verdict(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])


def random_dataset(kind, n, p, seed, beta=None, trials=5):
    """Small synthetic instance: standardized gaussian columns, response from ``beta``.

    ``beta`` maps terms (mains or pairs) to coefficients; the default uses
    the first two mains and their interaction.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    data0 = Dataset.from_arrays(np.zeros(n), X)
    if beta is None:
        beta = {0: 0.8, 1: -0.6, (0, 1): 0.5}
    eta = 0.2 + sum(c * data0.column(t) for t, c in beta.items())
    if kind == "gaussian":
        y = eta + rng.standard_normal(n)
        m = None
    elif kind == "poisson":
        y = rng.poisson(np.exp(0.5 * eta)).astype(float)
        m = None
    else:
        m = np.full(n, float(trials))
        y = rng.binomial(trials, 1.0 / (1.0 + np.exp(-0.5 * eta))).astype(float)
    data = Dataset(y=y, X=data0.X, names=data0.names, trials=m)
    return make_family(kind, m), data


def random_sh_model(rng, p, max_mains=None):
    """Uniform-ish random strong-hierarchy model on ``range(p)``."""
    k = rng.integers(0, (max_mains or p) + 1)
    mains = tuple(rng.choice(p, size=k, replace=False).tolist())
    pairs = [(a, b) for i, a in enumerate(sorted(mains)) for b in sorted(mains)[i + 1:]]
    chosen = tuple(pr for pr in pairs if rng.random() < 0.5)
    return ModelAlpha(mains, chosen)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
