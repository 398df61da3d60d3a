"""Error budgets, existence lower bounds and their Monte Carlo checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import _forward, as_arch
from .tickets import SparseTicket


@dataclass
class ErrorBudget:
    eps: float
    eps_l: np.ndarray
    sup_norms: np.ndarray
    weight_inf_norms: np.ndarray
    widths: np.ndarray
    k_max: np.ndarray


def domain_grid(n_in: int, n_points: int = 1000) -> np.ndarray:
    """Regular grid of about ``n_points`` points covering ``[-1, 1]^n_in``."""
    per_axis = max(2, int(round(n_points ** (1.0 / n_in))))
    axes = [np.linspace(-1.0, 1.0, per_axis)] * n_in
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n_in)


def estimate_sup_norms(target: SparseTicket, safety: float = 1.1) -> np.ndarray:
    """``safety * max ||x^(l-1)||_1`` over a dense grid, for ``l = 1..L``."""
    n_in = target.arch.n_in
    grid = domain_grid(n_in, 10_000 if n_in == 1 else 200**n_in)
    Ws, bs = target.dense()
    acts, _, _ = _forward(Ws, bs, grid)
    return safety * np.array([np.abs(a).sum(axis=1).max() for a in acts])


def eps_layer(eps: float, target: SparseTicket, sup_norms=None) -> ErrorBudget:
    """Per-layer parameter tolerances that keep the output within ``eps``.

    ``eps_l = eps / (L sqrt(n_l k_l,max) (1 + S_{l-1}) prod_{k>l} (||W^(k)||_max + eps/L))``
    with ``S_{l-1}`` the sup of ``||x^(l-1)||_1`` over the input cube.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    L = target.depth
    S = estimate_sup_norms(target) if sup_norms is None else np.asarray(sup_norms, dtype=float)
    if S.shape != (L,):
        raise ValueError(f"need {L} sup norms, got {S.shape}")
    Ws, _ = target.dense()
    winf = np.array([np.abs(W).max() if W.size else 0.0 for W in Ws])
    widths = np.array(target.arch.widths[1:])
    kmax = np.array([target.k_max(l) for l in range(1, L + 1)])
    out = np.empty(L)
    for l in range(1, L + 1):
        tail = np.prod(winf[l:] + eps / L)
        out[l - 1] = eps / (L * np.sqrt(widths[l - 1] * max(kmax[l - 1], 1)) * (1 + S[l - 1]) * tail)
    return ErrorBudget(eps, out, S, winf, widths, kmax)


def verify_error_propagation(
    target: SparseTicket, budget: ErrorBudget, trials: int = 1000, grid=None, seed: int = 0, scale=None
) -> float:
    """Largest ``||f - f_eps||_2`` over ``grid`` after perturbing each ticket entry of
    layer ``l`` by ``U[-eps_l, eps_l]``. ``scale`` multiplies the per-layer budgets."""
    grid = domain_grid(target.arch.n_in) if grid is None else np.asarray(grid, dtype=float)
    Ws, bs = target.dense()
    _, _, ref = _forward(Ws, bs, grid)
    e = budget.eps_l * (1.0 if scale is None else np.asarray(scale, dtype=float))
    wmask = [W != 0 for W in Ws]
    bmask = [b != 0 for b in bs]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        Wp = [W + m * rng.uniform(-el, el, W.shape) for W, m, el in zip(Ws, wmask, e)]
        bp = [b + m * rng.uniform(-el, el, b.shape) for b, m, el in zip(bs, bmask, e)]
        _, _, out = _forward(Wp, bp, grid)
        worst = max(worst, float(np.linalg.norm(out - ref, axis=1).max()))
    return worst


@dataclass
class ExistenceBound:
    bound: float
    raw: float
    layer_factors: np.ndarray
    failure_terms: np.ndarray
    eps_l: np.ndarray
    output_scale: float
    degenerate: bool


def existence_lower_bound(
    eps: float,
    target: SparseTicket,
    mother_arch,
    sup_norms=None,
    sigma_w=None,
    normal_init: bool = False,
) -> ExistenceBound:
    """Union-bound probability that a same-depth random network contains the target.

    ``prod_l (1 - sum_i (1 - eps_l^k_i)^n_{l,0})``. Each layer factor is clamped
    to ``[0, 1]`` before multiplying; the unclamped product is kept in ``raw``.
    ``normal_init`` halves the tolerances.
    """
    mother = as_arch(mother_arch)
    if mother.depth != target.depth:
        raise ValueError("mother and target must have the same depth")
    budget = eps_layer(eps, target, sup_norms)
    el = budget.eps_l / 2 if normal_init else budget.eps_l
    degenerate = bool(np.any(el >= 1))
    fails, factors = [], []
    for l in range(1, target.depth + 1):
        k = target.in_degrees(l)
        p_match = np.minimum(el[l - 1], 1.0) ** k
        term = float(np.sum((1.0 - p_match) ** mother.widths[l]))
        fails.append(term)
        factors.append(1.0 - term)
    factors = np.array(factors)
    sig = np.ones(target.depth) if sigma_w is None else np.broadcast_to(np.asarray(sigma_w, float), (target.depth,))
    return ExistenceBound(
        bound=float(np.prod(np.clip(factors, 0.0, 1.0))),
        raw=float(np.prod(factors)),
        layer_factors=factors,
        failure_terms=np.array(fails),
        eps_l=el,
        output_scale=float(np.prod(1.0 / sig)),
        degenerate=degenerate,
    )


@dataclass
class MonteCarloResult:
    frequency: float
    theory: float
    sigma: float
    trials: int

    @property
    def consistent(self) -> bool:
        """Frequency at least the lower bound minus three binomial standard errors."""
        return self.frequency >= self.theory - 3 * self.sigma


def verify_existence_bound(eps_l: float, theta, width: int, trials: int = 10_000, seed: int = 0) -> MonteCarloResult:
    """Fraction of fresh ``U[-1, 1]`` layers of ``width`` neurons in which every target
    neuron (rows of ``theta``, one parameter vector each) has a neuron matching all of its
    parameters within ``eps_l``."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    n_t, k = theta.shape
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        cand = rng.uniform(-1.0, 1.0, size=(width, k))
        ok = np.all(np.abs(cand[None, :, :] - theta[:, None, :]) <= eps_l, axis=2)
        hits += bool(np.all(ok.any(axis=1)))
    freq = hits / trials
    p = min(eps_l, 1.0) ** k
    theory = max(0.0, 1.0 - n_t * (1.0 - p) ** width)
    sigma = np.sqrt(max(theory * (1 - theory), 1e-12) / trials)
    return MonteCarloResult(freq, theory, float(sigma), trials)


def relu_path_prob(widths) -> float:
    """``prod_l (1 - 0.5^n_l)`` over the given layer widths.

    Pass the mother widths ``n_{1,0}, ..., n_{L,0}`` (an ``Architecture`` is
    accepted and its input width dropped).
    """
    if hasattr(widths, "widths"):
        widths = widths.widths[1:]
    widths = np.asarray(widths, dtype=float)
    if np.any(widths < 1):
        raise ValueError("widths must be >= 1")
    return float(np.prod(1.0 - 0.5**widths))


def relu_path_monte_carlo(widths, trials: int = 100_000, seed: int = 0) -> MonteCarloResult:
    """Greedy walk over random edge signs.

    Starting from the input, each layer needs a positive edge from the
    current neuron to some neuron of the next layer; the walk moves to the
    first such neuron.
    """
    if hasattr(widths, "widths"):
        widths = widths.widths[1:]
    widths = [int(w) for w in widths]
    rng = np.random.default_rng(seed)
    alive = np.ones(trials, dtype=bool)
    for n in widths:
        # signs of the edges leaving the current neuron; the chosen neuron's identity
        # does not matter because fresh edges are independent
        pos = rng.random((trials, n)) < 0.5
        alive &= pos.any(axis=1)
    freq = float(alive.mean())
    theory = relu_path_prob(widths)
    return MonteCarloResult(freq, theory, float(np.sqrt(theory * (1 - theory) / trials)), trials)
