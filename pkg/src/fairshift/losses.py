"""Scalar objectives: risks, entropy terms, constraints, transport, ratio losses.

Every loss accepts plain arrays or autodiff tensors and returns an
autodiff tensor, so the same formula serves both evaluation
(``float(loss)``) and gradient-based training.  All logarithms are
natural.  The Wasserstein-2 distance is computed from an exact optimal
coupling: a linear assignment when the point clouds have equal size, a
transport linear program otherwise.  Gradients flow through the pairwise
costs with the optimal plan held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix

from . import autodiff as ad
from .autodiff import Tensor, as_tensor

MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class LossBreakdown:
    """Per-epoch record of the composite objective's pieces."""

    erm: float = 0.0
    weighted_entropy: float = 0.0
    wasserstein: float = 0.0
    c1_penalty: float = 0.0
    c2_penalty: float = 0.0
    total: float = 0.0

    def to_dict(self):
        return {
            "erm": self.erm,
            "weighted_entropy": self.weighted_entropy,
            "wasserstein": self.wasserstein,
            "c1_penalty": self.c1_penalty,
            "c2_penalty": self.c2_penalty,
            "total": self.total,
        }


def cross_entropy_risk(probs, labels) -> Tensor:
    """Mean negative log-likelihood of binary labels under ``probs``."""
    p = as_tensor(probs)
    y = np.asarray(labels, dtype=np.float64)
    per_row = -(Tensor(y) * ad.log(p) + Tensor(1.0 - y) * ad.log(1.0 - p))
    return per_row.mean()


def conditional_entropy(probs) -> Tensor:
    """Binary prediction entropy -p log p - (1-p) log(1-p), elementwise."""
    p = as_tensor(probs)
    q = 1.0 - p
    return -(p * ad.log(p)) - (q * ad.log(q))


def weighted_entropy_term(weights_fw, entropies) -> Tensor:
    """Mean of exp(-weight) * entropy over a batch of target points.

    Points the weight network scores as training-typical (large output)
    contribute exponentially little.
    """
    fw = as_tensor(weights_fw)
    if not np.all(np.isfinite(fw.value)):
        raise ValueError("weight network produced non-finite values")
    return (ad.exp(-fw) * as_tensor(entropies)).mean()


def constraint_penalty(fw_test, fw_train, c1=1.0, c2=1.0) -> Tensor:
    """Squared-error penalties pushing the test-side mean weight and the
    train-side mean reciprocal weight toward 1."""
    ft = as_tensor(fw_test)
    fs = as_tensor(fw_train)
    if (ft.value <= 0).any() or (fs.value <= 0).any():
        raise ValueError("weight values must be strictly positive")
    d1 = ft.mean() - 1.0
    d2 = (1.0 / fs).mean() - 1.0
    return c1 * (d1 * d1) + c2 * (d2 * d2)


def kliep_loss(s_test, s_train) -> Tensor:
    """Log-likelihood ratio-fitting loss with a unit-mean penalty on train."""
    st = as_tensor(s_test)
    ss = as_tensor(s_train)
    if (st.value <= 0).any() or (ss.value <= 0).any():
        raise ValueError("ratio estimates must be strictly positive")
    d = ss.mean() - 1.0
    return (-ad.log(st)).mean() + d * d


def lsif_loss(s_test, s_train) -> Tensor:
    """Least-squares ratio-fitting loss."""
    st = as_tensor(s_test)
    ss = as_tensor(s_train)
    if (st.value <= 0).any() or (ss.value <= 0).any():
        raise ValueError("ratio estimates must be strictly positive")
    return (-st).mean() + 0.5 * (ss * ss).mean()


# -- optimal transport ------------------------------------------------------


@dataclass(frozen=True)
class CouplingPlan:
    """Optimal transport plan between two uniform empirical measures."""

    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def __post_init__(self):
        if (self.plan < -MARGINAL_TOL).any():
            raise ValueError("coupling entries must be nonnegative")
        if not np.allclose(self.plan.sum(axis=1), self.row_marginal, atol=MARGINAL_TOL):
            raise ValueError("row sums do not match the row marginal")
        if not np.allclose(self.plan.sum(axis=0), self.col_marginal, atol=MARGINAL_TOL):
            raise ValueError("column sums do not match the column marginal")


def _pairwise_sq_dists(a, b):
    # direct differences: exactly zero for coincident points, unlike the
    # a^2 + b^2 - 2ab expansion
    diff = a[:, None, :] - b[None, :, :]
    return (diff * diff).sum(axis=2)


def solve_coupling(points_a, points_b) -> CouplingPlan:
    """Exact optimal coupling for squared-Euclidean cost, uniform weights.

    Equal sizes use the assignment fast path (an optimal plan is a
    permutation by Birkhoff's theorem); unequal sizes solve the transport
    linear program with the HiGHS solver.
    """
    a = np.asarray(points_a, dtype=np.float64)
    b = np.asarray(points_b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cannot transport to or from an empty point set")
    na, nb = len(a), len(b)
    cost = _pairwise_sq_dists(a, b)
    row = np.full(na, 1.0 / na)
    col = np.full(nb, 1.0 / nb)
    if na == nb:
        rows, cols = linear_sum_assignment(cost)
        plan = np.zeros_like(cost)
        plan[rows, cols] = 1.0 / na
        return CouplingPlan(plan, row, col)
    # transport LP: min <cost, x>, row sums = 1/na, col sums = 1/nb, x >= 0
    var = np.arange(na * nb)
    constraint_rows = np.concatenate([var // nb, na + (var % nb)])
    constraint_cols = np.concatenate([var, var])
    a_eq = coo_matrix(
        (np.ones(2 * na * nb), (constraint_rows, constraint_cols)),
        shape=(na + nb, na * nb),
    )
    b_eq = np.concatenate([row, col])
    result = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, method="highs")
    if not result.success:
        raise RuntimeError(f"transport LP failed: {result.message}")
    plan = np.maximum(result.x.reshape(na, nb), 0.0)
    return CouplingPlan(plan, row, col)


def wasserstein2(points_a, points_b) -> Tensor:
    """Exact W2 between uniform empirical measures on two point clouds.

    Differentiable in the points: the optimal plan is constant almost
    everywhere, so the gradient flows through the pairwise costs only.
    """
    a = as_tensor(points_a)
    b = as_tensor(points_b)
    av, bv = a.value, b.value
    if av.ndim == 1:
        raise ValueError("points must be 2-D [count, dim]")
    coupling = solve_coupling(av, bv)
    exact_cost = float((coupling.plan * _pairwise_sq_dists(av, bv)).sum())
    a2 = (a * a).sum(axis=1, keepdims=True)
    b2 = (b * b).sum(axis=1, keepdims=True)
    cross = ad.matmul(a, _transpose(b))
    d2 = a2 + _transpose(b2) - 2.0 * cross
    cost = (d2 * Tensor(coupling.plan)).sum()
    # report the exactly computed cost while differentiating through the
    # expanded form: (cost - stop(cost)) is identically zero in value
    anchored = Tensor(np.asarray(exact_cost)) + (cost - ad.stop_gradient(cost))
    return ad.sqrt(ad.clip(anchored, 0.0, None))


def _transpose(t: Tensor) -> Tensor:
    out = Tensor(t.value.T, (t,))
    out._backward_fn = lambda g: t._accumulate(g.T)
    return out


def risk_bound_gap(source_risk, weighted_entropy, epsilon, test_risk) -> float:
    """Slack of the weighted-entropy upper bound on target risk.

    Returns ``(source_risk + epsilon * weighted_entropy) - test_risk``;
    nonnegative whenever the model's class probabilities are within a
    factor ``epsilon`` of the true conditionals on the target.
    """
    return float(source_risk) + float(epsilon) * float(weighted_entropy) - float(test_risk)
