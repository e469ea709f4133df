"""Iteratively reweighted block minimization of the training objective.

Each outer iteration replaces every norm regularizer with its touching
quadratic surrogate (curvature 1 / (2 * max(norm, eps)) taken at the current
point) and then descends each weight block on the surrogate objective with
backtracking line search.  The surrogate majorizes the true objective, so the
objective trace is non-increasing; a revert guard makes that exact even when
the epsilon guard is active on a fully sparse group.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import model
from .model import Dataset, FeatureLayout, Hyperparams, ModelWeights
from .tensor_core import NumericError, Tensor3, log_cosh_sum

BLOCKS = ("W", "V", "U")


@dataclass(frozen=True)
class SolverConfig:
    max_outer_iters: int = 200
    tol: float = 1e-6  # relative objective change counted as progress
    inner_max_steps: int = 30
    inner_step_tol: float = 1e-10
    seed: int = 0
    init_scale: float = 0.1  # uniform(-s, s) initialization
    stall_patience: int = 3  # below-tol outer iterations before stopping

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.inner_max_steps < 1:
            raise ValueError("inner_max_steps must be >= 1")


@dataclass(frozen=True)
class Reweights:
    """Surrogate curvatures, one per regularized group.

    Every entry is 1 / (2 * max(group_norm, epsilon)) for the group norm it
    majorizes, so entries live in (0, 1 / (2 epsilon)].  The anchored norm is
    recoverable as 1 / (2 * entry), which the surrogate constant terms use.
    """

    qb: np.ndarray  # (modalities, history) behavior groups, W update
    ql: np.ndarray  # (types,) height-slice orthogonality residuals
    qd: np.ndarray  # (features,) width-slice orthogonality residuals
    qc: np.ndarray  # (history,) depth-slice orthogonality residuals
    ob: np.ndarray  # (modalities, history) behavior groups, V update
    pr: np.ndarray  # (history,) offset slice norms


class SolverReport(NamedTuple):
    iterations: int
    objective_trace: list
    converged: bool
    wall_time: float


class BlockUpdateResult(NamedTuple):
    weights: ModelWeights
    stalled: bool  # line search could not find any decrease
    inner_steps: int


@dataclass
class TraceRecord:
    """Per-outer-iteration diagnostics for the optional trace file."""

    iteration: int
    objective: float
    terrain_loss: float
    behavior_loss: float
    offset_loss: float
    behavior_reg: float
    history_reg: float
    orth_reg: float
    max_orth_residual: float


def compute_reweights(weights: ModelWeights, layout: FeatureLayout,
                      epsilon: float) -> Reweights:
    """Surrogate curvatures at the current weights."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    gn = model.group_norms(weights, layout)
    rh, rw, rd = model.orth_residual_norms(weights.w)
    un = model.history_norms(weights)
    guard = lambda a: 1.0 / (2.0 * np.maximum(a, epsilon))
    g = guard(gn)
    return Reweights(qb=g, ql=guard(rh), qd=guard(rw), qc=guard(rd),
                     ob=g.copy(), pr=guard(un))


def _surrogate_value(norms: np.ndarray, factors: np.ndarray) -> float:
    # q * n^2 + 1/(4q) per group; equals n at the anchor when the guard is idle
    return float(np.sum(factors * norms ** 2 + 0.25 / factors))


def majorized_objective(weights: ModelWeights, dataset: Dataset,
                        hyper: Hyperparams, rw: Reweights) -> float:
    """The surrogate objective the block updates descend.

    Touches the true objective at the weights ``rw`` was computed from and
    upper-bounds it everywhere else (up to epsilon/2 per guarded group).
    """
    gn = model.group_norms(weights, dataset.layout)
    rh, rwn, rd = model.orth_residual_norms(weights.w)
    un = model.history_norms(weights)
    return (
        model.data_loss(weights, dataset)
        + hyper.lambda1 * _surrogate_value(gn, rw.qb)
        + hyper.lambda2 * _surrogate_value(un, rw.pr)
        + hyper.lambda_l * _surrogate_value(rh, rw.ql)
        + hyper.lambda_d * _surrogate_value(rwn, rw.qd)
        + hyper.lambda_c * _surrogate_value(rd, rw.qc)
    )


# ---------------------------------------------------------------------------
# per-block surrogate objective/gradient


def _block_objective(block, weights, dataset, hyper, rw):
    """Surrogate terms that depend on the named block (constants dropped)."""
    if block == "W":
        r1 = model.terrain_scores(weights, dataset.features) - dataset.terrain_labels
        r2 = model.behavior_scores(weights, dataset.features) - dataset.expected
        gn = model.group_norms(weights, dataset.layout)
        rh, rwn, rd = model.orth_residual_norms(weights.w)
        return (
            log_cosh_sum(r1) + log_cosh_sum(r2)
            + hyper.lambda1 * float(np.sum(rw.qb * gn ** 2))
            + hyper.lambda_l * float(np.sum(rw.ql * rh ** 2))
            + hyper.lambda_d * float(np.sum(rw.qd * rwn ** 2))
            + hyper.lambda_c * float(np.sum(rw.qc * rd ** 2))
        )
    if block == "V":
        r2 = model.behavior_scores(weights, dataset.features) - dataset.expected
        gn = model.group_norms(weights, dataset.layout)
        return log_cosh_sum(r2) + hyper.lambda1 * float(np.sum(rw.ob * gn ** 2))
    if block == "U":
        r3 = (model.offset_scores(weights, dataset.behavior_diffs)
              - model.correction_targets(dataset))
        un = model.history_norms(weights)
        return log_cosh_sum(r3) + hyper.lambda2 * float(np.sum(rw.pr * un ** 2))
    raise ValueError(f"unknown block {block!r}")


def _with_block(weights: ModelWeights, block: str, arr: np.ndarray) -> ModelWeights:
    t = Tensor3(arr)
    if block == "W":
        return weights.replace(w=t)
    if block == "V":
        return weights.replace(v=t)
    return weights.replace(u=t)


def _smooth_gradient(block, weights, dataset, hyper, rw) -> np.ndarray:
    """Gradient of the block's smooth surrogate part.

    Data terms for every block, plus the orthogonality quadratics for W.
    The behavior-group and history quadratics are excluded; the prox maps
    below handle them exactly.
    """
    which = block.lower()
    grad = getattr(model.data_loss_gradient(weights, dataset, blocks=which), which)
    if block == "W":
        grad = grad + model.orth_gradient(weights, hyper, rw.ql, rw.qd, rw.qc)
    return grad


def _prox_w(w_hat, weights, layout, hyper, rw, eta) -> np.ndarray:
    """Exact minimizer of ||Z - w_hat||^2 / (2 eta) + lambda1 sum_g q_g ||V_g Z_g^T||^2."""
    if hyper.lambda1 == 0:
        return w_hat
    v = weights.v.data
    out = w_hat.copy()
    for j, cols in enumerate(layout.column_slices()):
        for k in range(v.shape[2]):
            vg = v[:, cols, k]
            scale = 2.0 * eta * hyper.lambda1 * rw.qb[j, k]
            system = np.eye(vg.shape[1]) + scale * (vg.T @ vg)
            out[:, cols, k] = np.linalg.solve(system, w_hat[:, cols, k].T).T
    return out


def _prox_v(v_hat, weights, layout, hyper, rw, eta) -> np.ndarray:
    """Exact minimizer of ||Z - v_hat||^2 / (2 eta) + lambda1 sum_g q_g ||Z_g W_g^T||^2.

    Separable over (modality, history) groups; each group is a small linear
    solve, so the curvature blowup of a collapsing group costs nothing.
    """
    if hyper.lambda1 == 0:
        return v_hat
    w = weights.w.data
    out = v_hat.copy()
    for j, cols in enumerate(layout.column_slices()):
        for k in range(w.shape[2]):
            wg = w[:, cols, k]
            scale = 2.0 * eta * hyper.lambda1 * rw.ob[j, k]
            system = np.eye(wg.shape[1]) + scale * (wg.T @ wg)
            out[:, cols, k] = np.linalg.solve(system, v_hat[:, cols, k].T).T
    return out


def _prox_u(u_hat, hyper, rw, eta) -> np.ndarray:
    if hyper.lambda2 == 0:
        return u_hat
    out = u_hat.copy()
    for k in range(u_hat.shape[2]):
        out[:, :, k] = u_hat[:, :, k] / (1.0 + 2.0 * eta * hyper.lambda2 * rw.pr[k])
    return out


def _apply_prox(block, arr, weights, dataset, hyper, rw, eta) -> np.ndarray:
    if block == "W":
        return _prox_w(arr, weights, dataset.layout, hyper, rw, eta)
    if block == "V":
        return _prox_v(arr, weights, dataset.layout, hyper, rw, eta)
    return _prox_u(arr, hyper, rw, eta)


def block_update(block, weights, dataset, hyper, rw,
                 config: SolverConfig) -> BlockUpdateResult:
    """Descend one weight block on its surrogate objective.

    Proximal-gradient iteration with backtracking: a gradient step on the
    smooth part (log-cosh data terms, plus the orthogonality quadratics for
    W) followed by an exact solve of the block's reweighted group quadratic.
    Handling the group quadratics in the prox keeps the update stable even
    when a group norm collapses toward the epsilon guard, where the
    quadratic's curvature diverges.  The block surrogate never increases;
    if no step length yields a decrease the input block is returned
    unchanged with the stall flag set.
    """
    if block not in BLOCKS:
        raise ValueError(f"unknown block {block!r}, expected one of {BLOCKS}")
    current = weights
    fx = _block_objective(block, current, dataset, hyper, rw)
    step = 1.0
    steps_taken = 0
    # V and U see convex, cheap subproblems; let them run further per pass
    budget = config.inner_max_steps * (1 if block == "W" else 2)
    for _ in range(budget):
        block_arr = getattr(current, block.lower()).data
        grad = _smooth_gradient(block, current, dataset, hyper, rw)
        accepted = False
        at_fixed_point = False
        while step > 1e-18:
            moved = _apply_prox(block, block_arr - step * grad, current,
                                dataset, hyper, rw, step)
            displacement = float(np.vdot(moved - block_arr, moved - block_arr))
            if displacement <= 1e-28 * max(1.0, float(np.vdot(block_arr, block_arr))):
                at_fixed_point = True
                break
            candidate = _with_block(current, block, moved)
            fc = _block_objective(block, candidate, dataset, hyper, rw)
            if fc <= fx - 1e-4 * displacement / step:
                accepted = True
                break
            step *= 0.5
        if at_fixed_point:
            break
        if not accepted:
            if steps_taken == 0:
                return BlockUpdateResult(weights, True, 0)
            break
        improvement = fx - fc
        current, fx = candidate, fc
        steps_taken += 1
        step *= 2.0
        if improvement < config.inner_step_tol * max(1.0, abs(fx)):
            break
    return BlockUpdateResult(current, False, steps_taken)


# ---------------------------------------------------------------------------
# outer loop


def initial_weights(dataset: Dataset, hyper: Hyperparams,
                    config: SolverConfig) -> ModelWeights:
    """Small uniform initialization so the log-cosh terms start near-linear."""
    rng = np.random.default_rng(config.seed)
    s = config.init_scale
    l = dataset.n_types
    d = dataset.features.height
    c = dataset.history_len
    b = dataset.behavior_dim
    draw = lambda shape: rng.uniform(-s, s, size=shape)
    return ModelWeights(
        Tensor3(draw((l, d, c))),
        Tensor3(draw((b, d, c))),
        Tensor3(draw((b, b, c))),
    )


def solve(dataset: Dataset, hyper: Hyperparams, config: SolverConfig,
          trace=None):
    """Run the full reweighted block minimization.

    Returns ``(weights, report)``.  ``trace``, when given, is a list that
    receives one :class:`TraceRecord` per outer iteration.

    Raises :class:`NumericError` if the objective turns non-finite, naming
    the offending term.
    """
    if dataset.n_instances < 1:
        raise ValueError("dataset is empty")
    start = time.perf_counter()
    weights = initial_weights(dataset, hyper, config)
    current = model.objective(weights, dataset, hyper)
    objective_trace = [current]
    converged = False
    below_tol_streak = 0
    iterations = 0

    for it in range(1, config.max_outer_iters + 1):
        iterations = it
        previous_weights = weights
        for block in BLOCKS:
            rw = compute_reweights(weights, dataset.layout, hyper.epsilon)
            result = block_update(block, weights, dataset, hyper, rw, config)
            weights = result.weights

        terms = model.objective_terms(weights, dataset, hyper)
        new = terms.total
        if not np.isfinite(new):
            raise NumericError("objective became non-finite during solve")
        if new > current:
            # The epsilon guard can let a surrogate step overshoot by a hair;
            # keep the trace exactly non-increasing.
            weights = previous_weights
            terms = model.objective_terms(weights, dataset, hyper)
            new = current
        objective_trace.append(new)

        if trace is not None:
            rh, rwn, rd = model.orth_residual_norms(weights.w)
            trace.append(TraceRecord(
                iteration=it,
                objective=new,
                terrain_loss=terms.terrain_loss,
                behavior_loss=terms.behavior_loss,
                offset_loss=terms.offset_loss,
                behavior_reg=terms.behavior_reg,
                history_reg=terms.history_reg,
                orth_reg=terms.orth_reg,
                max_orth_residual=float(max(rh.max(), rwn.max(), rd.max())),
            ))

        rel_change = (current - new) / max(1.0, abs(current))
        current = new
        if rel_change < config.tol:
            below_tol_streak += 1
            if below_tol_streak >= config.stall_patience:
                converged = True
                break
        else:
            below_tol_streak = 0

    report = SolverReport(
        iterations=iterations,
        objective_trace=objective_trace,
        converged=converged,
        wall_time=time.perf_counter() - start,
    )
    return weights, report
