"""The learnable adaptation model.

Three weight tensors drive everything:

* ``w`` (types x features x history) scores terrain types from a window of
  feature vectors.
* ``v`` (behaviors x features x history) generates behaviors from features
  routed through the terrain subspace of ``w``.
* ``u`` (behaviors x behaviors x history) maps a window of past behavior
  deviations to a corrective command offset.

The training objective combines three log-cosh data terms with a group
regularizer over (modality, history step) column groups, a per-history-slice
regularizer on ``u``, and soft orthogonality penalties on the slices of ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tensor_core import (
    DEPTH,
    HEIGHT,
    WIDTH,
    DimensionError,
    NumericError,
    Tensor3,
    contract,
    fro_norm,
    log_cosh_sum,
)


class InsufficientHistoryError(ValueError):
    """A trajectory is shorter than the history window."""


class UndefinedImportanceError(ValueError):
    """Importance shares are undefined because every group norm is zero."""


@dataclass(frozen=True)
class FeatureLayout:
    """How the feature vector splits into named modalities."""

    modality_dims: tuple
    modality_names: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.modality_dims)
        names = tuple(str(n) for n in self.modality_names)
        object.__setattr__(self, "modality_dims", dims)
        object.__setattr__(self, "modality_names", names)
        if len(dims) < 1:
            raise DimensionError("layout needs at least one modality")
        if any(d < 1 for d in dims):
            raise DimensionError(f"modality dims must be >= 1, got {dims}")
        if len(names) != len(dims):
            raise DimensionError(
                f"{len(names)} modality names for {len(dims)} modalities"
            )

    @property
    def n_modalities(self) -> int:
        return len(self.modality_dims)

    @property
    def feature_dim(self) -> int:
        return int(sum(self.modality_dims))

    def column_slices(self):
        """One slice of feature columns per modality, in declaration order."""
        out = []
        start = 0
        for d in self.modality_dims:
            out.append(slice(start, start + d))
            start += d
        return out


@dataclass(frozen=True)
class Hyperparams:
    """Objective weights and solver-facing constants."""

    lambda1: float = 1.0  # group regularizer on the behavior/terrain pairing
    lambda2: float = 0.1  # regularizer on offset history slices
    lambda_l: float = 10.0  # orthogonality multiplier, height slices of w
    lambda_d: float = 10.0  # orthogonality multiplier, width slices of w
    lambda_c: float = 10.0  # orthogonality multiplier, depth slices of w
    epsilon: float = 1e-8  # reweighting guard against zero group norms
    history_len: int = 5

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda_l", "lambda_d", "lambda_c"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {val}")
        if not 0.0 < self.epsilon <= 1e-3:
            raise ValueError(f"epsilon must be in (0, 1e-3], got {self.epsilon}")
        if self.history_len < 1:
            raise ValueError(f"history_len must be >= 1, got {self.history_len}")


@dataclass(frozen=True)
class ModelWeights:
    """The three learned tensors; immutable once constructed."""

    w: Tensor3
    v: Tensor3
    u: Tensor3

    def __post_init__(self):
        w, v, u = self.w, self.v, self.u
        if not (w.depth == v.depth == u.depth):
            raise DimensionError(
                f"history depths disagree: w={w.depth}, v={v.depth}, u={u.depth}"
            )
        if v.width != w.width:
            raise DimensionError(
                f"feature dims disagree: w={w.width}, v={v.width}"
            )
        if u.height != u.width or u.height != v.height:
            raise DimensionError(
                f"offset tensor must be square in the behavior dim "
                f"{v.height}, got {u.height}x{u.width}"
            )
        for name, t in (("w", w), ("v", v), ("u", u)):
            if not np.all(np.isfinite(t.data)):
                raise NumericError(f"weight tensor {name} has non-finite entries")

    @classmethod
    def zeros(cls, n_types, feature_dim, history_len, behavior_dim):
        return cls(
            Tensor3.zeros(n_types, feature_dim, history_len),
            Tensor3.zeros(behavior_dim, feature_dim, history_len),
            Tensor3.zeros(behavior_dim, behavior_dim, history_len),
        )

    @property
    def n_types(self) -> int:
        return self.w.height

    @property
    def feature_dim(self) -> int:
        return self.w.width

    @property
    def history_len(self) -> int:
        return self.w.depth

    @property
    def behavior_dim(self) -> int:
        return self.v.height

    def replace(self, w=None, v=None, u=None) -> "ModelWeights":
        return ModelWeights(w if w is not None else self.w,
                            v if v is not None else self.v,
                            u if u is not None else self.u)


@dataclass(frozen=True)
class Dataset:
    """Training bundle of windowed features, labels, and behaviors."""

    features: Tensor3  # (feature_dim, n, history)
    terrain_labels: np.ndarray  # (n_types, n), one-hot columns
    expected: np.ndarray  # (behavior_dim, n)
    actual: np.ndarray  # (behavior_dim, n)
    behavior_diffs: Tensor3  # (behavior_dim, n, history)
    layout: FeatureLayout

    def __post_init__(self):
        z = np.asarray(self.terrain_labels, dtype=float)
        y = np.asarray(self.expected, dtype=float)
        a = np.asarray(self.actual, dtype=float)
        for arr, name in ((z, "terrain_labels"), (y, "expected"), (a, "actual")):
            if arr.ndim != 2:
                raise DimensionError(f"{name} must be 2-D")
            arr.setflags(write=False)
        object.__setattr__(self, "terrain_labels", z)
        object.__setattr__(self, "expected", y)
        object.__setattr__(self, "actual", a)

        n = self.features.width
        if self.layout.feature_dim != self.features.height:
            raise DimensionError(
                f"layout covers {self.layout.feature_dim} features, tensor has "
                f"{self.features.height}"
            )
        if z.shape[1] != n or y.shape[1] != n or a.shape[1] != n:
            raise DimensionError("instance counts disagree across dataset fields")
        if y.shape != a.shape:
            raise DimensionError("expected and actual behavior shapes disagree")
        if self.behavior_diffs.shape != (y.shape[0], n, self.features.depth):
            raise DimensionError(
                f"behavior diff tensor shape {self.behavior_diffs.shape} does not "
                f"match ({y.shape[0]}, {n}, {self.features.depth})"
            )
        onehot = (z == 1.0).sum(axis=0)
        if not (np.all((z == 0.0) | (z == 1.0)) and np.all(onehot == 1)):
            raise ValueError("terrain label columns must be one-hot")

    @property
    def n_instances(self) -> int:
        return self.features.width

    @property
    def history_len(self) -> int:
        return self.features.depth

    @property
    def behavior_dim(self) -> int:
        return self.expected.shape[0]

    @property
    def n_types(self) -> int:
        return self.terrain_labels.shape[0]


# ---------------------------------------------------------------------------
# forward predictions


def predict_terrain(weights: ModelWeights, x) -> np.ndarray:
    """Terrain scores for one feature window; the class is the argmax."""
    return contract(weights.w, x)


def predict_behavior(weights: ModelWeights, x) -> np.ndarray:
    """Behavior for one feature window.

    Each history column is projected into the terrain subspace by ``W(k)``,
    lifted back by its transpose, and mapped to behaviors by ``V(k)``.
    """
    x = np.asarray(x, dtype=float)
    w, v = weights.w.data, weights.v.data
    if x.shape != (weights.feature_dim, weights.history_len):
        raise DimensionError(
            f"feature window shape {x.shape} does not match "
            f"({weights.feature_dim}, {weights.history_len})"
        )
    out = np.zeros(weights.behavior_dim)
    for k in range(weights.history_len):
        wk = w[:, :, k]
        out += v[:, :, k] @ (wk.T @ (wk @ x[:, k]))
    return out


def predict_offset(weights: ModelWeights, e) -> np.ndarray:
    """Corrective offset from a window of behavior deviations."""
    e = np.asarray(e, dtype=float)
    if e.shape != (weights.behavior_dim, weights.history_len):
        raise DimensionError(
            f"deviation window shape {e.shape} does not match "
            f"({weights.behavior_dim}, {weights.history_len})"
        )
    return np.einsum("qrk,rk->q", weights.u.data, e)


def terrain_scores(weights: ModelWeights, features: Tensor3) -> np.ndarray:
    """Batched :func:`predict_terrain` over an instance tensor."""
    return np.einsum("ljk,jik->li", weights.w.data, features.data)


def behavior_scores(weights: ModelWeights, features: Tensor3) -> np.ndarray:
    """Batched :func:`predict_behavior` over an instance tensor."""
    w, v = weights.w.data, weights.v.data
    x = features.data
    out = np.zeros((weights.behavior_dim, features.width))
    for k in range(weights.history_len):
        wk = w[:, :, k]
        out += v[:, :, k] @ (wk.T @ (wk @ x[:, :, k]))
    return out


def offset_scores(weights: ModelWeights, diffs: Tensor3) -> np.ndarray:
    """Batched :func:`predict_offset` over a deviation tensor."""
    return np.einsum("qrk,rik->qi", weights.u.data, diffs.data)


# ---------------------------------------------------------------------------
# regularizers


def group_norms(weights: ModelWeights, layout: FeatureLayout) -> np.ndarray:
    """Frobenius norm of ``V_g @ W_g.T`` per (modality, history step) group.

    ``V_g`` and ``W_g`` stack the modality's feature columns from the
    history-step slices of ``v`` and ``w``.  Returns an (m, history) array.
    """
    if layout.feature_dim != weights.feature_dim:
        raise DimensionError(
            f"layout covers {layout.feature_dim} features, model has "
            f"{weights.feature_dim}"
        )
    w, v = weights.w.data, weights.v.data
    out = np.zeros((layout.n_modalities, weights.history_len))
    for j, cols in enumerate(layout.column_slices()):
        for k in range(weights.history_len):
            out[j, k] = fro_norm(v[:, cols, k] @ w[:, cols, k].T)
    return out


def behavior_norm(weights: ModelWeights, layout: FeatureLayout) -> float:
    """Sum of the (modality, history step) group norms."""
    return float(np.sum(group_norms(weights, layout)))


def history_norms(weights: ModelWeights) -> np.ndarray:
    """Frobenius norm of each history slice of the offset tensor."""
    u = weights.u.data
    return np.array([fro_norm(u[:, :, k]) for k in range(weights.history_len)])


def history_norm(weights: ModelWeights) -> float:
    return float(np.sum(history_norms(weights)))


def orth_residual_norms(w: Tensor3):
    """Per-slice ``fro(S @ S.T - I)`` for all three axis families of ``w``.

    The identity matches the Gram dimension (the slice's row count), which is
    the only size for which the residual is defined for non-square slices.
    Returns arrays of length (height, width, depth).
    """
    height = np.array([_orth_residual(w.unstack(HEIGHT, i)) for i in range(w.height)])
    width = np.array([_orth_residual(w.unstack(WIDTH, j)) for j in range(w.width)])
    depth = np.array([_orth_residual(w.unstack(DEPTH, k)) for k in range(w.depth)])
    return height, width, depth


def _orth_residual(s: np.ndarray) -> float:
    g = s @ s.T
    g = g - np.eye(g.shape[0])
    return fro_norm(g)


def orth_penalty(weights: ModelWeights, hyper: Hyperparams) -> float:
    """Weighted sum of slice orthogonality residuals over all three axes."""
    rh, rw, rd = orth_residual_norms(weights.w)
    return float(
        hyper.lambda_l * rh.sum()
        + hyper.lambda_d * rw.sum()
        + hyper.lambda_c * rd.sum()
    )


# ---------------------------------------------------------------------------
# objective


class ObjectiveTerms(NamedTuple):
    terrain_loss: float
    behavior_loss: float
    offset_loss: float
    behavior_reg: float  # lambda1 * behavior_norm
    history_reg: float  # lambda2 * history_norm
    orth_reg: float

    @property
    def total(self) -> float:
        return float(sum(self))


def correction_targets(dataset: Dataset) -> np.ndarray:
    """Supervision for the offset head: the command correction that would
    have closed the observed gap, ``expected - actual``."""
    return dataset.expected - dataset.actual


def residuals(weights: ModelWeights, dataset: Dataset):
    """The three data-term residual matrices (terrain, behavior, offset)."""
    r_terrain = terrain_scores(weights, dataset.features) - dataset.terrain_labels
    r_behavior = behavior_scores(weights, dataset.features) - dataset.expected
    r_offset = offset_scores(weights, dataset.behavior_diffs) - correction_targets(dataset)
    return r_terrain, r_behavior, r_offset


def data_loss_terms(weights: ModelWeights, dataset: Dataset):
    r1, r2, r3 = residuals(weights, dataset)
    return log_cosh_sum(r1), log_cosh_sum(r2), log_cosh_sum(r3)


def data_loss(weights: ModelWeights, dataset: Dataset) -> float:
    """The smooth part of the objective: the three log-cosh data terms."""
    return float(sum(data_loss_terms(weights, dataset)))


def objective_terms(weights: ModelWeights, dataset: Dataset,
                    hyper: Hyperparams) -> ObjectiveTerms:
    f1, f2, f3 = data_loss_terms(weights, dataset)
    terms = ObjectiveTerms(
        terrain_loss=f1,
        behavior_loss=f2,
        offset_loss=f3,
        behavior_reg=hyper.lambda1 * behavior_norm(weights, dataset.layout),
        history_reg=hyper.lambda2 * history_norm(weights),
        orth_reg=orth_penalty(weights, hyper),
    )
    for name, val in zip(terms._fields, terms):
        if not np.isfinite(val):
            raise NumericError(f"objective term {name} is non-finite ({val})")
    return terms


def objective(weights: ModelWeights, dataset: Dataset, hyper: Hyperparams) -> float:
    """The full training objective; the solver decreases exactly this."""
    return objective_terms(weights, dataset, hyper).total


# ---------------------------------------------------------------------------
# gradients


class WeightGradients(NamedTuple):
    w: np.ndarray
    v: np.ndarray
    u: np.ndarray


def data_loss_gradient(weights: ModelWeights, dataset: Dataset,
                       blocks: str = "wvu") -> WeightGradients:
    """Exact gradient of :func:`data_loss`; tanh is the log-cosh derivative.

    ``blocks`` restricts which gradient tensors are filled (the others come
    back zero), skipping the residual heads the request does not touch.
    """
    w, v, u = weights.w.data, weights.v.data, weights.u.data
    x = dataset.features.data
    e = dataset.behavior_diffs.data

    gw = np.zeros_like(w)
    gv = np.zeros_like(v)
    gu = np.zeros_like(u)

    if "w" in blocks:
        t1 = np.tanh(terrain_scores(weights, dataset.features) - dataset.terrain_labels)
        gw += np.einsum("li,jik->ljk", t1, x)
    if "w" in blocks or "v" in blocks:
        t2 = np.tanh(behavior_scores(weights, dataset.features) - dataset.expected)
        for k in range(weights.history_len):
            xk = x[:, :, k]
            wk = w[:, :, k]
            vk = v[:, :, k]
            wx = wk @ xk  # (types, n)
            if "w" in blocks:
                # behavior term through both appearances of wk
                gw[:, :, k] += wx @ (vk.T @ t2).T
                gw[:, :, k] += (wk @ vk.T) @ (t2 @ xk.T)
            if "v" in blocks:
                gv[:, :, k] = t2 @ (wk.T @ wx).T
    if "u" in blocks:
        t3 = np.tanh(offset_scores(weights, dataset.behavior_diffs)
                     - correction_targets(dataset))
        gu += np.einsum("qi,rik->qrk", t3, e)
    return WeightGradients(gw, gv, gu)


def _norm_factors(weights: ModelWeights, layout: FeatureLayout, epsilon: float):
    """1 / (2 * max(norm, epsilon)) for every regularized group.

    These are the quadratic-surrogate curvatures; at the point where they are
    computed the surrogate gradient equals the true norm gradient, so the
    full-objective gradient below is exact wherever the norms are nonzero.
    """
    gn = group_norms(weights, layout)
    rh, rw, rd = orth_residual_norms(weights.w)
    un = history_norms(weights)
    guard = lambda a: 1.0 / (2.0 * np.maximum(a, epsilon))
    return guard(gn), guard(rh), guard(rw), guard(rd), guard(un)


def regularizer_gradient(weights: ModelWeights, layout: FeatureLayout,
                         hyper: Hyperparams, factors=None,
                         blocks: str = "wvu") -> WeightGradients:
    """Gradient of the regularizers, majorized at the given curvature factors.

    With ``factors=None`` the curvatures are taken at the current point,
    which makes this the true regularizer gradient almost everywhere.
    ``blocks`` restricts which gradient tensors are filled.
    """
    if factors is None:
        factors = _norm_factors(weights, layout, hyper.epsilon)
    qb, ql, qd, qc, pr = factors
    w, v, u = weights.w.data, weights.v.data, weights.u.data
    gw = np.zeros_like(w)
    gv = np.zeros_like(v)
    gu = np.zeros_like(u)

    if hyper.lambda1 > 0 and ("w" in blocks or "v" in blocks):
        for j, cols in enumerate(layout.column_slices()):
            for k in range(weights.history_len):
                vg = v[:, cols, k]
                wg = w[:, cols, k]
                m = vg @ wg.T
                scale = hyper.lambda1 * 2.0 * qb[j, k]
                if "v" in blocks:
                    gv[:, cols, k] += scale * (m @ wg)
                if "w" in blocks:
                    gw[:, cols, k] += scale * (m.T @ vg)

    if hyper.lambda2 > 0 and "u" in blocks:
        for k in range(weights.history_len):
            gu[:, :, k] += hyper.lambda2 * 2.0 * pr[k] * u[:, :, k]

    if "w" in blocks:
        _add_orth_gradient(gw, w, ql, qd, qc, hyper)
    return WeightGradients(gw, gv, gu)


def _add_orth_gradient(gw, w, ql, qd, qc, hyper):
    # d(q * fro(S S^T - I)^2)/dS = 4 q (S S^T - I) S, per axis family
    if hyper.lambda_l > 0:
        for i in range(w.shape[0]):
            s = w[i, :, :]
            g = s @ s.T - np.eye(s.shape[0])
            gw[i, :, :] += hyper.lambda_l * 4.0 * ql[i] * (g @ s)
    if hyper.lambda_d > 0:
        for j in range(w.shape[1]):
            s = w[:, j, :]
            g = s @ s.T - np.eye(s.shape[0])
            gw[:, j, :] += hyper.lambda_d * 4.0 * qd[j] * (g @ s)
    if hyper.lambda_c > 0:
        for k in range(w.shape[2]):
            s = w[:, :, k]
            g = s @ s.T - np.eye(s.shape[0])
            gw[:, :, k] += hyper.lambda_c * 4.0 * qc[k] * (g @ s)


def orth_gradient(weights: ModelWeights, hyper: Hyperparams,
                  ql, qd, qc) -> np.ndarray:
    """Gradient of the majorized orthogonality penalties alone, in w."""
    gw = np.zeros_like(weights.w.data)
    _add_orth_gradient(gw, weights.w.data, ql, qd, qc, hyper)
    return gw


def gradient(weights: ModelWeights, dataset: Dataset,
             hyper: Hyperparams) -> WeightGradients:
    """Gradient of the full objective at the current point.

    Norm terms contribute through their touching quadratic surrogates, so
    this equals the true gradient wherever no norm sits exactly at zero.
    """
    gd = data_loss_gradient(weights, dataset)
    gr = regularizer_gradient(weights, dataset.layout, hyper)
    return WeightGradients(gd.w + gr.w, gd.v + gr.v, gd.u + gr.u)


# ---------------------------------------------------------------------------
# dataset assembly and reporting


class InstanceWindows(NamedTuple):
    features: np.ndarray  # (feature_dim, n, history)
    expected: np.ndarray  # (behavior_dim, n)
    actual: np.ndarray  # (behavior_dim, n)
    diffs: np.ndarray  # (behavior_dim, n, history)


def assemble_instances(features, expected, actual, history_len) -> InstanceWindows:
    """Slide a history window over a trajectory and stack the instances.

    ``features`` is (T, feature_dim) and ``expected``/``actual`` are
    (T, behavior_dim) step series.  Instance t covers steps t-history+1..t
    with the most recent step in column 0; both the feature window and the
    deviation window use the same stacking.  Produces T - history + 1
    instances.
    """
    f = np.asarray(features, dtype=float)
    y = np.asarray(expected, dtype=float)
    a = np.asarray(actual, dtype=float)
    if f.ndim != 2 or y.ndim != 2 or a.ndim != 2:
        raise DimensionError("trajectory arrays must be 2-D (steps, dim)")
    steps = f.shape[0]
    if y.shape[0] != steps or a.shape[0] != steps:
        raise DimensionError("trajectory arrays must agree on the step count")
    if y.shape != a.shape:
        raise DimensionError("expected and actual behavior dims disagree")
    c = int(history_len)
    if steps < c:
        raise InsufficientHistoryError(
            f"trajectory has {steps} steps, needs at least {c}"
        )
    d = a - y
    n = steps - c + 1
    xw = np.zeros((f.shape[1], n, c))
    ew = np.zeros((y.shape[1], n, c))
    for k in range(c):
        rows = slice(c - 1 - k, steps - k)
        xw[:, :, k] = f[rows].T
        ew[:, :, k] = d[rows].T
    return InstanceWindows(xw, y[c - 1:].T.copy(), a[c - 1:].T.copy(), ew)


class ImportanceReport(NamedTuple):
    modality_names: tuple
    modality_shares: np.ndarray  # (m,), sums to 1
    timestep_shares: np.ndarray  # (history,), sums to 1


def importance_report(weights: ModelWeights, layout: FeatureLayout) -> ImportanceReport:
    """Relative importance of feature modalities and history steps.

    A modality's weight is its group norms summed over history steps; a
    history step's weight adds the offset tensor's slice norm to the group
    norms at that step.  Both are normalized to shares.
    """
    gn = group_norms(weights, layout)
    un = history_norms(weights)
    modality_total = gn.sum(axis=1)
    step_total = gn.sum(axis=0) + un
    if modality_total.sum() <= 0.0 or step_total.sum() <= 0.0:
        raise UndefinedImportanceError(
            "all group norms are zero; importance shares are undefined"
        )
    return ImportanceReport(
        layout.modality_names,
        modality_total / modality_total.sum(),
        step_total / step_total.sum(),
    )
