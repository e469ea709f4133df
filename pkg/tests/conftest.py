"""Shared builders and the session-scoped trained pipeline."""

import numpy as np
import pytest

from terranav import config as config_mod
from terranav import model as model_mod
from terranav import simulator as sim_mod
from terranav import solver as solver_mod
from terranav.tensor_core import Tensor3


def random_dataset(rng, n_types=2, feature_dim=6, history=3, behaviors=2,
                   n=10, modality_dims=None, names=None):
    if modality_dims is None:
        modality_dims = (feature_dim,)
        names = ("all",)
    layout = model_mod.FeatureLayout(tuple(modality_dims), tuple(names))
    return model_mod.Dataset(
        features=Tensor3(rng.standard_normal((feature_dim, n, history))),
        terrain_labels=np.eye(n_types)[:, rng.integers(0, n_types, n)],
        expected=rng.standard_normal((behaviors, n)),
        actual=rng.standard_normal((behaviors, n)),
        behavior_diffs=Tensor3(rng.standard_normal((behaviors, n, history))),
        layout=layout,
    )


def random_weights(rng, n_types, feature_dim, history, behaviors, scale=0.5):
    return model_mod.ModelWeights(
        Tensor3(rng.uniform(-scale, scale, (n_types, feature_dim, history))),
        Tensor3(rng.uniform(-scale, scale, (behaviors, feature_dim, history))),
        Tensor3(rng.uniform(-scale, scale, (behaviors, behaviors, history))),
    )


def fd_gradient(f, weights, h=1e-6):
    """Central finite differences of a scalar function of ModelWeights."""
    out = []
    for name in ("w", "v", "u"):
        arr = getattr(weights, name).data
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            plus = arr.copy()
            plus[idx] += h
            minus = arr.copy()
            minus[idx] -= h
            g[idx] = (f(weights.replace(**{name: Tensor3(plus)}))
                      - f(weights.replace(**{name: Tensor3(minus)}))) / (2 * h)
        out.append(g)
    return model_mod.WeightGradients(*out)


@pytest.fixture(scope="session")
def trained_world():
    """Default-config world trained on identity plus weakened-motor data.

    Shared by the closed-loop acceptance checks and the end-to-end smoke
    tests so the expensive solve runs once per session.
    """
    cfg = config_mod.from_dict({})
    fg = cfg.feature_generator()
    data_cfg = cfg.effective["data"]
    dataset = sim_mod.gen_dataset(
        tracks=[cfg.tracks[name] for name in data_cfg["tracks"]],
        setbacks=[cfg.setbacks[name] for name in data_cfg["setbacks"]],
        seeds=data_cfg["seeds"],
        history_len=cfg.hyperparams.history_len,
        params=cfg.sim,
        feature_gen=fg,
        speed_table=cfg.speed_table,
        n_types=cfg.terrain_types,
        stride=data_cfg["stride"],
    )
    solver_cfg = solver_mod.SolverConfig(
        max_outer_iters=60, tol=1e-5, inner_max_steps=15,
        inner_step_tol=1e-9, seed=0,
    )
    weights, report = solver_mod.solve(dataset, cfg.hyperparams, solver_cfg)
    return {"cfg": cfg, "feature_gen": fg, "dataset": dataset,
            "weights": weights, "report": report}
