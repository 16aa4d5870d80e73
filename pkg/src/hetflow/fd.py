"""Constrained fundamental-diagram surfaces.

Fits speed as a network of density (one-variable) or of density and the
heterogeneity attribute (two-variable), while penalizing violations of

    V >= 0            (speeds stay non-negative)
    2 dV/drho + rho d2V/drho2 < 0   (flow stays concave, dynamics hyperbolic)

at a fixed set of box-sampled points. The total loss is
``data_mse + penalty_coeff * penalty_mse``; derivative terms train through
the engine's forward-over-reverse path.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn
from .errors import InsufficientData

log = logging.getLogger(__name__)

TWO_VAR = "TWO_VAR"
ONE_VAR = "ONE_VAR"

NONNEG_TOL = 1e-2      # m/s slack when auditing V >= 0
CONCAVITY_TOL = 1e-2   # slack when auditing 2 dV + rho ddV < 0


@dataclass
class FdTrainConfig:
    penalty_coeff: float = 1000.0
    n_penalty_points: int = 200
    train_fraction: float = 0.6
    epochs: int = 50_000
    learning_rate: float = 1e-3
    hidden_layers: int = 3
    hidden_width: int = 50
    rho_max: Optional[float] = None     # default: 1.1 x data max
    omega_min: Optional[float] = None   # default: data range widened 10 %
    omega_max: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.penalty_coeff <= 0:
            raise ValueError("penalty_coeff must be > 0")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must lie in (0, 1]")


@dataclass
class ConstraintAudit:
    n_points: int
    nonneg_violation_fraction: float
    nonneg_worst: float          # most negative speed found (0 if none)
    concavity_violation_fraction: float
    concavity_worst: float       # largest positive concavity term (0 if none)

    @property
    def violation_fraction(self) -> float:
        return max(self.nonneg_violation_fraction, self.concavity_violation_fraction)


@dataclass
class FdModel:
    kind: str
    net: nn.MlpModel
    rho_max: float
    omega_min: Optional[float] = None
    omega_max: Optional[float] = None
    audit: Optional[ConstraintAudit] = None
    holdout_rmse: Optional[float] = None
    loss_history: np.ndarray = field(default=None, repr=False)

    @property
    def input_dim(self) -> int:
        return 2 if self.kind == TWO_VAR else 1


def _stack_inputs(m: FdModel, rho, omega) -> np.ndarray:
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if m.kind == ONE_VAR:
        return rho.reshape(-1, 1)
    omega = np.broadcast_to(np.asarray(omega, dtype=float), rho.shape).reshape(-1)
    return np.column_stack([rho, omega])


def fd_eval(m: FdModel, rho, omega=None) -> np.ndarray:
    """Speed surface evaluation; omega is ignored for one-variable models."""
    x = _stack_inputs(m, rho, omega if omega is not None else 0.0)
    return nn.mlp_forward(m.net, x)[:, 0]


def fd_derivatives(m: FdModel, rho, omega=None):
    """(value, dV/drho, d2V/drho2) along the density axis."""
    x = _stack_inputs(m, rho, omega if omega is not None else 0.0)
    f, f1, f2 = nn.input_derivatives(m.net, x, dim=0)
    return f[:, 0], f1[:, 0], f2[:, 0]


def _coerce_samples(samples, kind: str) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(samples, dtype=float)
    want = 3 if kind == TWO_VAR else 2
    if arr.ndim != 2 or arr.shape[1] != want:
        raise ValueError(f"{kind} expects rows of {want} values, got shape {arr.shape}")
    return arr[:, :-1], arr[:, -1]


def penalty_points(kind: str, rho_max: float, omega_min: float, omega_max: float,
                   n_points: int, seed: int) -> np.ndarray:
    """Fixed constraint-sampling set, drawn once per training run."""
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0.0, rho_max, size=n_points)
    if kind == ONE_VAR:
        return rho.reshape(-1, 1)
    omega = rng.uniform(omega_min, omega_max, size=n_points)
    return np.column_stack([rho, omega])


def penalty_loss(net: nn.MlpModel, points: np.ndarray):
    """Mean squared constraint violation at the fixed points, plus its
    parameter gradients."""
    n = points.shape[0]
    rho = points[:, :1]
    f, f1, f2 = nn.input_derivatives(net, points, dim=0)
    neg = np.minimum(0.0, f)
    concave = 2.0 * f1 + rho * f2
    pos = np.maximum(0.0, concave)
    value = float(np.mean(neg ** 2) + np.mean(pos ** 2))
    cot_f = 2.0 * neg / n
    cot_f1 = 4.0 * pos / n
    cot_f2 = 2.0 * pos * rho / n
    _, grads = nn.derivative_backprop(net, points, 0, cot_f, cot_f1, cot_f2)
    return value, grads


def train_fd(samples, kind: str = TWO_VAR, cfg: FdTrainConfig = None) -> FdModel:
    """Fit a constrained speed surface.

    The sample set is split train/holdout by ``cfg.train_fraction`` (seeded);
    the returned model carries the holdout percent error and a constraint
    audit over the sampling box.
    """
    cfg = cfg or FdTrainConfig()
    x, v = _coerce_samples(samples, kind)
    if x.shape[0] < 10:
        raise InsufficientData(f"{x.shape[0]} samples; need at least 10")

    rho_max = cfg.rho_max if cfg.rho_max is not None else 1.1 * float(x[:, 0].max())
    if kind == TWO_VAR:
        w_lo, w_hi = float(x[:, 1].min()), float(x[:, 1].max())
        margin = 0.1 * (w_hi - w_lo)
        omega_min = cfg.omega_min if cfg.omega_min is not None else w_lo - margin
        omega_max = cfg.omega_max if cfg.omega_max is not None else w_hi + margin
    else:
        omega_min = omega_max = None

    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    n_train = max(int(round(cfg.train_fraction * n)), 1)
    order = rng.permutation(n)
    train_idx, hold_idx = order[:n_train], order[n_train:]

    spec = nn.MlpSpec(input_dim=x.shape[1], output_dim=1,
                      hidden_layers=cfg.hidden_layers, hidden_width=cfg.hidden_width,
                      seed=cfg.seed)
    net = nn.mlp_init(spec)
    net.set_normalization(x[train_idx])

    pen = penalty_points(kind, rho_max, omega_min or 0.0, omega_max or 1.0,
                         cfg.n_penalty_points, cfg.seed + 1)
    x_train, v_train = x[train_idx], v[train_idx].reshape(-1, 1)

    def loss(model):
        d_value, d_grads = nn.mse_loss(model, x_train, v_train)
        p_value, p_grads = penalty_loss(model, pen)
        grads = nn.add_grads(None, d_grads)
        grads = nn.add_grads(grads, p_grads, scale=cfg.penalty_coeff)
        return d_value + cfg.penalty_coeff * p_value, grads

    net, history = nn.train(net, loss, nn.AdamConfig(
        learning_rate=cfg.learning_rate, epochs=cfg.epochs, seed=cfg.seed))

    model = FdModel(kind=kind, net=net, rho_max=rho_max,
                    omega_min=omega_min, omega_max=omega_max, loss_history=history)
    model.audit = audit_constraints(model)
    if hold_idx.size:
        hold = np.column_stack([x[hold_idx], v[hold_idx]])
        model.holdout_rmse = fd_rmse(model, hold)
    return model


def fd_rmse(m: FdModel, samples) -> float:
    """Relative RMSE in percent; zero-speed samples are excluded."""
    x, v = _coerce_samples(samples, m.kind)
    keep = v > 0.0
    if not keep.all():
        log.info("fd_rmse: excluding %d zero/negative-speed samples", int((~keep).sum()))
    if not keep.any():
        return 0.0
    pred = nn.mlp_forward(m.net, x[keep])[:, 0]
    return float(np.sqrt(np.mean(((pred - v[keep]) / v[keep]) ** 2)) * 100.0)


def audit_constraints(m: FdModel, n_grid: int = 50,
                      nonneg_tol: float = NONNEG_TOL,
                      concavity_tol: float = CONCAVITY_TOL) -> ConstraintAudit:
    """Check both shape constraints on an n_grid x n_grid lattice over the
    sampling box; reports violation fractions and worst magnitudes."""
    rho = np.linspace(0.0, m.rho_max, n_grid)
    if m.kind == TWO_VAR:
        omega = np.linspace(m.omega_min, m.omega_max, n_grid)
        rr, ww = np.meshgrid(rho, omega, indexing="ij")
        pts = np.column_stack([rr.ravel(), ww.ravel()])
    else:
        pts = np.repeat(rho, n_grid).reshape(-1, 1)
    f, f1, f2 = nn.input_derivatives(m.net, pts, dim=0)
    f = f[:, 0]
    concave = (2.0 * f1 + pts[:, :1] * f2)[:, 0]

    neg_mask = f < -nonneg_tol
    pos_mask = concave > concavity_tol
    return ConstraintAudit(
        n_points=pts.shape[0],
        nonneg_violation_fraction=float(neg_mask.mean()),
        nonneg_worst=float(-f.min()) if f.min() < 0 else 0.0,
        concavity_violation_fraction=float(pos_mask.mean()),
        concavity_worst=float(concave.max()) if concave.max() > 0 else 0.0,
    )


# ---------------------------------------------------------------------------
# persistence

def save_fd_model(m: FdModel, path) -> None:
    data = nn.model_to_dict(m.net)
    data["fd"] = {
        "kind": m.kind,
        "rho_max": m.rho_max,
        "omega_min": m.omega_min,
        "omega_max": m.omega_max,
        "holdout_rmse": m.holdout_rmse,
        "audit": None if m.audit is None else vars(m.audit),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)


def load_fd_model(path) -> FdModel:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    net = nn.model_from_dict(data)
    meta = data["fd"]
    audit = ConstraintAudit(**meta["audit"]) if meta.get("audit") else None
    return FdModel(kind=meta["kind"], net=net, rho_max=meta["rho_max"],
                   omega_min=meta["omega_min"], omega_max=meta["omega_max"],
                   audit=audit, holdout_rmse=meta.get("holdout_rmse"))
