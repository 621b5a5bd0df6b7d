"""Recency-weighted constant-velocity predictor with closed-form gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .perception import Perturbation, Track, smoothed_rates
from .world import Trajectory, wrap_angle


@dataclass(frozen=True)
class PredictorParams:
    gamma: float = 0.2
    T: int = 6
    dt: float = 0.5
    H: int = 5

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.T < 1 or self.H < 2 or self.dt <= 0:
            raise ValueError("need T >= 1, H >= 2 and dt > 0")


@dataclass
class PredictedTrajectory:
    positions: np.ndarray
    dt: float
    speed: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.positions)

    def as_trajectory(self) -> Trajectory:
        """Future steps 1..T as a trajectory (t0 = 1)."""
        n = len(self.positions)
        return Trajectory(self.positions.copy(), np.full(n, self.heading), np.full(n, self.speed), self.dt, t0=1)


def recency_weights(gamma: float, n: int) -> np.ndarray:
    """Normalized gamma**k for k = 0..n-1 (k = 0 is the most recent)."""
    w = gamma ** np.arange(n, dtype=float)
    return w / w.sum()


# --------------------------------------------------------------------------- state perturbation

def apply_state_perturbation(history: Track, delta: Perturbation, frame: int = 0) -> Track:
    """Offset one frame of a track (0 = current, -1 = previous, ...).

    Positions and heading of the other frames are untouched; derived speed
    and acceleration are recomputed from the perturbed positions."""
    n = len(history)
    if n < 2:
        raise ValueError("history needs at least two states")
    i = n - 1 + frame
    if not 0 <= i < n:
        raise IndexError("frame outside the history window")
    out = history.copy()
    out.xy[i] += (delta.dx, delta.dy)
    out.heading[i] = wrap_angle(out.heading[i] + delta.dh)
    out.speed, out.accel = smoothed_rates(out.xy, out.dt, getattr(history, "alpha", 0.5))
    return out


def _window(history: Trajectory, H: int) -> tuple[np.ndarray, np.ndarray]:
    """Last H positions/headings ordered oldest first, front-padded by extrapolation."""
    xy, h = history.xy[-H:], history.heading[-H:]
    if len(xy) < H:
        step = xy[1] - xy[0] if len(xy) > 1 else np.zeros(2)
        k = np.arange(H - len(xy), 0, -1)[:, None]
        xy = np.vstack([xy[0] - k * step, xy])
        h = np.r_[np.full(H - len(h), h[0]), h]
    return xy, h


# --------------------------------------------------------------------------- batched core

def forward_batch(xy: np.ndarray, heading: np.ndarray, deltas: np.ndarray, params: PredictorParams,
                  frame: int = 0) -> tuple[np.ndarray, dict]:
    """Predictions for a batch of perturbations of one history window.

    ``xy`` (H, 2) and ``heading`` (H,) are ordered oldest first; ``deltas`` is
    (B, 3). Returns positions (B, T, 2) and intermediates for the gradient."""
    H, T, dt = len(xy), params.T, params.dt
    deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
    B = len(deltas)
    j = H - 1 + frame
    P = np.broadcast_to(xy, (B, H, 2)).copy()
    P[:, j] += deltas[:, :2]
    hd = np.broadcast_to(heading, (B, H)).copy()
    hd[:, j] += deltas[:, 2]
    # differences D_k = p_k - p_{k+1}, k = 0 most recent
    rev = P[:, ::-1]
    D = rev[:, :-1] - rev[:, 1:]
    norms = np.linalg.norm(D, axis=2)
    w = recency_weights(params.gamma, H - 1)
    s = (norms * w).sum(axis=1) / dt
    u = recency_weights(params.gamma, H)
    hr = hd[:, ::-1]
    S = (u * np.sin(hr)).sum(axis=1)
    C = (u * np.cos(hr)).sum(axis=1)
    hbar = np.arctan2(S, C)
    tau = dt * np.arange(1, T + 1)
    e = np.stack([np.cos(hbar), np.sin(hbar)], axis=1)
    Y = P[:, -1][:, None, :] + tau[None, :, None] * s[:, None, None] * e[:, None, :]
    cache = dict(D=D, norms=norms, w=w, u=u, S=S, C=C, hbar=hbar, s=s, e=e, tau=tau, hr=hr, k=-frame)
    return Y, cache


def adv_loss_batch(Y: np.ndarray, planned_xy: np.ndarray) -> np.ndarray:
    n = min(Y.shape[1], len(planned_xy))
    r = Y[:, :n] - planned_xy[None, :n]
    return np.sqrt((r ** 2).sum(axis=(1, 2)))


def grad_batch(Y: np.ndarray, cache: dict, planned_xy: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(loss (B,), gradient (B, 3)) of ||Y - P|| w.r.t. the perturbation."""
    n = min(Y.shape[1], len(planned_xy))
    r = Y[:, :n] - planned_xy[None, :n]
    L = np.sqrt((r ** 2).sum(axis=(1, 2)))
    k = cache["k"]
    D, norms, w = cache["D"], cache["norms"], cache["w"]
    B = len(Y)
    ds = np.zeros((B, 2))
    safe = np.where(norms > 0, norms, 1.0)
    unit = np.where((norms > 0)[..., None], D / safe[..., None], 0.0)
    if k <= len(w) - 1:
        ds += w[k] * unit[:, k]
    if k >= 1:
        ds -= w[k - 1] * unit[:, k - 1]
    ds /= dt
    S, C, u, hr = cache["S"], cache["C"], cache["u"], cache["hr"]
    den = S ** 2 + C ** 2
    dh = np.where(den > 0, u[k] * (C * np.cos(hr[:, k]) + S * np.sin(hr[:, k])) / np.where(den > 0, den, 1.0), 0.0)
    e, s, tau = cache["e"], cache["s"], cache["tau"][:n]
    ep = np.stack([-e[:, 1], e[:, 0]], axis=1)
    # r . dY/dtheta summed over time
    re = (r * e[:, None, :]).sum(axis=2) @ tau            # (B,)
    rep = (r * ep[:, None, :]).sum(axis=2) @ tau
    rsum = r.sum(axis=1)                                   # (B, 2)
    g = np.zeros((B, 3))
    g[:, :2] = re[:, None] * ds
    if k == 0:
        g[:, :2] += rsum
    g[:, 2] = rep * s * dh
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(L[:, None] > 0, g / L[:, None], 0.0)
    return L, g


# --------------------------------------------------------------------------- public API

def predict(history: Trajectory, params: PredictorParams) -> PredictedTrajectory:
    xy, h = _window(history, params.H)
    Y, c = forward_batch(xy, h, np.zeros((1, 3)), params)
    return PredictedTrajectory(Y[0], params.dt, float(c["s"][0]), float(c["hbar"][0]))


def predict_perturbed(history: Trajectory, delta: Perturbation, params: PredictorParams,
                      frame: int = 0) -> PredictedTrajectory:
    xy, h = _window(history, params.H)
    Y, c = forward_batch(xy, h, delta.as_array()[None], params, frame)
    return PredictedTrajectory(Y[0], params.dt, float(c["s"][0]), float(c["hbar"][0]))


def grad_adv_loss(history: Trajectory, delta: Perturbation, planned: Trajectory, params: PredictorParams,
                  frame: int = 0) -> np.ndarray:
    """Gradient of ||predict(perturbed history) - planned|| w.r.t. (dx, dy, dh)."""
    xy, h = _window(history, params.H)
    Y, c = forward_batch(xy, h, delta.as_array()[None], params, frame)
    return grad_batch(Y, c, np.asarray(planned.xy), params.dt)[1][0]


def speed_weight0(gamma: float, H: int) -> float:
    """Weight of the most recent displacement in the speed estimate."""
    return (1 - gamma) / (1 - gamma ** (H - 1))


__all__ = ["PredictorParams", "PredictedTrajectory", "apply_state_perturbation", "predict",
           "predict_perturbed", "grad_adv_loss", "recency_weights", "forward_batch", "grad_batch",
           "adv_loss_batch", "speed_weight0"]
