"""Planar n-link swimmer in a viscous fluid (resistive-force model).

Generalized coordinates are the head point and the absolute link angles.
Each link feels anisotropic drag per unit length, ``-k_n v_perp`` normal to
its axis and ``-k_t v_par`` along it; integrating the drag over the links
gives a configuration-dependent damping matrix ``D(theta)``. Joint torques
act equal-and-opposite on neighbouring links. Velocities are updated
implicitly against the drag, positions explicitly with the new velocities:

    (M + dt D) qdot' = M qdot + dt Q_tau,     q' = q + dt qdot'

``M`` is a diagonal mass model (total mass on the head translation,
rod inertia on each angle). With ``D`` symmetric positive semidefinite the
update never increases kinetic energy when the torques are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EpisodeDone(RuntimeError):
    """``step`` called on a finished episode."""


@dataclass(frozen=True)
class SwimmerConfig:
    links: int = 6
    link_length: float = 0.1
    link_mass: float = 0.01
    k_n: float = 10.0
    k_t: float = 0.1
    tau_max: float = 0.05
    dt: float = 0.01
    episode_length: int = 1000

    @property
    def joints(self) -> int:
        return self.links - 1

    @property
    def obs_dim(self) -> int:
        return 2 * self.joints

    @property
    def action_dim(self) -> int:
        return self.joints


@dataclass(frozen=True, eq=False)
class SwimmerState:
    """Batched swimmer state; every array has a leading batch axis."""

    head: np.ndarray  # (B, 2) m
    head_vel: np.ndarray  # (B, 2) m/s
    theta: np.ndarray  # (B, links) rad
    omega: np.ndarray  # (B, links) rad/s
    t: int = 0

    @property
    def qdot(self) -> np.ndarray:
        return np.concatenate([self.head_vel, self.omega], axis=1)


def rest_state(cfg: SwimmerConfig, batch: int = 1) -> SwimmerState:
    """Straight body along +x, head at the origin, everything still."""
    return SwimmerState(
        head=np.zeros((batch, 2)),
        head_vel=np.zeros((batch, 2)),
        theta=np.zeros((batch, cfg.links)),
        omega=np.zeros((batch, cfg.links)),
    )


def observe(state: SwimmerState) -> np.ndarray:
    """Joint angles followed by joint angular velocities, shape (B, 2*joints)."""
    return np.concatenate(
        [np.diff(state.theta, axis=1), np.diff(state.omega, axis=1)], axis=1
    )


def mass_diagonal(cfg: SwimmerConfig) -> np.ndarray:
    m, L = cfg.link_mass, cfg.link_length
    return np.concatenate([[m * cfg.links] * 2, [m * L * L / 12.0] * cfg.links])


def damping_matrix(cfg: SwimmerConfig, theta: np.ndarray) -> np.ndarray:
    """Drag matrix ``D`` with generalized drag force ``-D qdot``; shape (B, 2+n, 2+n).

    The velocity of the point a distance ``s`` behind link k's front joint
    is affine in ``s``, so the drag integral has a closed form. With
    ``alpha[k, i] = n_k . n_i`` and ``beta[k, i] = t_k . n_i`` weighted by
    ``W`` (1 for links ahead of k, 1/2 for link k itself) the angle block is
    ``L^3 (k_n Aw^T Aw + k_t Bw^T Bw) + k_n L^3 / 12``.
    """
    b, n = theta.shape
    L = cfg.link_length
    c, s = np.cos(theta), np.sin(theta)
    alpha = c[:, :, None] * c[:, None, :] + s[:, :, None] * s[:, None, :]
    beta = s[:, :, None] * c[:, None, :] - c[:, :, None] * s[:, None, :]
    W = np.tril(np.ones((n, n)), -1) + 0.5 * np.eye(n)
    Aw, Bw = alpha * W, beta * W
    normal = np.stack([-s, c], axis=-1)  # (B, n, 2)
    tangent = np.stack([c, s], axis=-1)
    NT, TT = np.swapaxes(normal, 1, 2), np.swapaxes(tangent, 1, 2)

    D = np.empty((b, n + 2, n + 2))
    D[:, :2, :2] = L * (cfg.k_n * (NT @ normal) + cfg.k_t * (TT @ tangent))
    cross = -L * L * (cfg.k_n * (NT @ Aw) + cfg.k_t * (TT @ Bw))
    D[:, :2, 2:] = cross
    D[:, 2:, :2] = np.swapaxes(cross, 1, 2)
    D[:, 2:, 2:] = L**3 * (
        cfg.k_n * (np.swapaxes(Aw, 1, 2) @ Aw) + cfg.k_t * (np.swapaxes(Bw, 1, 2) @ Bw)
    ) + (cfg.k_n * L**3 / 12.0) * np.eye(n)
    return D


def torque_forces(cfg: SwimmerConfig, tau: np.ndarray) -> np.ndarray:
    """Generalized forces of joint torques; joint j pushes link j+1 by +tau, link j by -tau."""
    b = tau.shape[0]
    q = np.zeros((b, 2 + cfg.links))
    q[:, 3:] += tau
    q[:, 2:-1] -= tau
    return q


def kinetic_energy(cfg: SwimmerConfig, state: SwimmerState) -> np.ndarray:
    qd = state.qdot
    return 0.5 * np.sum(mass_diagonal(cfg) * qd * qd, axis=1)


def advance(cfg: SwimmerConfig, state: SwimmerState, action: np.ndarray) -> tuple[SwimmerState, np.ndarray]:
    """One physics step for a batch; ``action`` in [-1, 1] is scaled by ``tau_max``.

    Returns the new state and the per-row reward (head x-displacement).
    """
    action = np.asarray(action, dtype=float)
    if action.shape != (state.theta.shape[0], cfg.joints):
        raise ValueError(f"torques must have shape {(state.theta.shape[0], cfg.joints)}, got {action.shape}")
    if not np.all(np.isfinite(action)):
        raise ValueError("non-finite torque")
    tau = np.clip(action, -1.0, 1.0) * cfg.tau_max
    M = mass_diagonal(cfg)
    D = damping_matrix(cfg, state.theta)
    lhs = cfg.dt * D
    idx = np.arange(M.size)
    lhs[:, idx, idx] += M
    rhs = M * state.qdot + cfg.dt * torque_forces(cfg, tau)
    qdot = np.linalg.solve(lhs, rhs[..., None])[..., 0]
    head_vel, omega = qdot[:, :2], qdot[:, 2:]
    new = SwimmerState(
        head=state.head + cfg.dt * head_vel,
        head_vel=head_vel,
        theta=state.theta + cfg.dt * omega,
        omega=omega,
        t=state.t + 1,
    )
    return new, head_vel[:, 0] * cfg.dt


class SwimmerEnv:
    """Single-rollout episodic interface (reset/step) around :func:`advance`."""

    def __init__(self, cfg: SwimmerConfig | None = None):
        self.cfg = cfg or SwimmerConfig()
        self.state: SwimmerState | None = None

    @property
    def obs_dim(self) -> int:
        return self.cfg.obs_dim

    @property
    def action_dim(self) -> int:
        return self.cfg.action_dim

    @property
    def episode_length(self) -> int:
        return self.cfg.episode_length

    def reset(self, seed: int | None = None) -> np.ndarray:
        # the start configuration is canonical; the seed is accepted for the Task contract
        self.state = rest_state(self.cfg)
        return observe(self.state)[0]

    def step(self, torques) -> tuple[np.ndarray, float, bool]:
        if self.state is None:
            raise EpisodeDone("call reset() first")
        if self.state.t >= self.cfg.episode_length:
            raise EpisodeDone("episode finished; call reset()")
        torques = np.asarray(torques, dtype=float)
        if torques.shape != (self.cfg.joints,):
            raise ValueError(f"expected {self.cfg.joints} torques, got shape {torques.shape}")
        self.state, reward = advance(self.cfg, self.state, torques[None, :])
        done = self.state.t >= self.cfg.episode_length
        return observe(self.state)[0], float(reward[0]), done
