"""Synthetic trainable problems with exact snapshot/restore.

Each oracle owns a flat parameter vector, an optional momentum buffer and a
numpy ``Generator``. ``step(lr)`` reports the loss at the current point and
then applies one optimizer update, so the first reported loss is the initial
loss. A :class:`Checkpoint` captures all three pieces of state, which makes
``restore(snapshot())`` followed by identical ``step`` calls bit-exact.
"""

from __future__ import annotations

import copy
import math
import pickle
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

DIVERGENCE_FACTOR = 1e12


class DivergedError(ArithmeticError):
    """Training blew up: non-finite state or loss above ``1e12`` x initial loss."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"diverged at oracle step {step} (loss={loss!r})")
        self.step = step
        self.loss = loss


class NoOptimumError(RuntimeError):
    """Every run of a grid search diverged."""


@dataclass(frozen=True, eq=False)
class Checkpoint:
    params: np.ndarray
    momentum: np.ndarray | None
    rng_state: dict[str, Any]
    step_count: int

    def to_bytes(self) -> bytes:
        return pickle.dumps(
            {
                "params": self.params,
                "momentum": self.momentum,
                "rng_state": self.rng_state,
                "step_count": self.step_count,
            },
            protocol=pickle.HIGHEST_PROTOCOL,
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        return cls(**pickle.loads(blob))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        same_mom = (self.momentum is None and other.momentum is None) or (
            self.momentum is not None
            and other.momentum is not None
            and self.momentum.tobytes() == other.momentum.tobytes()
        )
        return (
            self.params.tobytes() == other.params.tobytes()
            and same_mom
            and self.rng_state == other.rng_state
            and self.step_count == other.step_count
        )


class Oracle:
    """SGD (optionally heavy-ball momentum) on a flat parameter vector.

    Subclasses provide ``_loss_and_grad(params)``; they may draw from
    ``self.rng`` but must not keep any other mutable state.
    """

    def __init__(
        self,
        params: np.ndarray,
        seed: int,
        optimizer: str = "sgd",
        momentum_coeff: float = 0.9,
    ):
        if optimizer not in ("sgd", "momentum"):
            raise ValueError(f"unknown optimizer {optimizer!r}")
        self.params = np.array(params, dtype=np.float64)
        self.rng = np.random.default_rng(seed)
        self.optimizer = optimizer
        self.momentum_coeff = float(momentum_coeff)
        self.momentum = np.zeros_like(self.params) if optimizer == "momentum" else None
        self.step_count = 0
        self.initial_loss = self.loss()

    def _loss_and_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def loss(self) -> float:
        """Deterministic loss at the current parameters (no RNG draws)."""
        raise NotImplementedError

    def step(self, lr: float) -> float:
        if not lr >= 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        loss, grad = self._loss_and_grad(self.params)
        limit = DIVERGENCE_FACTOR * max(self.initial_loss, np.finfo(np.float64).tiny)
        if not math.isfinite(loss) or loss > limit:
            raise DivergedError(self.step_count, loss)
        if self.momentum is not None:
            self.momentum *= self.momentum_coeff
            self.momentum += grad
            grad = self.momentum
        self.params -= lr * grad
        self.step_count += 1
        if not np.all(np.isfinite(self.params)):
            raise DivergedError(self.step_count, math.inf)
        return loss

    def snapshot(self) -> Checkpoint:
        return Checkpoint(
            params=self.params.copy(),
            momentum=None if self.momentum is None else self.momentum.copy(),
            rng_state=copy.deepcopy(self.rng.bit_generator.state),
            step_count=self.step_count,
        )

    def restore(self, ckpt: Checkpoint) -> None:
        self.params = ckpt.params.copy()
        self.momentum = None if ckpt.momentum is None else ckpt.momentum.copy()
        self.rng.bit_generator.state = copy.deepcopy(ckpt.rng_state)
        self.step_count = ckpt.step_count


class QuadraticOracle(Oracle):
    """``0.5 * sum(h_i * psi_i**2)`` with additive Gaussian gradient noise.

    The curvatures ``h_i`` are log-spaced from ``curvature`` down to
    ``curvature / condition_number``, so ``curvature`` is always the gradient
    Lipschitz constant. ``condition_number=1`` gives the isotropic bowl
    ``0.5 * C * |psi|**2``.
    """

    def __init__(
        self,
        curvature: float = 100.0,
        dim: int = 1,
        noise_std: float = 0.0,
        seed: int = 0,
        condition_number: float = 1.0,
        init_scale: float = 1.0,
        optimizer: str = "sgd",
        momentum_coeff: float = 0.9,
    ):
        if curvature <= 0 or dim < 1 or noise_std < 0 or condition_number < 1:
            raise ValueError("invalid quadratic oracle parameters")
        self.curvature = float(curvature)
        self.noise_std = float(noise_std)
        if dim == 1 or condition_number == 1.0:
            self.h = np.full(dim, self.curvature)
        else:
            self.h = self.curvature * condition_number ** (-np.arange(dim) / (dim - 1))
        super().__init__(np.full(dim, float(init_scale)), seed, optimizer, momentum_coeff)

    @property
    def optimal_lr(self) -> float:
        return 1.0 / self.curvature

    def loss(self) -> float:
        p = self.params
        return 0.5 * float(self.h @ (p * p))

    def _loss_and_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        grad = self.h * params
        loss = 0.5 * float(grad @ params)
        if self.noise_std > 0:
            grad = grad + self.noise_std * self.rng.standard_normal(params.size)
        return loss, grad


def quadratic_step(oracle: QuadraticOracle, lr: float) -> float:
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    return oracle.step(lr)


class MLPOracle(Oracle):
    """One-hidden-layer tanh regressor trained by minibatch SGD on MSE.

    Inputs and targets come from a frozen teacher network of the same shape,
    drawn from ``seed`` at construction. ``sizes`` is ``(n_in, n_hidden, n_out)``.
    The reported loss is the minibatch loss before the update.
    """

    def __init__(
        self,
        sizes: Sequence[int] = (8, 16, 1),
        n_samples: int = 512,
        batch_size: int = 64,
        seed: int = 42,
        optimizer: str = "sgd",
        momentum_coeff: float = 0.9,
        teacher_scale: float = 2.0,
    ):
        if len(sizes) != 3:
            raise ValueError("MLPOracle supports exactly one hidden layer: (in, hidden, out)")
        self.sizes = tuple(int(s) for s in sizes)
        n_in, n_hid, n_out = self.sizes
        self.batch_size = min(int(batch_size), int(n_samples))
        data_rng = np.random.default_rng([seed, 0xDA7A])
        self.X = data_rng.standard_normal((n_samples, n_in))
        tw1 = teacher_scale * data_rng.standard_normal((n_in, n_hid)) / math.sqrt(n_in)
        tw2 = teacher_scale * data_rng.standard_normal((n_hid, n_out)) / math.sqrt(n_hid)
        self.Y = np.tanh(self.X @ tw1) @ tw2

        self._shapes = [(n_in, n_hid), (n_hid,), (n_hid, n_out), (n_out,)]
        init_rng = np.random.default_rng([seed, 0x1417])
        w1 = init_rng.standard_normal((n_in, n_hid)) / math.sqrt(n_in)
        w2 = init_rng.standard_normal((n_hid, n_out)) / math.sqrt(n_hid)
        flat = np.concatenate([w1.ravel(), np.zeros(n_hid), w2.ravel(), np.zeros(n_out)])
        super().__init__(flat, seed, optimizer, momentum_coeff)

    def unpack(self, params: np.ndarray) -> list[np.ndarray]:
        out, i = [], 0
        for shape in self._shapes:
            size = int(np.prod(shape))
            out.append(params[i : i + size].reshape(shape))
            i += size
        return out

    def batch_loss_and_grad(
        self, params: np.ndarray, X: np.ndarray, Y: np.ndarray
    ) -> tuple[float, np.ndarray]:
        """MSE ``mean(sum((f(X) - Y)**2, axis=1)) / 2`` and its exact gradient."""
        w1, b1, w2, b2 = self.unpack(params)
        hidden = np.tanh(X @ w1 + b1)
        err = hidden @ w2 + b2 - Y
        n = X.shape[0]
        loss = 0.5 * float(np.sum(err * err)) / n
        d_out = err / n
        g_w2 = hidden.T @ d_out
        g_b2 = d_out.sum(axis=0)
        d_hid = (d_out @ w2.T) * (1.0 - hidden * hidden)
        g_w1 = X.T @ d_hid
        g_b1 = d_hid.sum(axis=0)
        grad = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])
        return loss, grad

    def loss(self) -> float:
        return self.batch_loss_and_grad(self.params, self.X, self.Y)[0]

    def _loss_and_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        idx = self.rng.choice(self.X.shape[0], size=self.batch_size, replace=False)
        return self.batch_loss_and_grad(params, self.X[idx], self.Y[idx])


OracleFactory = Callable[[], Oracle]


def run_constant(oracle: Oracle, lr: float, steps: int) -> tuple[np.ndarray, bool]:
    """Train at a fixed LR. Returns the losses seen and whether the run diverged."""
    losses = np.empty(steps)
    for t in range(steps):
        try:
            losses[t] = oracle.step(lr)
        except DivergedError:
            return losses[:t], True
    return losses, False


@dataclass(frozen=True)
class GridSearchResult:
    best_lr: float
    final_losses: dict[float, float | None]
    losses: dict[float, np.ndarray]


def grid_search(
    factory: OracleFactory,
    lr_grid: Sequence[float],
    steps: int,
    final_window: int = 100,
) -> GridSearchResult:
    """One fresh constant-LR run per grid point; best LR by final-window mean loss.

    Diverged runs get ``None`` as their final loss.
    """
    if not lr_grid:
        raise ValueError("empty learning-rate grid")
    finals: dict[float, float | None] = {}
    traces: dict[float, np.ndarray] = {}
    for lr in lr_grid:
        losses, diverged = run_constant(factory(), lr, steps)
        traces[lr] = losses
        finals[lr] = None if diverged else float(np.mean(losses[-final_window:]))
    alive = {lr: f for lr, f in finals.items() if f is not None}
    if not alive:
        raise NoOptimumError(f"all {len(lr_grid)} grid runs diverged")
    best = min(alive, key=alive.__getitem__)
    return GridSearchResult(best_lr=best, final_losses=finals, losses=traces)


def optimal_lr_reference(
    oracle: Oracle | None = None,
    *,
    factory: OracleFactory | None = None,
    lr_grid: Sequence[float] | None = None,
    steps: int = 5000,
) -> float:
    """``1 / C`` for a quadratic, otherwise the argmin of a brute-force grid search."""
    if isinstance(oracle, QuadraticOracle) and factory is None:
        return oracle.optimal_lr
    if factory is None:
        raise ValueError("brute-force mode needs an oracle factory")
    if lr_grid is None:
        lr_grid = [1e-4 * 2**i for i in range(15)]
    return grid_search(factory, lr_grid, steps).best_lr
