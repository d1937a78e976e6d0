"""Parameter storage, the Adam update, and a central-difference gradient check.

Everything is float64. Gradient accumulation happens in caller order and
reductions go through numpy's deterministic pairwise summation, so a fixed
backend gives bit-identical results across repeated runs.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamConfig:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 < self.beta1 < 1.0) or not (0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


@dataclass
class _Entry:
    value: np.ndarray
    grad: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step: int = 0


class ParamStore:
    """Named float64 tensors with a gradient accumulator and Adam state.

    Single writer: training mutates entries through ``accumulate_grad`` and
    ``adam_step`` only. Iteration order is insertion order everywhere, which
    keeps reductions and updates deterministic.
    """

    def __init__(self):
        self._entries: dict[str, _Entry] = {}

    def add(self, name: str, value) -> None:
        if name in self._entries:
            raise ValueError(f"parameter {name!r} already exists")
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"parameter {name!r} has non-finite entries")
        self._entries[name] = _Entry(
            value=arr,
            grad=np.zeros_like(arr),
            m=np.zeros_like(arr),
            v=np.zeros_like(arr),
        )

    def __contains__(self, name):
        return name in self._entries

    def __len__(self):
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def value(self, name: str) -> np.ndarray:
        return self._entries[name].value

    def grad(self, name: str) -> np.ndarray:
        return self._entries[name].grad

    def step_count(self, name: str) -> int:
        return self._entries[name].step

    def set_value(self, name: str, value) -> None:
        entry = self._entries[name]
        arr = np.array(value, dtype=np.float64)
        if arr.shape != entry.value.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: {arr.shape} vs {entry.value.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite value for parameter {name!r}")
        entry.value = arr

    def accumulate_grad(self, name: str, g) -> None:
        entry = self._entries[name]
        entry.grad = entry.grad + np.asarray(g, dtype=np.float64)

    def zero_grads(self, names=None) -> None:
        for name in names if names is not None else self._entries:
            entry = self._entries[name]
            entry.grad = np.zeros_like(entry.value)

    def snapshot(self, names=None) -> dict[str, bytes]:
        """Byte-level snapshot of parameter values, for freezing checks."""
        return {
            name: self._entries[name].value.tobytes()
            for name in (names if names is not None else self._entries)
        }

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, entry in self._entries.items():
            out._entries[name] = _Entry(
                value=entry.value.copy(),
                grad=entry.grad.copy(),
                m=entry.m.copy(),
                v=entry.v.copy(),
                step=entry.step,
            )
        return out


def adam_step(store: ParamStore, cfg: AdamConfig, names) -> ParamStore:
    """Adam with bias correction applied to ``names`` only.

    Entries outside ``names`` are untouched (the freezing contract of the
    bi-level loop). Gradients of updated entries are zeroed and their step
    counters incremented.
    """
    names = list(names)
    for name in names:
        if name not in store:
            raise KeyError(f"unknown parameter {name!r}")
        if not np.all(np.isfinite(store.grad(name))):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    # fixed update order: store insertion order, not caller order
    selected = set(names)
    for name in store.names():
        if name not in selected:
            continue
        entry = store._entries[name]
        g = entry.grad
        entry.step += 1
        entry.m = cfg.beta1 * entry.m + (1.0 - cfg.beta1) * g
        entry.v = cfg.beta2 * entry.v + (1.0 - cfg.beta2) * g * g
        m_hat = entry.m / (1.0 - cfg.beta1 ** entry.step)
        v_hat = entry.v / (1.0 - cfg.beta2 ** entry.step)
        entry.value = entry.value - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        entry.grad = np.zeros_like(g)
    return store


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status}  max relative error {self.max_rel_error:.3e}"]
        for name, err in sorted(self.per_param.items()):
            lines.append(f"  {name}: {err:.3e}")
        for name in self.failures:
            lines.append(f"  {name}: non-finite probe")
        return "\n".join(lines)


def grad_check(fn, store: ParamStore, names=None, eps: float = 1e-5,
               tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``fn(store)`` must return ``(value, grads)`` where ``grads`` maps
    parameter names to arrays; names absent from ``grads`` are treated as
    zero gradient. The store values are perturbed in place and restored.

    Per element the relative error is |analytic - numeric| /
    max(|analytic|, |numeric|, 1e-12); the report carries the max per
    parameter and overall. A non-finite value at any probe point marks
    that parameter as a failure.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    names = list(names) if names is not None else store.names()
    value, analytic = fn(store)
    per_param: dict[str, float] = {}
    failures: list[str] = []
    if not np.isfinite(value):
        return GradCheckReport(False, float("inf"), per_param, list(names))
    for name in names:
        arr = store.value(name)
        g_analytic = np.asarray(analytic.get(name, np.zeros_like(arr)), dtype=np.float64)
        numeric = np.zeros_like(arr)
        bad = False
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            f_plus = fn(store)[0]
            arr[idx] = orig - eps
            f_minus = fn(store)[0]
            arr[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                bad = True
                break
            numeric[idx] = (f_plus - f_minus) / (2.0 * eps)
        if bad:
            failures.append(name)
            per_param[name] = float("inf")
            continue
        denom = np.maximum(np.maximum(np.abs(g_analytic), np.abs(numeric)), 1e-12)
        per_param[name] = float(np.max(np.abs(g_analytic - numeric) / denom)) if arr.size else 0.0
    max_rel = max(per_param.values(), default=0.0)
    passed = not failures and max_rel <= tol
    return GradCheckReport(passed, max_rel, per_param, failures)
