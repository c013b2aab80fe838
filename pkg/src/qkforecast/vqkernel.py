"""Quantum-inspired fidelity kernels and kernel ridge residual correction.

The feature map is a hardware-efficient ansatz simulated exactly on a
statevector.  Starting from ``|0...0>``, every layer applies on each qubit
``i`` the rotation ``R_Y(theta_y[l, i] + alpha * x[i mod d])`` followed by
``R_Z(theta_z[l, i])``, then a CNOT chain ``(0->1), (1->2), ..., (n-2->n-1)``.
Features cycle over qubits when ``d < n`` and are truncated when ``d > n``.

Qubit 0 is the most significant bit of the basis index, so for two qubits
index 3 is ``|11>``.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, EmptyFeature, NonPositiveGamma, NotPositiveDefinite

RIDGE_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)
RBF_GAMMA_GRID = (0.01, 0.1, 0.5, 1.0, 2.0, 10.0)


# --------------------------------------------------------------------------
# Ansatz description
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnsatzSpec:
    """Trainable angles (radians) of shape ``(layers, qubits)`` plus the encoding scale."""

    theta_y: np.ndarray
    theta_z: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        ty = np.array(self.theta_y, dtype=float)
        tz = np.array(self.theta_z, dtype=float)
        if ty.ndim != 2 or ty.shape != tz.shape or min(ty.shape) < 1:
            raise ValueError("theta_y and theta_z must share a (layers >= 1, qubits >= 1) shape")
        ty.setflags(write=False)
        tz.setflags(write=False)
        object.__setattr__(self, "theta_y", ty)
        object.__setattr__(self, "theta_z", tz)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_layers(self) -> int:
        return self.theta_y.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.theta_y.shape[1]

    @property
    def n_params(self) -> int:
        return self.theta_y.size + self.theta_z.size

    @classmethod
    def zeros(cls, n_qubits: int = 6, n_layers: int = 3, alpha: float = 1.0) -> "AnsatzSpec":
        return cls(np.zeros((n_layers, n_qubits)), np.zeros((n_layers, n_qubits)), alpha)

    def to_dict(self) -> dict:
        return {"n_qubits": self.n_qubits, "n_layers": self.n_layers, "alpha": self.alpha,
                "theta_y": self.theta_y.tolist(), "theta_z": self.theta_z.tolist()}

    @classmethod
    def from_dict(cls, d) -> "AnsatzSpec":
        spec = cls(d["theta_y"], d["theta_z"], d.get("alpha", 1.0))
        if (spec.n_qubits, spec.n_layers) != (d.get("n_qubits", spec.n_qubits),
                                              d.get("n_layers", spec.n_layers)):
            raise ValueError("angle arrays disagree with n_qubits/n_layers")
        return spec

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def xavier_init(n_qubits: int = 6, n_layers: int = 3, seed: int = 0, alpha: float = 1.0) -> AnsatzSpec:
    """Angles uniform on ``+-sqrt(6 / (2 n))`` (fan-in = fan-out = n)."""
    if n_qubits < 1 or n_layers < 1:
        raise ValueError("n_qubits and n_layers must be >= 1")
    bound = np.sqrt(6.0 / (2 * n_qubits))
    rng = np.random.default_rng(seed)
    ty = rng.uniform(-bound, bound, size=(n_layers, n_qubits))
    tz = rng.uniform(-bound, bound, size=(n_layers, n_qubits))
    return AnsatzSpec(ty, tz, alpha)


# --------------------------------------------------------------------------
# Statevector simulation
# --------------------------------------------------------------------------

def _qubit_features(X: np.ndarray, n: int) -> np.ndarray:
    d = X.shape[1]
    if d == 0:
        raise EmptyFeature("feature vector has dimension 0")
    return X[:, [i % d for i in range(n)]]


def encode_states(X, spec: AnsatzSpec) -> np.ndarray:
    """Encoded states for each row of ``X``, shape ``(m, 2**n)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, m = spec.n_qubits, X.shape[0]
    feats = _qubit_features(X, n)
    psi = np.zeros((m, 2 ** n), dtype=complex)
    psi[:, 0] = 1.0
    for l in range(spec.n_layers):
        for q in range(n):
            view = psi.reshape(m, 2 ** q, 2, 2 ** (n - q - 1))
            half = 0.5 * (spec.theta_y[l, q] + spec.alpha * feats[:, q])
            c = np.cos(half)[:, None, None]
            s = np.sin(half)[:, None, None]
            a0 = view[:, :, 0, :].copy()
            a1 = view[:, :, 1, :]
            view[:, :, 0, :] = c * a0 - s * a1
            view[:, :, 1, :] = s * a0 + c * a1
            phase = 0.5 * spec.theta_z[l, q]
            view[:, :, 0, :] *= np.exp(-1j * phase)
            view[:, :, 1, :] *= np.exp(1j * phase)
        for q in range(n - 1):
            view = psi.reshape(m, 2 ** q, 2, 2, 2 ** (n - q - 2))
            tmp = view[:, :, 1, 0, :].copy()
            view[:, :, 1, 0, :] = view[:, :, 1, 1, :]
            view[:, :, 1, 1, :] = tmp
    norms = np.sqrt(np.sum(np.abs(psi) ** 2, axis=1))
    return psi / norms[:, None]


def encode_state(x, spec: AnsatzSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return encode_states(x, spec)[0]


def _fidelity(a: np.ndarray, B: np.ndarray) -> np.ndarray:
    overlap = np.sum(np.conj(a)[None, :] * B, axis=1)
    return overlap.real ** 2 + overlap.imag ** 2


def _check_pair(x, x2):
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    if x.shape != x2.shape:
        raise DimensionMismatch(f"feature dimensions differ: {x.size} vs {x2.size}")
    return x, x2


def kernel_exact(x, x2, spec: AnsatzSpec) -> float:
    """Squared overlap of the two encoded states."""
    x, x2 = _check_pair(x, x2)
    states = encode_states(np.vstack([x, x2]), spec)
    return float(_fidelity(states[0], states[1:])[0])


def kernel_surrogate(x, x2) -> float:
    """``exp(-|x - x'|^2 / 2) * cos^2(pi <x, x'> / 2)``."""
    x, x2 = _check_pair(x, x2)
    diff = x - x2
    return float(np.exp(-np.dot(diff, diff) / 2.0) * np.cos(np.pi * np.dot(x, x2) / 2.0) ** 2)


def kernel_rbf(x, x2, gamma: float) -> float:
    if not gamma > 0:
        raise NonPositiveGamma(f"gamma must be positive, got {gamma}")
    x, x2 = _check_pair(x, x2)
    diff = x - x2
    return float(np.exp(-gamma * np.dot(diff, diff)))


# --------------------------------------------------------------------------
# Kernel objects: a feature step computed once per point, then pair values
# --------------------------------------------------------------------------

class Kernel:
    kind = "abstract"

    def features(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=float))

    def from_features(self, a: np.ndarray, B: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cross(self, A, B) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if A.shape[1] != B.shape[1]:
            raise DimensionMismatch(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
        FA, FB = self.features(A), self.features(B)
        return np.vstack([self.from_features(FA[i], FB) for i in range(len(FA))])

    def __call__(self, x, x2) -> float:
        x, x2 = _check_pair(x, x2)
        return float(self.cross(x[None], x2[None])[0, 0])

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class ExactKernel(Kernel):
    kind = "exact"

    def __init__(self, spec: AnsatzSpec):
        self.spec = spec

    def features(self, X):
        return encode_states(X, self.spec)

    def from_features(self, a, B):
        return _fidelity(a, B)

    def to_dict(self):
        return {"kind": self.kind, "ansatz": self.spec.to_dict()}


class SurrogateKernel(Kernel):
    kind = "surrogate"

    def from_features(self, a, B):
        diff = B - a[None, :]
        sq = np.sum(diff * diff, axis=1)
        ip = np.sum(B * a[None, :], axis=1)
        return np.exp(-sq / 2.0) * np.cos(np.pi * ip / 2.0) ** 2


class RbfKernel(Kernel):
    kind = "rbf"

    def __init__(self, gamma: float):
        if not gamma > 0:
            raise NonPositiveGamma(f"gamma must be positive, got {gamma}")
        self.gamma = float(gamma)

    def from_features(self, a, B):
        diff = B - a[None, :]
        return np.exp(-self.gamma * np.sum(diff * diff, axis=1))

    def to_dict(self):
        return {"kind": self.kind, "gamma": self.gamma}


def make_kernel(kind: str, spec: AnsatzSpec | None = None, gamma: float | None = None) -> Kernel:
    if kind == "surrogate":
        return SurrogateKernel()
    if kind == "exact":
        return ExactKernel(spec if spec is not None else xavier_init())
    if kind == "rbf":
        return RbfKernel(1.0 if gamma is None else gamma)
    raise ValueError(f"unknown kernel kind {kind!r}")


# --------------------------------------------------------------------------
# Gram matrices
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        return float(linalg.eigvalsh(self.values)[0])

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T)))

    def to_csv(self) -> str:
        return "\n".join(",".join(repr(float(v)) for v in row) for row in self.values) + "\n"


def clip_to_psd(K: KernelMatrix) -> tuple[KernelMatrix, float]:
    """Project onto the PSD cone by zeroing negative eigenvalues.

    Returns the repaired matrix and the most negative eigenvalue removed.
    """
    w, V = linalg.eigh(K.values)
    fixed = (V * np.clip(w, 0.0, None)) @ V.T
    fixed = 0.5 * (fixed + fixed.T)
    return KernelMatrix(fixed, K.kind), float(w[0])


def gram_matrix(points, kernel, threads: int = 1) -> KernelMatrix:
    """Kernel matrix over ``points``.

    Each row ``i`` computes entries ``j >= i`` in its own task and the lower
    triangle is mirrored, so the bytes never depend on ``threads``.  A plain
    callable ``kernel(x, x2)`` is accepted too and evaluated per pair.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(P)
    if m < 1:
        raise ValueError("gram_matrix needs at least one point")
    K = np.empty((m, m))
    if isinstance(kernel, Kernel):
        F = kernel.features(P)
        kind = kernel.kind

        def row(i):
            K[i, i:] = kernel.from_features(F[i], F[i:])
    else:
        kind = getattr(kernel, "kind", "custom")

        def row(i):
            for j in range(i, m):
                K[i, j] = kernel(P[i], P[j])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(row, range(m)))
    else:
        for i in range(m):
            row(i)
    iu = np.triu_indices(m, 1)
    K[iu[1], iu[0]] = K[iu]
    return KernelMatrix(K, kind)


# --------------------------------------------------------------------------
# Kernel ridge regression
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RidgeSolution:
    dual_weights: np.ndarray
    lam: float
    train_inputs: np.ndarray | None = None
    jitter: float = 0.0
    kernel_kind: str = ""

    def to_dict(self) -> dict:
        return {"dual_weights": self.dual_weights.tolist(), "lambda": self.lam,
                "jitter": self.jitter, "kernel_kind": self.kernel_kind,
                "train_inputs": None if self.train_inputs is None else self.train_inputs.tolist()}


def ridge_fit(K, eps, lam: float = 1.0, train_inputs=None) -> RidgeSolution:
    """Solve ``(K + lam I) alpha = eps`` by Cholesky with escalating jitter."""
    kind = K.kind if isinstance(K, KernelMatrix) else ""
    A = np.asarray(K.values if isinstance(K, KernelMatrix) else K, dtype=float)
    eps = np.asarray(eps, dtype=float).reshape(-1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"kernel matrix must be square, got {A.shape}")
    if A.shape[0] != eps.size:
        raise DimensionMismatch(f"{A.shape[0]}x{A.shape[0]} kernel but {eps.size} targets")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if train_inputs is not None:
        train_inputs = np.atleast_2d(np.asarray(train_inputs, dtype=float)).copy()
        if len(train_inputs) != eps.size:
            raise DimensionMismatch("train_inputs and targets differ in length")
    eye = np.eye(len(eps))
    for jitter in RIDGE_JITTERS:
        try:
            factor = linalg.cho_factor(A + (lam + jitter) * eye, lower=True)
        except linalg.LinAlgError:
            continue
        alpha = linalg.cho_solve(factor, eps)
        return RidgeSolution(alpha, float(lam), train_inputs, jitter, kind)
    raise NotPositiveDefinite(f"K + {lam} I is not positive definite even with jitter "
                              f"{RIDGE_JITTERS[-1]}")


def corrected_forecast(base_prediction: float, x_star, solution: RidgeSolution, kernel: Kernel) -> float:
    """``base + k(x*, X_train) @ alpha``, clamped to [0, 1] at the very end."""
    if solution.train_inputs is None:
        raise DimensionMismatch("ridge solution carries no training inputs")
    x_star = np.asarray(x_star, dtype=float).reshape(1, -1)
    if x_star.shape[1] != solution.train_inputs.shape[1]:
        raise DimensionMismatch(f"x_star has {x_star.shape[1]} features, training inputs "
                                f"have {solution.train_inputs.shape[1]}")
    k = kernel.cross(x_star, solution.train_inputs)[0]
    return min(1.0, max(0.0, float(base_prediction) + float(k @ solution.dual_weights)))


@dataclass(eq=False)
class ResidualCorrector:
    """A fitted correction head with the training-point features cached."""

    kernel: Kernel
    solution: RidgeSolution
    _train_features: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._train_features = self.kernel.features(self.solution.train_inputs)

    def correction(self, x_star) -> float:
        a = self.kernel.features(np.asarray(x_star, dtype=float).reshape(1, -1))[0]
        return float(self.kernel.from_features(a, self._train_features) @ self.solution.dual_weights)

    def apply(self, base_prediction: float, x_star) -> float:
        return min(1.0, max(0.0, float(base_prediction) + self.correction(x_star)))
