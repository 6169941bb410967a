"""Input-convex network f(x) and the concave generating function G(x) = -f(x).

Convexity comes from the architecture: softplus activations (convex,
nondecreasing) and nonnegative weights on the hidden-state path (every W_k
for k >= 1 and the output vector w). W_0, the passthrough matrices U_k, the
biases, u and c stay unconstrained.

The input gradient of log G is written as an explicit recursion in autodiff
primitives, so parameter gradients flow through it without second-order
differentiation.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError

G_FLOOR = 1e-8  # log G reads max(G, G_FLOOR)


@dataclass(frozen=True)
class ICNNParams:
    """Constrained parameter set. Treated as an immutable value between steps."""

    W: tuple  # K matrices: W[0] is m1 x n, W[k] is m_{k+1} x m_k
    U: tuple  # K-1 matrices: U[k-1] is m_{k+1} x n
    b: tuple  # K bias vectors
    w: np.ndarray  # length m_K
    u: np.ndarray  # length n
    c: float
    widths: tuple

    @property
    def n(self):
        return self.W[0].shape[1]

    @property
    def depth(self):
        return len(self.widths)

    def arrays(self):
        """Flat (name, array) view in a fixed order; c as a 0-d array."""
        out = []
        for k, m in enumerate(self.W):
            out.append((f"W{k}", m))
        for k, m in enumerate(self.U):
            out.append((f"U{k + 1}", m))
        for k, v in enumerate(self.b):
            out.append((f"b{k}", v))
        out.append(("w", self.w))
        out.append(("u", self.u))
        out.append(("c", np.asarray(self.c, dtype=np.float64)))
        return out


def _validate_widths(n, widths):
    if n < 2:
        raise ConfigError("need at least 2 assets")
    widths = tuple(int(m) for m in widths)
    if not widths or any(m < 1 for m in widths):
        raise ConfigError(f"widths must be positive, got {widths}")
    return widths


def init(n, widths=(64, 64), seed=0) -> ICNNParams:
    """Glorot-uniform init; constrained weights take the absolute value of the draw.

    c is shifted after a probe evaluation so that G = -f exceeds 1 at the
    uniform simplex point.
    """
    widths = _validate_widths(n, widths)
    rng = np.random.default_rng(seed)

    def glorot(rows, cols, nonneg=False):
        a = np.sqrt(6.0 / (rows + cols))
        m = rng.uniform(-a, a, (rows, cols))
        return np.abs(m) if nonneg else m

    K = len(widths)
    W = [glorot(widths[0], n)]
    for k in range(1, K):
        W.append(glorot(widths[k], widths[k - 1], nonneg=True))
    U = [glorot(widths[k], n) for k in range(1, K)]
    b = [np.zeros(widths[k]) for k in range(K)]
    w = np.abs(rng.uniform(-np.sqrt(6.0 / (widths[-1] + 1)), np.sqrt(6.0 / (widths[-1] + 1)), widths[-1]))
    u = rng.uniform(-np.sqrt(6.0 / (n + 1)), np.sqrt(6.0 / (n + 1)), n)

    probe = ICNNParams(tuple(W), tuple(U), tuple(b), w, u, 0.0, widths)
    f0, _ = forward(probe, np.full(n, 1.0 / n))
    return ICNNParams(tuple(W), tuple(U), tuple(b), w, u, -f0 - 2.0, widths)


@dataclass(frozen=True)
class ForwardCache:
    """Pre-activations p_k and activations z_k for each hidden layer."""

    p: tuple
    z: tuple
    f_value: float


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def forward(theta: ICNNParams, x) -> tuple:
    """Evaluate f(x) through the convex recursion; returns (f, ForwardCache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (theta.n,):
        raise DimensionError(f"forward: expected input of shape ({theta.n},), got {x.shape}")
    p = [theta.W[0] @ x + theta.b[0]]
    z = [_softplus(p[0])]
    for k in range(1, theta.depth):
        p.append(theta.W[k] @ z[-1] + theta.U[k - 1] @ x + theta.b[k])
        z.append(_softplus(p[-1]))
    f = float(theta.w @ z[-1] + theta.u @ x + theta.c)
    return f, ForwardCache(tuple(p), tuple(z), f)


def generating_function(theta: ICNNParams, x) -> float:
    """G(x) = -f(x). May be nonpositive; downstream logs clamp at G_FLOOR."""
    f, _ = forward(theta, x)
    return -f


def project_constraints(theta: ICNNParams) -> ICNNParams:
    """Clamp every constrained entry at zero. Idempotent."""
    W = (theta.W[0],) + tuple(np.maximum(m, 0.0) for m in theta.W[1:])
    return ICNNParams(W, theta.U, theta.b, np.maximum(theta.w, 0.0), theta.u, theta.c, theta.widths)


# ---------------------------------------------------------------------------
# autodiff builders: batched over the rows of an input matrix X (T, n)
# ---------------------------------------------------------------------------


def params_to_nodes(theta: ICNNParams) -> dict:
    """Differentiable leaves for every parameter array."""
    return {name: ad.param(arr) for name, arr in theta.arrays()}


def from_arrays(arrays, widths) -> ICNNParams:
    """Rebuild parameters from a flat name -> array mapping (see arrays())."""
    K = len(widths)
    return ICNNParams(
        tuple(arrays[f"W{k}"] for k in range(K)),
        tuple(arrays[f"U{k}"] for k in range(1, K)),
        tuple(arrays[f"b{k}"] for k in range(K)),
        arrays["w"],
        arrays["u"],
        float(arrays["c"]),
        tuple(widths),
    )


def nodes_to_params(nodes, widths) -> ICNNParams:
    return from_arrays({name: node.value for name, node in nodes.items()}, widths)


def build_f(nodes, X, widths):
    """Node graph for f over every row of X. Returns (f (T,), pre-activation list)."""
    K = len(widths)
    P = [X @ ad.transpose(nodes["W0"]) + nodes["b0"]]
    Z = ad.softplus(P[0])
    for k in range(1, K):
        P.append(Z @ ad.transpose(nodes[f"W{k}"]) + X @ ad.transpose(nodes[f"U{k}"]) + nodes[f"b{k}"])
        Z = ad.softplus(P[-1])
    f = Z @ nodes["w"] + X @ nodes["u"] + nodes["c"]
    return f, P


def build_grad_log_g(nodes, X, widths):
    """Node graph for rows of grad_x log G at each row of X.

    Backpropagates the forward recursion by hand (delta passes through
    sigmoid(p_k) at each layer), then divides by the clamped G. Everything is
    expressed in primitives so d/dtheta flows through the result.

    Returns (grad_log_G (T, n), G (T,), G clamped (T,)).
    """
    K = len(widths)
    f, P = build_f(nodes, X, widths)
    grad = None
    delta = nodes["w"]
    for j in range(K - 1, 0, -1):
        a = ad.sigmoid(P[j]) * delta
        term = a @ nodes[f"U{j}"]
        grad = term if grad is None else grad + term
        delta = a @ nodes[f"W{j}"]
    a = ad.sigmoid(P[0]) * delta
    term = a @ nodes["W0"]
    grad = term if grad is None else grad + term
    grad_f = grad + nodes["u"]

    G = -f
    G_clamped = ad.maximum(G, G_FLOOR)
    grad_log_g = -grad_f / ad.reshape(G_clamped, (X.value.shape[0], 1))
    return grad_log_g, G, G_clamped


def grad_log_G(theta: ICNNParams, x) -> np.ndarray:
    """grad_x log max(G, floor) at a single simplex point, as plain numbers."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (theta.n,):
        raise DimensionError(f"grad_log_G: expected input of shape ({theta.n},), got {x.shape}")
    nodes = params_to_nodes(theta)
    g, _, _ = build_grad_log_g(nodes, ad.constant(x[None, :]), theta.widths)
    return g.value[0].copy()


# ---------------------------------------------------------------------------
# serialisation: versioned JSON, arrays base64-encoded row-major float64
# ---------------------------------------------------------------------------


def _encode(arr):
    return base64.b64encode(np.ascontiguousarray(arr, dtype=np.float64).tobytes()).decode("ascii")


def _decode(text, shape):
    return np.frombuffer(base64.b64decode(text), dtype=np.float64).reshape(shape).copy()


def to_json(theta: ICNNParams) -> str:
    doc = {
        "format": "icnn-params",
        "version": 1,
        "activation": "softplus",
        "n": theta.n,
        "widths": list(theta.widths),
        "arrays": {name: {"shape": list(arr.shape), "data": _encode(arr)} for name, arr in theta.arrays()},
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def from_json(text) -> ICNNParams:
    doc = json.loads(text)
    if doc.get("format") != "icnn-params" or doc.get("version") != 1:
        raise ConfigError("unrecognised parameter document")
    widths = tuple(doc["widths"])
    K = len(widths)
    arrays = {name: _decode(rec["data"], tuple(rec["shape"])) for name, rec in doc["arrays"].items()}
    return ICNNParams(
        tuple(arrays[f"W{k}"] for k in range(K)),
        tuple(arrays[f"U{k}"] for k in range(1, K)),
        tuple(arrays[f"b{k}"] for k in range(K)),
        arrays["w"],
        arrays["u"],
        float(arrays["c"]),
        widths,
    )


def save(theta: ICNNParams, path):
    with open(path, "w") as fh:
        fh.write(to_json(theta))


def load(path) -> ICNNParams:
    with open(path) as fh:
        return from_json(fh.read())
