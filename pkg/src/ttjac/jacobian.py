"""Jacobian log-volume scoring of synthetic differentiable generators.

The score of x = G(z) is log rho(z) - sum_i log sigma_i(J), where J is the
Jacobian of f(G(z)) with respect to z and f is an optional feature map.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import streams
from .errors import ConfigError, DegenerateJacobianError, ParameterError, ShapeError
from .grid import Grid1D, quantize
from .samples import SampleSet

DEFAULT_RANK_TOL = 1e-10
_LOG_2PI = math.log(2.0 * math.pi)

_ACTIVATIONS = {
    # name: (f, f')
    "tanh": (np.tanh, lambda u: 1.0 - np.tanh(u) ** 2),
    "softplus": (lambda u: np.logaddexp(0.0, u), lambda u: 0.5 * (1.0 + np.tanh(0.5 * u))),
}


def _as_layers(layers):
    out = []
    for w, b in layers:
        w = np.array(w, dtype=np.float64, ndmin=2)
        b = np.array(b, dtype=np.float64).reshape(-1)
        if b.shape[0] != w.shape[0]:
            raise ShapeError(f"bias length {b.shape[0]} != layer width {w.shape[0]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ShapeError("weights must be finite")
        out.append((w, b))
    for (w0, _), (w1, _) in zip(out, out[1:]):
        if w1.shape[1] != w0.shape[0]:
            raise ShapeError("consecutive layer shapes do not chain")
    return tuple(out)


def _mlp_forward(layers, activation, x, skip=None):
    """Outputs (B, n_out) and forward-mode Jacobians (B, n_out, n_in).

    Every layer but the last is followed by ``activation``; ``skip`` adds a
    linear term skip @ x to the output.
    """
    act, dact = _ACTIVATIONS[activation]
    n_in = x.shape[1]
    h = x
    jac = np.broadcast_to(np.eye(n_in), (x.shape[0], n_in, n_in))
    for li, (w, b) in enumerate(layers):
        pre = h @ w.T + b
        jac = np.einsum("oi,bij->boj", w, jac)
        if li < len(layers) - 1:
            h = act(pre)
            jac = dact(pre)[:, :, None] * jac
        else:
            h = pre
    if skip is not None:
        h = h + x @ skip.T
        jac = jac + skip[None]
    return h, np.ascontiguousarray(jac)


@dataclass(frozen=True)
class GeneratorSpec:
    """Synthetic generator: ``affine`` (x = A z + b) or ``mlp`` (smooth MLP,
    optional linear skip from z to the output)."""

    kind: str
    layers: tuple = ()
    activation: str = "tanh"
    skip: np.ndarray | None = None
    seed: int = 0
    tag: str = ""

    def __post_init__(self):
        if self.kind not in ("affine", "mlp"):
            raise ConfigError(f"unknown generator kind {self.kind!r}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        layers = _as_layers(self.layers)
        if not layers:
            raise ShapeError("generator needs at least one layer")
        if self.kind == "affine" and len(layers) != 1:
            raise ShapeError("affine generator has exactly one layer")
        object.__setattr__(self, "layers", layers)
        if self.skip is not None:
            skip = np.array(self.skip, dtype=np.float64, ndmin=2)
            if skip.shape != (self.n_out, self.d):
                raise ShapeError(f"skip must be {(self.n_out, self.d)}, got {skip.shape}")
            object.__setattr__(self, "skip", skip)
        if self.n_out < self.d:
            raise ShapeError(f"n_out={self.n_out} < d={self.d}: Jacobian cannot have full column rank")

    @property
    def d(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def n_out(self) -> int:
        return self.layers[-1][0].shape[0]

    @classmethod
    def affine(cls, a, b=None, tag="affine"):
        a = np.array(a, dtype=np.float64, ndmin=2)
        b = np.zeros(a.shape[0]) if b is None else b
        return cls("affine", layers=((a, b),), tag=tag)

    @classmethod
    def random_affine(cls, d, n_out=None, seed=0):
        n_out = d if n_out is None else n_out
        g = np.random.default_rng(seed)
        a = g.standard_normal((n_out, d)) / math.sqrt(d) + np.eye(n_out, d)
        return cls("affine", layers=((a, 0.1 * g.standard_normal(n_out)),), seed=seed,
                   tag=f"affine-d{d}-n{n_out}-s{seed}")

    @classmethod
    def random_mlp(cls, d, hidden=(16,), n_out=None, activation="tanh", seed=0):
        n_out = 2 * d if n_out is None else n_out
        g = np.random.default_rng(seed)
        sizes = [d, *hidden, n_out]
        layers = [
            (g.standard_normal((o, i)) / math.sqrt(i), 0.1 * g.standard_normal(o))
            for i, o in zip(sizes[:-1], sizes[1:])
        ]
        # skip keeps the map immersive, so sigma_min stays away from 0
        skip = np.eye(n_out, d)
        return cls("mlp", layers=tuple(layers), activation=activation, skip=skip, seed=seed,
                   tag=f"mlp-d{d}-{activation}-s{seed}")

    def forward(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        return _mlp_forward(self.layers, self.activation, z, self.skip)

    def __call__(self, z):
        return self.forward(z)[0]

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "activation": self.activation,
            "seed": self.seed,
            "tag": self.tag,
            "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in self.layers],
        }
        if self.skip is not None:
            out["skip"] = self.skip.tolist()
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "GeneratorSpec":
        spec = dict(spec)
        preset = spec.pop("preset", None)
        if preset is not None:
            return generator_preset(preset, **spec)
        try:
            layers = tuple((l["w"], l["b"]) for l in spec["layers"])
            return cls(
                spec["kind"], layers=layers, activation=spec.get("activation", "tanh"),
                skip=spec.get("skip"), seed=int(spec.get("seed", 0)), tag=spec.get("tag", ""),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed generator spec: {exc}") from exc


@dataclass(frozen=True)
class FeatureMapSpec:
    """Feature extractor stand-in applied to generator outputs.

    ``identity`` passes outputs through; ``random_projection`` multiplies by a
    matrix; ``mlp_head`` is a one-hidden-layer smooth network. Every kind is
    multiplied by ``scale``.
    """

    kind: str = "identity"
    layers: tuple = ()
    activation: str = "tanh"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "random_projection", "mlp_head"):
            raise ConfigError(f"unknown feature map kind {self.kind!r}")
        if self.kind != "identity":
            object.__setattr__(self, "layers", _as_layers(self.layers))
            if not self.layers:
                raise ShapeError(f"{self.kind} feature map needs weights")
        if not self.scale > 0:
            raise ParameterError("feature scale must be positive")

    def output_dim(self, n_in: int) -> int:
        return n_in if self.kind == "identity" else self.layers[-1][0].shape[0]

    @classmethod
    def identity(cls, scale=1.0):
        return cls("identity", scale=scale)

    @classmethod
    def projection(cls, matrix, scale=1.0):
        matrix = np.array(matrix, dtype=np.float64, ndmin=2)
        return cls("random_projection", layers=((matrix, np.zeros(matrix.shape[0])),), scale=scale)

    @classmethod
    def random_projection(cls, n_in, output_dim, seed=0, scale=1.0):
        g = np.random.default_rng(seed)
        return cls.projection(g.standard_normal((output_dim, n_in)) / math.sqrt(n_in), scale)

    @classmethod
    def mlp_head(cls, n_in, output_dim, hidden=32, seed=0, activation="tanh", scale=1.0):
        g = np.random.default_rng(seed)
        layers = (
            (g.standard_normal((hidden, n_in)) / math.sqrt(n_in), 0.1 * g.standard_normal(hidden)),
            (g.standard_normal((output_dim, hidden)) / math.sqrt(hidden), np.zeros(output_dim)),
        )
        return cls("mlp_head", layers=layers, activation=activation, scale=scale)

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.kind == "identity":
            jac = np.broadcast_to(np.eye(x.shape[1]), (x.shape[0], x.shape[1], x.shape[1]))
            return self.scale * x, self.scale * jac
        y, jac = _mlp_forward(self.layers, self.activation, x)
        return self.scale * y, self.scale * jac

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "activation": self.activation, "scale": self.scale}
        if self.kind != "identity":
            out["layers"] = [{"w": w.tolist(), "b": b.tolist()} for w, b in self.layers]
        return out

    @classmethod
    def from_dict(cls, spec: dict | None) -> "FeatureMapSpec":
        if not spec:
            return cls.identity()
        try:
            layers = tuple((l["w"], l["b"]) for l in spec.get("layers", ()))
            return cls(spec.get("kind", "identity"), layers=layers,
                       activation=spec.get("activation", "tanh"),
                       scale=float(spec.get("scale", 1.0)))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed feature map spec: {exc}") from exc


def two_mode_generator(stretch: float = 9.0, sharpness: float = 4.0, shift: float = 1.0):
    """2-D generator with a low-density junk mode.

    x = z + (stretch / sharpness) * softplus(sharpness * (z_1 - shift)) e_1, so
    the half-plane z_1 > shift is stretched by up to (1 + stretch) and pushed
    far from where the identity-generated reference data lives.
    """
    w1 = np.array([[sharpness, 0.0]])
    b1 = np.array([-sharpness * shift])
    w2 = np.array([[stretch / sharpness], [0.0]])
    return GeneratorSpec(
        "mlp", layers=((w1, b1), (w2, np.zeros(2))), activation="softplus",
        skip=np.eye(2), tag="two_mode",
    )


def generator_preset(name: str, **kw) -> GeneratorSpec:
    seed = int(kw.get("seed", 0))
    d = int(kw.get("d", 2))
    if name == "affine":
        return GeneratorSpec.random_affine(d, kw.get("n_out"), seed)
    if name == "mlp":
        return GeneratorSpec.random_mlp(d, tuple(kw.get("hidden", (16,))), kw.get("n_out"),
                                        kw.get("activation", "tanh"), seed)
    if name == "two_mode":
        return two_mode_generator()
    if name in ("identity", "two_mode_reference"):
        return GeneratorSpec.affine(np.eye(d), tag=name)
    raise ConfigError(f"unknown generator preset {name!r}")


def log_prior(z) -> np.ndarray | float:
    """Standard-normal log density, normalizing constant included.

    Accepts a vector (d,) or a batch (M, d).
    """
    z = np.asarray(z, dtype=np.float64)
    d = z.shape[-1]
    val = -0.5 * d * _LOG_2PI - 0.5 * np.sum(z * z, axis=-1)
    return float(val) if z.ndim == 1 else val


def jacobian_batch(gen: GeneratorSpec, feat: FeatureMapSpec, z) -> np.ndarray:
    """Exact Jacobians d f(G(z)) / dz, shape (M, n_feat, d)."""
    x, jg = gen.forward(z)
    _, jf = feat.forward(x)
    return np.einsum("bpn,bnd->bpd", jf, jg)


def jacobian_fd(gen: GeneratorSpec, feat: FeatureMapSpec, z, h=None) -> np.ndarray:
    """Central finite-difference Jacobian of a single latent vector."""
    z = np.asarray(z, dtype=np.float64)
    h = 1e-5 * (1.0 + np.max(np.abs(z))) if h is None else h
    d = z.shape[0]
    steps = np.eye(d) * h
    plus = feat.forward(gen(z + steps))[0]
    minus = feat.forward(gen(z - steps))[0]
    return ((plus - minus) / (2.0 * h)).T


def jacobian(gen: GeneratorSpec, feat: FeatureMapSpec, z, method: str = "exact") -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (gen.d,):
        raise ShapeError(f"latent must have shape ({gen.d},), got {z.shape}")
    if method == "exact":
        return jacobian_batch(gen, feat, z[None])[0]
    if method == "fd":
        return jacobian_fd(gen, feat, z)
    raise ParameterError(f"unknown Jacobian method {method!r}")


def _volume_terms(sv: np.ndarray, rank_tol: float):
    smax = sv[..., 0]
    smin = sv[..., -1]
    bad = ~(smin > rank_tol * smax)
    return smin, smax, bad


def log_volume(jac, rank_tol: float = DEFAULT_RANK_TOL) -> float:
    """Sum of log singular values of ``jac`` (an n x d matrix, n >= d)."""
    jac = np.asarray(jac, dtype=np.float64)
    if jac.ndim != 2 or jac.shape[0] < jac.shape[1]:
        raise ShapeError(f"Jacobian must be n x d with n >= d, got {jac.shape}")
    sv = np.linalg.svd(jac, compute_uv=False)
    smin, smax, bad = _volume_terms(sv, rank_tol)
    if bad:
        raise DegenerateJacobianError(smin, smax)
    return float(np.sum(np.log(sv)))


@dataclass(frozen=True)
class ScoreResult:
    score: float
    log_prior: float
    log_volume: float
    sigma_min: float
    sigma_max: float


@dataclass(frozen=True)
class ScoreBatch:
    """Column-wise score results for M latents."""

    score: np.ndarray
    log_prior: np.ndarray
    log_volume: np.ndarray
    sigma_min: np.ndarray
    sigma_max: np.ndarray

    def __len__(self):
        return self.score.shape[0]

    def row(self, i) -> ScoreResult:
        return ScoreResult(*(float(getattr(self, f)[i]) for f in
                             ("score", "log_prior", "log_volume", "sigma_min", "sigma_max")))


def score_batch(gen, feat, z, rank_tol: float = DEFAULT_RANK_TOL, offset: int = 0) -> ScoreBatch:
    """Scores of a (M, d) batch. Raises on the first degenerate row."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != gen.d:
        raise ShapeError(f"latents have d={z.shape[1]}, generator expects {gen.d}")
    if z.shape[0] == 0:
        empty = np.zeros(0)
        return ScoreBatch(empty, empty, empty, empty, empty)
    jac = jacobian_batch(gen, feat, z)
    sv = np.linalg.svd(jac, compute_uv=False)
    smin, smax, bad = _volume_terms(sv, rank_tol)
    if np.any(bad):
        first = int(np.argmax(bad))
        raise DegenerateJacobianError(smin[first], smax[first], sample=offset + first)
    lv = np.sum(np.log(sv), axis=1)
    lp = log_prior(z)
    return ScoreBatch(lp - lv, lp, lv, smin, smax)


def score(gen, feat, z, rank_tol: float = DEFAULT_RANK_TOL) -> ScoreResult:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (gen.d,):
        raise ShapeError(f"latent must have shape ({gen.d},), got {z.shape}")
    return score_batch(gen, feat, z[None], rank_tol).row(0)


def sample_latents(seed: int, m: int, d: int, start: int = 0) -> np.ndarray:
    """Latent rows start..start+m-1; row i depends only on (seed, i)."""
    out = np.empty((m, d))
    for j in range(m):
        out[j] = np.random.default_rng(streams.substream(seed, "latent", start + j)).standard_normal(d)
    return out


_CHUNK = 2048


def build_sample_set(gen, feat, grid: Grid1D, m: int, seed: int = 0, threads: int = 1,
                     rank_tol: float = DEFAULT_RANK_TOL) -> SampleSet:
    """Draw ``m`` latents from N(0, I), score them and quantize to ``grid``.

    Work is split into fixed chunks, so the result does not depend on
    ``threads``.
    """
    if m < 1:
        raise ParameterError("sample count must be >= 1")
    d = gen.d
    starts = list(range(0, m, _CHUNK))

    def work(start):
        count = min(_CHUNK, m - start)
        z = sample_latents(seed, count, d, start)
        return z, score_batch(gen, feat, z, rank_tol, offset=start).score

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    latents = np.concatenate([p[0] for p in parts])
    values = np.concatenate([p[1] for p in parts])
    return SampleSet(latents, quantize(latents, grid), values, grid, gen.tag)
