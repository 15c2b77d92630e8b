"""Quality and diversity metrics for single-clip generation.

Six metrics: window coverage, global/local diversity over joint rotation
angles, single-sample Frechet distance (SiFID) plus inter/intra diversity
over embeddings from a fixed seed-derived convolutional encoder, and a
harmonic-mean summary. The encoder is untrained on purpose: it removes any
external pretrained-model dependency while staying discriminative, and its
seed/architecture hash is recorded in every report. Numbers are comparable
across runs of this toolkit only.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .motion_io import MotionTensor
from .rotations import sixd_to_matrix_flagged

LOWER_IS_BETTER = ("sifid", "intra_div")


@dataclass(frozen=True)
class MetricsConfig:
    window: int = 30
    epsilon: float | None = None  # None: calibrate from input self-distances
    epsilon_percentile: float = 5.0
    local_window: int = 15
    encoder_seed: int = 2024
    embedding_dim: int = 16
    harmonic_mode: str = "reciprocal_lower"  # or "all_higher"

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def sliding_windows(values: np.ndarray, window: int) -> np.ndarray:
    """(N, window*F) stride-1 windows of a (T, F) array."""
    t = values.shape[0]
    if t < window:
        raise ValueError(f"sequence length {t} shorter than window {window}")
    n = t - window + 1
    return np.stack([values[i : i + window].ravel() for i in range(n)])


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # direct euclidean: identical rows must give exactly zero
    return cdist(a, b, metric="euclidean")


def nn_distances(queries: np.ndarray, corpus: np.ndarray) -> np.ndarray:
    return _pairwise_distances(queries, corpus).min(axis=1)


def _as_list(generated) -> list[MotionTensor]:
    if isinstance(generated, MotionTensor):
        return [generated]
    out = list(generated)
    if not out:
        raise ValueError("generated set is empty")
    return out


def calibrate_epsilon(input_motion: MotionTensor, cfg: MetricsConfig) -> float:
    """Coverage threshold: a low percentile of distances between
    non-overlapping input windows (|lag| >= window)."""
    win = sliding_windows(input_motion.features, cfg.window)
    d = _pairwise_distances(win, win)
    n = len(win)
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]) >= cfg.window
    if not idx.any():
        raise ValueError("clip too short to calibrate epsilon")
    return float(np.percentile(d[idx], cfg.epsilon_percentile))


def coverage(input_motion: MotionTensor, generated, cfg: MetricsConfig) -> float:
    """Fraction of input windows whose nearest generated window is closer
    than epsilon."""
    gen = _as_list(generated)
    eps = cfg.epsilon if cfg.epsilon is not None else calibrate_epsilon(input_motion, cfg)
    inp = sliding_windows(input_motion.features, cfg.window)
    corpus = np.concatenate([sliding_windows(g.features, cfg.window) for g in gen])
    return float(np.mean(nn_distances(inp, corpus) < eps))


def rotation_angle_features(t: MotionTensor) -> np.ndarray:
    """(T, J) joint rotation angles (radians) decoded from the 6D blocks."""
    mats, _ = sixd_to_matrix_flagged(t.rotation_block())
    tr = np.einsum("...ii->...", mats)
    return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))


def _diversity(input_motion, generated, window: int) -> float:
    gen = _as_list(generated)
    inp = sliding_windows(rotation_angle_features(input_motion), window)
    scale = _input_scale(inp)
    dists = [
        nn_distances(sliding_windows(rotation_angle_features(g), window), inp)
        for g in gen
    ]
    return float(np.concatenate(dists).mean() / scale)


def _input_scale(inp_windows: np.ndarray) -> float:
    d = _pairwise_distances(inp_windows, inp_windows)
    n = len(inp_windows)
    off = ~np.eye(n, dtype=bool)
    return float(max(d[off].mean(), 1e-12))


def global_diversity(input_motion, generated, cfg: MetricsConfig) -> float:
    """Mean nearest-input distance of long generated windows over rotation
    angles, in units of the input's own mean window distance."""
    return _diversity(input_motion, generated, cfg.window)


def local_diversity(input_motion, generated, cfg: MetricsConfig) -> float:
    """Same as global diversity, over short windows."""
    return _diversity(input_motion, generated, cfg.local_window)


def local_diversity_profile(
    input_motion, generated: MotionTensor, cfg: MetricsConfig
) -> np.ndarray:
    """Per-window nearest-input distances (unnormalized); for localization
    checks."""
    inp = sliding_windows(rotation_angle_features(input_motion), cfg.local_window)
    gen = sliding_windows(rotation_angle_features(generated), cfg.local_window)
    return nn_distances(gen, inp)


class FeatureEncoder:
    """Fixed random temporal-conv encoder mapping windows to embeddings.

    Same seed -> same weights -> same embeddings. No training happens here.
    """

    def __init__(
        self,
        feature_dim: int,
        seed: int = 2024,
        window: int = 30,
        hidden: int = 32,
        embedding_dim: int = 16,
        kernel: int = 5,
        layers: int = 3,
    ):
        self.feature_dim = feature_dim
        self.seed = seed
        self.window = window
        self.hidden = hidden
        self.embedding_dim = embedding_dim
        self.kernel = kernel
        self.layers = layers
        self.receptive_field = layers * (kernel - 1) + 1
        if window < self.receptive_field:
            raise ValueError(
                f"window {window} shorter than encoder receptive field "
                f"{self.receptive_field}"
            )
        rng = np.random.default_rng(seed)
        dims = [feature_dim] + [hidden] * (layers - 1) + [embedding_dim]
        self.kernels = [
            rng.normal(0.0, 1.0 / np.sqrt(dims[i] * kernel), (kernel, dims[i], dims[i + 1]))
            for i in range(layers)
        ]

    @property
    def architecture_hash(self) -> str:
        spec = json.dumps(
            [self.feature_dim, self.seed, self.window, self.hidden,
             self.embedding_dim, self.kernel, self.layers]
        )
        return hashlib.sha1(spec.encode()).hexdigest()[:12]

    def _conv_valid(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        # x: (N, T, Cin), w: (k, Cin, Cout) -> (N, T-k+1, Cout)
        k = w.shape[0]
        t = x.shape[1]
        out = np.zeros((x.shape[0], t - k + 1, w.shape[2]))
        for o in range(k):
            out += x[:, o : t - k + 1 + o, :] @ w[o]
        return out

    def encode_sequence(self, values: np.ndarray) -> np.ndarray:
        """(T, F) -> one embedding per sliding window of length `window`."""
        t = values.shape[0]
        if t < self.window:
            raise ValueError(f"sequence length {t} < encoder window {self.window}")
        x = values[None, :, :]
        for i, w in enumerate(self.kernels):
            x = self._conv_valid(x, w)
            if i < self.layers - 1:
                x = np.tanh(x)
        # per-position features with receptive field rf; a window embedding is
        # the mean over the positions it fully contains
        feats = x[0]  # (T - rf + 1, emb)
        span = self.window - self.receptive_field + 1
        n = t - self.window + 1
        return np.stack([feats[i : i + span].mean(axis=0) for i in range(n)])


def encode_windows(m: MotionTensor, enc: FeatureEncoder) -> np.ndarray:
    """(T - window + 1, embedding_dim) deterministic window embeddings."""
    if m.feature_dim != enc.feature_dim:
        raise ValueError("encoder was built for a different feature width")
    return enc.encode_sequence(m.features)


def frechet_distance(
    mu1: np.ndarray, cov1: np.ndarray, mu2: np.ndarray, cov2: np.ndarray,
    psd_tolerance: float = 1e-6,
) -> float:
    """||mu1-mu2||^2 + Tr(C1 + C2 - 2 (C1 C2)^(1/2)) via symmetric
    eigendecompositions with negative eigenvalues clipped at zero."""
    w1, v1 = np.linalg.eigh((cov1 + cov1.T) / 2.0)
    scale = max(float(np.abs(w1).max()), 1.0)
    if w1.min() < -psd_tolerance * scale:
        raise np.linalg.LinAlgError("covariance not PSD within tolerance")
    sqrt1 = (v1 * np.sqrt(np.clip(w1, 0.0, None))) @ v1.T
    inner = sqrt1 @ ((cov2 + cov2.T) / 2.0) @ sqrt1
    w, _ = np.linalg.eigh((inner + inner.T) / 2.0)
    scale = max(float(np.abs(w).max()), 1.0)
    if w.min() < -psd_tolerance * scale:
        raise np.linalg.LinAlgError("cross covariance not PSD within tolerance")
    tr_sqrt = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = mu1 - mu2
    return float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * tr_sqrt)


def _embedding_stats(emb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if emb.shape[0] < 2:
        raise ValueError("need at least 2 embeddings for covariance")
    return emb.mean(axis=0), np.cov(emb, rowvar=False)


def sifid(input_motion: MotionTensor, generated, enc: FeatureEncoder) -> float:
    """Frechet distance between input and generated window embeddings."""
    gen = _as_list(generated)
    e1 = encode_windows(input_motion, enc)
    e2 = np.concatenate([encode_windows(g, enc) for g in gen])
    return frechet_distance(*_embedding_stats(e1), *_embedding_stats(e2))


def inter_diversity(generated, enc: FeatureEncoder) -> float:
    """Mean pairwise distance between sequence-level mean embeddings."""
    gen = _as_list(generated)
    if len(gen) < 2:
        raise ValueError("inter-diversity needs at least 2 sequences")
    means = np.stack([encode_windows(g, enc).mean(axis=0) for g in gen])
    d = _pairwise_distances(means, means)
    n = len(gen)
    return float(d[~np.eye(n, dtype=bool)].mean())


def intra_diversity(generated, enc: FeatureEncoder) -> float:
    """Mean pairwise distance among window embeddings within a sequence,
    averaged over the set."""
    gen = _as_list(generated)
    vals = []
    for g in gen:
        emb = encode_windows(g, enc)
        n = emb.shape[0]
        if n < 2:
            vals.append(0.0)
            continue
        d = _pairwise_distances(emb, emb)
        vals.append(float(d[~np.eye(n, dtype=bool)].mean()))
    return float(np.mean(vals))


@dataclass
class MetricsReport:
    coverage: float
    global_div: float
    local_div: float
    sifid: float
    inter_div: float
    intra_div: float
    harmonic_mean: float | None
    harmonic_mode: str
    flags: list[str] = field(default_factory=list)
    sample_count: int = 0
    window: int = 30
    epsilon_used: float | None = None
    encoder_hash: str = ""

    def metric_values(self) -> dict[str, float]:
        return {
            "coverage": self.coverage,
            "global_div": self.global_div,
            "local_div": self.local_div,
            "sifid": self.sifid,
            "inter_div": self.inter_div,
            "intra_div": self.intra_div,
        }

    def to_json_dict(self) -> dict:
        d = dict(self.metric_values())
        d.update(
            harmonic_mean=self.harmonic_mean,
            harmonic_mode=self.harmonic_mode,
            flags=self.flags,
            sample_count=self.sample_count,
            window=self.window,
            epsilon_used=self.epsilon_used,
            encoder_hash=self.encoder_hash,
        )
        return d

    def to_csv_row(self) -> str:
        """Coverage, Global Div., Local Div., SiFID, Inter Div., Intra Div.,
        Harmonic Mean."""
        hm = "" if self.harmonic_mean is None else f"{self.harmonic_mean:.4f}"
        vals = [
            self.coverage, self.global_div, self.local_div,
            self.sifid, self.inter_div, self.intra_div,
        ]
        return ",".join(f"{v:.4f}" for v in vals) + f",{hm}"


def harmonic_report(
    metrics: dict[str, float],
    mode: str = "reciprocal_lower",
    **extra,
) -> MetricsReport:
    """Combine the six metrics into a report with a harmonic-mean summary.

    reciprocal_lower (default): lower-is-better metrics enter as reciprocals.
    all_higher: plain harmonic mean of the raw values.
    The source regimes never state their exact combination rule, so the mode
    is always recorded next to the number.
    """
    needed = ("coverage", "global_div", "local_div", "sifid", "inter_div", "intra_div")
    missing = [k for k in needed if k not in metrics]
    if missing:
        raise ValueError(f"missing metrics: {missing}")
    if mode not in ("reciprocal_lower", "all_higher"):
        raise ValueError(f"unknown harmonic mode {mode!r}")

    flags = list(extra.pop("flags", []))
    terms = []
    for k in needed:
        v = metrics[k]
        if mode == "reciprocal_lower" and k in LOWER_IS_BETTER:
            v = math.inf if v == 0 else 1.0 / v
        terms.append(v)
    if any(t <= 0 or not math.isfinite(t) for t in terms):
        flags.append("harmonic_mean_undefined_nonpositive_term")
        hm = None
    else:
        hm = len(terms) / sum(1.0 / t for t in terms)
    return MetricsReport(
        coverage=metrics["coverage"],
        global_div=metrics["global_div"],
        local_div=metrics["local_div"],
        sifid=metrics["sifid"],
        inter_div=metrics["inter_div"],
        intra_div=metrics["intra_div"],
        harmonic_mean=hm,
        harmonic_mode=mode,
        flags=flags,
        **extra,
    )


def compute_metrics(
    input_motion: MotionTensor, generated, cfg: MetricsConfig | None = None
) -> MetricsReport:
    """All six metrics plus the harmonic mean for a generated set."""
    cfg = cfg or MetricsConfig()
    gen = _as_list(generated)
    enc = FeatureEncoder(
        input_motion.feature_dim,
        seed=cfg.encoder_seed,
        window=cfg.window,
        embedding_dim=cfg.embedding_dim,
    )
    eps = cfg.epsilon if cfg.epsilon is not None else calibrate_epsilon(input_motion, cfg)
    fixed = MetricsConfig(
        window=cfg.window,
        epsilon=eps,
        epsilon_percentile=cfg.epsilon_percentile,
        local_window=cfg.local_window,
        encoder_seed=cfg.encoder_seed,
        embedding_dim=cfg.embedding_dim,
        harmonic_mode=cfg.harmonic_mode,
    )
    values = {
        "coverage": coverage(input_motion, gen, fixed),
        "global_div": global_diversity(input_motion, gen, fixed),
        "local_div": local_diversity(input_motion, gen, fixed),
        "sifid": sifid(input_motion, gen, enc),
        "inter_div": inter_diversity(gen, enc) if len(gen) > 1 else 0.0,
        "intra_div": intra_diversity(gen, enc),
    }
    flags = [] if len(gen) > 1 else ["inter_diversity_needs_2_sequences"]
    return harmonic_report(
        values,
        mode=cfg.harmonic_mode,
        flags=flags,
        sample_count=len(gen),
        window=cfg.window,
        epsilon_used=eps,
        encoder_hash=enc.architecture_hash,
    )
