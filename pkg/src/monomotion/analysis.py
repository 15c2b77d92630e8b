"""Layer-activation capture and linear CKA similarity across stages.

The similarity matrix replicates the observation motivating cross-stage
transfer: early generator layers of corresponding stages one level apart
stay similar, late layers diverge.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .motion_io import resample_array
from .network import PyramidModel

DEFAULT_PROBE_SEEDS = tuple(range(1000, 1064))  # 64 documented generation passes


class DegenerateActivationsError(ValueError):
    """Zero-variance activations make CKA undefined."""


@dataclass
class ActivationMatrix:
    """Per-probe activations of one (stage, layer): (probes, channels, T)."""

    values: np.ndarray
    stage: int
    layer: int
    probe_seeds: tuple[int, ...]

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise ValueError("activations contain non-finite entries")

    @property
    def probes(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[2]

    def flattened(self, length: int | None = None) -> np.ndarray:
        """(probes*length, channels) samples, optionally resampled in time."""
        vals = self.values
        if length is not None and length != self.length:
            if length > self.length:
                raise ValueError("activations are only resampled downward")
            vals = np.stack(
                [resample_array(v.T, length).T for v in vals]
            )
        n, c, t = vals.shape
        out = vals.transpose(0, 2, 1).reshape(n * t, c)
        if out.shape[0] < 2:
            raise ValueError("need at least 2 samples")
        return out


def capture_activations(
    model: PyramidModel, stage: int, layer: int, probe_seeds=DEFAULT_PROBE_SEEDS
) -> ActivationMatrix:
    """Generator layer outputs over a set of full generation passes."""
    if not 0 <= layer < 4:
        raise ValueError("layer must be in 0..3")
    model.require_trained(stage + 1)
    acts = []
    for seed in probe_seeds:
        _, captured = model.generate_full(int(seed), capture=[(stage, layer)])
        acts.append(captured[(stage, layer)][0].numpy())
    return ActivationMatrix(
        np.stack(acts), stage=stage, layer=layer, probe_seeds=tuple(probe_seeds)
    )


def linear_cka(x: np.ndarray, y: np.ndarray) -> float:
    """Linear centered kernel alignment between (n, p) and (n, q) samples.

    ||Y_c^T X_c||_F^2 / (||X_c^T X_c||_F * ||Y_c^T Y_c||_F), in [0, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("inputs must be 2-D with matching sample counts")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    xx = np.linalg.norm(xc.T @ xc)
    yy = np.linalg.norm(yc.T @ yc)
    if xx == 0.0 or yy == 0.0:
        raise DegenerateActivationsError("zero-variance input; CKA undefined")
    num = np.linalg.norm(yc.T @ xc) ** 2
    return float(num / (xx * yy))


def cka_between(a: ActivationMatrix, b: ActivationMatrix) -> float:
    """CKA between two captures; the longer one is resampled to the shorter
    length so sample counts match."""
    if a.probes != b.probes:
        raise ValueError("captures must use the same probe seeds")
    n = min(a.length, b.length)
    return linear_cka(a.flattened(n), b.flattened(n))


@dataclass
class SimilarityReport:
    """All (stage, layer) x (stage, layer) linear-CKA scores."""

    pairs: list[tuple[tuple[int, int], tuple[int, int], float]]
    probe_seeds: tuple[int, ...]
    sample_counts: dict = field(default_factory=dict)

    def score(self, a: tuple[int, int], b: tuple[int, int]) -> float:
        for pa, pb, s in self.pairs:
            if (pa, pb) == (a, b) or (pa, pb) == (b, a):
                return s
        raise KeyError((a, b))

    def consecutive_stage_scores(self) -> dict[int, list[float]]:
        """layer -> [CKA(G_j, G_j+1) over j], the first summary view."""
        stages = sorted({p[0] for p, _, _ in self.pairs})
        return {
            layer: [
                self.score((j, layer), (j + 1, layer)) for j in stages[:-1]
            ]
            for layer in range(4)
        }

    def corresponding_stage_scores(self) -> dict[int, list[float]]:
        """layer -> [CKA(G_j, G_j+2) over j], the cross-level summary view."""
        stages = sorted({p[0] for p, _, _ in self.pairs})
        return {
            layer: [
                self.score((j, layer), (j + 2, layer)) for j in stages[:-2]
            ]
            for layer in range(4)
        }

    def to_json_dict(self) -> dict:
        return {
            "pairs": [
                {"a": list(a), "b": list(b), "cka": s} for a, b, s in self.pairs
            ],
            "probe_seeds": list(self.probe_seeds),
            "sample_counts": self.sample_counts,
            "consecutive": self.consecutive_stage_scores(),
            "corresponding": self.corresponding_stage_scores(),
        }

    def to_csv(self) -> str:
        lines = ["stage_a,layer_a,stage_b,layer_b,cka"]
        for (sa, la), (sb, lb), s in self.pairs:
            lines.append(f"{sa},{la},{sb},{lb},{s:.6f}")
        return "\n".join(lines) + "\n"


def stage_similarity_matrix(
    model: PyramidModel, probe_seeds=DEFAULT_PROBE_SEEDS
) -> SimilarityReport:
    """Linear CKA for every (stage, layer) pair of the trained pyramid."""
    model.require_trained()
    s = model.pyramid.num_stages
    keys = [(i, l) for i in range(s) for l in range(4)]
    # capture everything in one generation pass per probe seed
    caps: dict[tuple[int, int], ActivationMatrix] = {}
    per_probe: dict[tuple[int, int], list[np.ndarray]] = {k: [] for k in keys}
    for seed in probe_seeds:
        _, captured = model.generate_full(int(seed), capture=keys)
        for k in keys:
            per_probe[k].append(captured[k][0].numpy())
    for k in keys:
        caps[k] = ActivationMatrix(
            np.stack(per_probe[k]), stage=k[0], layer=k[1],
            probe_seeds=tuple(probe_seeds),
        )

    pairs = []
    for i, a in enumerate(keys):
        for b in keys[i:]:
            pairs.append((a, b, cka_between(caps[a], caps[b])))
    counts = {f"{k[0]},{k[1]}": caps[k].probes * caps[k].length for k in keys}
    return SimilarityReport(
        pairs=pairs, probe_seeds=tuple(probe_seeds), sample_counts=counts
    )


def write_similarity_outputs(report: SimilarityReport, out_dir) -> list[str]:
    """CSV + JSON + heatmap/summary plots; returns written file paths."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    csv_path = out / "cka_matrix.csv"
    csv_path.write_text(report.to_csv())
    paths.append(str(csv_path))

    json_path = out / "cka_report.json"
    json_path.write_text(json.dumps(report.to_json_dict(), indent=1))
    paths.append(str(json_path))

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    keys = sorted({p for p, _, _ in report.pairs} | {p for _, p, _ in report.pairs})
    idx = {k: i for i, k in enumerate(keys)}
    mat = np.eye(len(keys))
    for a, b, s in report.pairs:
        mat[idx[a], idx[b]] = s
        mat[idx[b], idx[a]] = s
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(mat, vmin=0, vmax=1, cmap="viridis")
    labels = [f"S{s+1}L{l+1}" for s, l in keys]
    ax.set_xticks(range(len(keys)), labels, rotation=90, fontsize=5)
    ax.set_yticks(range(len(keys)), labels, fontsize=5)
    fig.colorbar(im)
    ax.set_title("linear CKA across stages and layers")
    heat_path = out / "cka_heatmap.png"
    fig.savefig(heat_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(str(heat_path))

    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for layer, scores in report.consecutive_stage_scores().items():
        axes[0].plot(range(1, len(scores) + 1), scores, marker="o",
                     label=f"layer {layer + 1}")
    axes[0].set_title("consecutive stages (G_j vs G_j+1)")
    axes[0].set_xlabel("stage j")
    for layer, scores in report.corresponding_stage_scores().items():
        axes[1].plot(range(1, len(scores) + 1), scores, marker="o",
                     label=f"layer {layer + 1}")
    axes[1].set_title("corresponding stages across levels (G_j vs G_j+2)")
    axes[1].set_xlabel("stage j")
    axes[0].set_ylabel("CKA")
    axes[1].legend(fontsize=7)
    summary_path = out / "cka_summary.png"
    fig.savefig(summary_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(str(summary_path))
    return paths
