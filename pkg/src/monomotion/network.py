"""Skeleton-aware convolutional stages and the temporal generation pyramid.

Feature channels are grouped into nodes: one node per joint (6 channels of
6D rotation), one node for the contact block and one for the root block.
A skeleton-aware convolution is a dense temporal convolution whose weight is
masked so each node only reads from its graph neighborhood; the contact node
is wired to the contact joints and the root node to the root joint.

Stage 1 maps noise to coarse motion features; every later stage upsamples
its input and adds a learned residual refinement of it.
"""
from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .motion_io import MotionTensor, PyramidConfig, SkeletonTopology, resample_array

CHECKPOINT_VERSION = 1


class StateError(RuntimeError):
    """Operation requires model state (e.g. trained stages) that is absent."""


class CheckpointError(RuntimeError):
    """Unreadable checkpoint payload."""


class IncompatibleCheckpointError(CheckpointError):
    """Checkpoint version does not match this code."""


def derive_seed(*keys: int) -> int:
    """Stable child seed from a tuple of integer keys."""
    state = np.random.SeedSequence(list(keys)).generate_state(1, dtype=np.uint64)
    return int(state[0] & 0x7FFF_FFFF_FFFF_FFFF)


@dataclass(frozen=True)
class NetworkConfig:
    """Capacity knobs shared by every stage."""

    neighbor_distance: int = 2
    temporal_kernel: int = 5
    hidden_per_node: int | None = None  # None: smallest multiple of 8 with h*J >= 2F
    leaky_slope: float = 0.2

    def resolved_hidden(self, topology: SkeletonTopology) -> int:
        if self.hidden_per_node is not None:
            return self.hidden_per_node
        per = 2.0 * topology.feature_dim / topology.joint_count
        return 8 * math.ceil(per / 8.0)

    def to_json_dict(self) -> dict:
        return {
            "neighbor_distance": self.neighbor_distance,
            "temporal_kernel": self.temporal_kernel,
            "hidden_per_node": self.hidden_per_node,
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            neighbor_distance=int(d["neighbor_distance"]),
            temporal_kernel=int(d["temporal_kernel"]),
            hidden_per_node=d["hidden_per_node"],
            leaky_slope=float(d["leaky_slope"]),
        )


@dataclass(frozen=True)
class SkeletonConvSpec:
    """Node neighborhoods plus per-node channel counts for one conv layer."""

    neighbor_lists: tuple[tuple[int, ...], ...]
    in_channels: tuple[int, ...]
    out_channels: tuple[int, ...]
    temporal_kernel: int

    def __post_init__(self):
        n = len(self.neighbor_lists)
        if len(self.in_channels) != n or len(self.out_channels) != n:
            raise ValueError("channel lists must match node count")
        if self.temporal_kernel % 2 != 1:
            raise ValueError("temporal kernel width must be odd")
        for i, nb in enumerate(self.neighbor_lists):
            if i not in nb:
                raise ValueError(f"node {i} missing from its own neighbor list")
            for j in nb:
                if i not in self.neighbor_lists[j]:
                    raise ValueError(f"neighbor lists not symmetric at ({i}, {j})")

    @property
    def total_in(self) -> int:
        return sum(self.in_channels)

    @property
    def total_out(self) -> int:
        return sum(self.out_channels)

    def weight_mask(self) -> torch.Tensor:
        in_off = np.cumsum((0,) + self.in_channels)
        out_off = np.cumsum((0,) + self.out_channels)
        mask = torch.zeros(self.total_out, self.total_in)
        for a, neigh in enumerate(self.neighbor_lists):
            for b in neigh:
                mask[out_off[a] : out_off[a + 1], in_off[b] : in_off[b + 1]] = 1.0
        return mask


def skeleton_neighbor_lists(
    topology: SkeletonTopology, distance: int
) -> tuple[tuple[int, ...], ...]:
    """Neighborhoods for J joint nodes + contact node (J) + root node (J+1)."""
    j = topology.joint_count
    dist = topology.tree_distances()
    lists = [set(np.nonzero(dist[i] <= distance)[0].tolist()) for i in range(j)]
    contact_node = j
    root_node = j + 1
    lists.append({contact_node} | set(topology.contact_joints))
    lists.append({root_node, topology.root_index})
    for c in topology.contact_joints:
        lists[c].add(contact_node)
    lists[topology.root_index].add(root_node)
    return tuple(tuple(sorted(s)) for s in lists)


def feature_blocks(topology: SkeletonTopology) -> tuple[int, ...]:
    """Per-node channel counts of the motion feature layout."""
    return tuple([6] * topology.joint_count + [len(topology.contact_joints), 3])


class SkeletonConv(nn.Module):
    """Masked dense temporal convolution (stride 1, reflect padding)."""

    def __init__(self, spec: SkeletonConvSpec, generator: torch.Generator, bias=True):
        super().__init__()
        self.spec = spec
        k = spec.temporal_kernel
        self.weight = nn.Parameter(torch.empty(spec.total_out, spec.total_in, k))
        self.bias = nn.Parameter(torch.zeros(spec.total_out)) if bias else None
        self.register_buffer("mask", spec.weight_mask().unsqueeze(-1))
        fan_in = self.mask[:, :, 0].sum(dim=1, keepdim=True) * k
        std = torch.sqrt(2.0 / fan_in.clamp(min=1.0))
        with torch.no_grad():
            self.weight.normal_(0.0, 1.0, generator=generator)
            self.weight.mul_(std.unsqueeze(-1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.spec.total_in:
            raise StateError(
                f"input has {x.shape[1]} channels, spec wants {self.spec.total_in}"
            )
        if x.shape[-1] < self.spec.temporal_kernel:
            raise StateError("input shorter than the temporal kernel")
        pad = self.spec.temporal_kernel // 2
        if pad:
            x = F.pad(x, (pad, pad), mode="reflect")
        return F.conv1d(x, self.weight * self.mask, self.bias)


def skeleton_conv_forward(
    x: torch.Tensor, spec: SkeletonConvSpec, weights: torch.Tensor, bias=None
) -> torch.Tensor:
    """Functional form: one masked skeleton convolution over (B, C, T)."""
    pad = spec.temporal_kernel // 2
    if x.shape[-1] < spec.temporal_kernel:
        raise StateError("input shorter than the temporal kernel")
    if weights.shape != (spec.total_out, spec.total_in, spec.temporal_kernel):
        raise StateError("weight shape does not match spec")
    if pad:
        x = F.pad(x, (pad, pad), mode="reflect")
    return F.conv1d(x, weights * spec.weight_mask().unsqueeze(-1).to(weights), bias)


class SkelConvNet(nn.Module):
    """Four skeleton-aware convolutions; leaky ReLU after the first three."""

    def __init__(
        self,
        topology: SkeletonTopology,
        cfg: NetworkConfig,
        out_blocks: tuple[int, ...],
        generator: torch.Generator,
    ):
        super().__init__()
        neighbors = skeleton_neighbor_lists(topology, cfg.neighbor_distance)
        io_blocks = feature_blocks(topology)
        h = cfg.resolved_hidden(topology)
        hidden = tuple([h] * len(io_blocks))
        widths = [io_blocks, hidden, hidden, hidden, out_blocks]
        self.convs = nn.ModuleList(
            SkeletonConv(
                SkeletonConvSpec(neighbors, widths[i], widths[i + 1], cfg.temporal_kernel),
                generator,
            )
            for i in range(4)
        )
        self.slope = cfg.leaky_slope

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < 3:
                x = F.leaky_relu(x, self.slope)
        return x

    def forward_with_activations(self, x: torch.Tensor):
        acts = []
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < 3:
                x = F.leaky_relu(x, self.slope)
            acts.append(x)
        return x, acts

    @property
    def receptive_field(self) -> int:
        k = self.convs[0].spec.temporal_kernel
        return 4 * (k - 1) + 1


class StageNetwork(nn.Module):
    """One generator/discriminator pair at a fixed temporal length."""

    def __init__(
        self,
        stage_index: int,
        level_index: int,
        length: int,
        topology: SkeletonTopology,
        cfg: NetworkConfig,
        seed: int,
    ):
        super().__init__()
        self.stage_index = stage_index
        self.level_index = level_index
        self.length = length
        gen_g = torch.Generator().manual_seed(derive_seed(seed, 100, stage_index, 0))
        gen_d = torch.Generator().manual_seed(derive_seed(seed, 100, stage_index, 1))
        score_blocks = tuple([1] * (topology.joint_count + 2))
        self.generator = SkelConvNet(topology, cfg, feature_blocks(topology), gen_g)
        self.discriminator = SkelConvNet(topology, cfg, score_blocks, gen_d)
        self.register_buffer("sigma", torch.tensor(1.0))
        self.z_star: torch.Tensor | None
        if stage_index == 0:
            self.register_buffer("z_star", torch.zeros(0))
        else:
            self.z_star = None

    def patch_scores(self, x: torch.Tensor) -> torch.Tensor:
        """(B, nodes, T) per-patch critic scores."""
        return self.discriminator(x)

    def critic_score(self, x: torch.Tensor) -> torch.Tensor:
        """Per-element scalar: patch scores averaged over nodes and time."""
        return self.patch_scores(x).mean(dim=(1, 2))


class PyramidModel(nn.Module):
    """The full stack of stages plus normalization statistics."""

    def __init__(
        self,
        topology: SkeletonTopology,
        pyramid: PyramidConfig,
        net_config: NetworkConfig | None = None,
        seed: int = 0,
        frame_rate: float = 30.0,
    ):
        super().__init__()
        self.topology = topology
        self.pyramid = pyramid
        self.net_config = net_config or NetworkConfig()
        self.seed = seed
        self.frame_rate = frame_rate
        self.trained = [False] * pyramid.num_stages
        self.training_meta: dict = {}

        stages = []
        for i, length in enumerate(pyramid.stage_lengths):
            stage = StageNetwork(
                i, pyramid.level_of_stage(i), length, topology, self.net_config, seed
            )
            rf = stage.discriminator.receptive_field
            if rf >= length / 2:
                raise ValueError(
                    f"discriminator receptive field {rf} is not below half the "
                    f"stage length {length} at stage {i}; reduce temporal_kernel "
                    f"or use a longer clip"
                )
            stages.append(stage)
        self.stages = nn.ModuleList(stages)

        f = topology.feature_dim
        self.register_buffer("feat_mean", torch.zeros(f))
        self.register_buffer("feat_std", torch.ones(f))
        self.input_motion: MotionTensor | None = None  # the training clip

        gen = torch.Generator().manual_seed(derive_seed(seed, 7))
        t0 = pyramid.stage_lengths[0]
        self.stages[0].z_star = torch.randn(1, f, t0, generator=gen)

    # --- feature normalization -------------------------------------------

    def set_feature_stats(self, mean: np.ndarray, std: np.ndarray):
        self.feat_mean.copy_(torch.as_tensor(mean, dtype=torch.float32))
        self.feat_std.copy_(torch.as_tensor(std, dtype=torch.float32))

    def normalize(self, t: MotionTensor) -> torch.Tensor:
        """(T, F) motion -> normalized (1, F, T) float32."""
        x = torch.as_tensor(t.features, dtype=torch.float32)
        x = (x - self.feat_mean) / self.feat_std
        return x.t().unsqueeze(0)

    def denormalize(self, x: torch.Tensor) -> MotionTensor:
        """Normalized (1, F, T) -> (T, F) motion in real units."""
        y = x.detach()[0].t() * self.feat_std + self.feat_mean
        return MotionTensor(
            y.to(torch.float64).numpy(), self.topology, self.frame_rate
        )

    # --- generation -------------------------------------------------------

    @staticmethod
    def _resample(x: torch.Tensor, length: int) -> torch.Tensor:
        if x.shape[-1] == length:
            return x
        return F.interpolate(x, size=length, mode="linear", align_corners=True)

    def generate_stage(
        self, i: int, prev: torch.Tensor | None, z: torch.Tensor
    ) -> torch.Tensor:
        """Stage 1: G(sigma*z). Stages after: up(prev) + G(up(prev) + sigma*z)."""
        stage = self.stages[i]
        sigma = stage.sigma
        if i == 0:
            if prev is not None:
                raise StateError("stage 0 takes no previous tensor")
            return stage.generator(sigma * z)
        if prev is None:
            raise StateError(f"stage {i} needs the previous stage output")
        if (
            z.shape[-1] == self.pyramid.stage_lengths[i]
            and prev.shape[-1] != self.pyramid.stage_lengths[i - 1]
        ):
            # default-length chain must agree with the configured pyramid
            raise StateError(
                f"previous tensor length {prev.shape[-1]} != stage length "
                f"{self.pyramid.stage_lengths[i - 1]}"
            )
        up = self._resample(prev, z.shape[-1])
        return up + stage.generator(up + sigma * z)

    def scaled_lengths(self, length_override: int | None) -> list[int]:
        base = list(self.pyramid.stage_lengths)
        if length_override is None:
            return base
        total = base[-1]
        out = []
        for i, n in enumerate(base):
            scaled = max(2, round(n * length_override / total))
            if out:
                scaled = max(scaled, out[-1])
            out.append(scaled)
        out[-1] = length_override
        return out

    def resolve_noise(
        self, noise, lengths: list[int] | None = None, batch: int = 1
    ) -> list[torch.Tensor]:
        """Noise codes per stage from a master seed, per-stage seeds, or
        explicit tensors (None entries become zeros)."""
        lengths = lengths or list(self.pyramid.stage_lengths)
        f = self.topology.feature_dim
        s = self.pyramid.num_stages
        if isinstance(noise, (int, np.integer)):
            seeds = [derive_seed(int(noise), 11, i) for i in range(s)]
        elif all(isinstance(n, (int, np.integer)) for n in noise):
            if len(noise) != s:
                raise ValueError(f"need {s} per-stage seeds")
            seeds = [int(n) for n in noise]
        else:
            if len(noise) != s:
                raise ValueError(f"need {s} noise codes")
            codes = []
            for i, z in enumerate(noise):
                if z is None:
                    codes.append(torch.zeros(batch, f, lengths[i]))
                else:
                    codes.append(torch.as_tensor(z, dtype=torch.float32))
            return codes
        codes = []
        for i, sd in enumerate(seeds):
            g = torch.Generator().manual_seed(sd)
            codes.append(torch.randn(batch, f, lengths[i], generator=g))
        return codes

    def run_stages(
        self,
        x: torch.Tensor | None,
        codes: list[torch.Tensor],
        start: int = 0,
        stop: int | None = None,
        capture: list[tuple[int, int]] | None = None,
        captured: dict | None = None,
    ) -> torch.Tensor:
        """Fold stages [start, stop) over x (None when start == 0).

        `capture` lists (stage, layer) pairs whose generator activations are
        stored into `captured`.
        """
        stop = self.pyramid.num_stages if stop is None else stop
        want = {s for s, _ in (capture or [])}
        for i in range(start, stop):
            if i in want:
                stage = self.stages[i]
                if i == 0:
                    inp = stage.sigma * codes[i]
                    out, acts = stage.generator.forward_with_activations(inp)
                    x = out
                else:
                    up = self._resample(x, codes[i].shape[-1])
                    out, acts = stage.generator.forward_with_activations(
                        up + stage.sigma * codes[i]
                    )
                    x = up + out
                for s, layer in capture or []:
                    if s == i:
                        captured[(s, layer)] = acts[layer].detach()
            else:
                x = self.generate_stage(i, x if i > 0 else None, codes[i])
        return x

    def reconstruction_codes(self, batch: int = 1) -> list[torch.Tensor]:
        """The z* chain: the stored stage-1 draw, zeros afterwards."""
        f = self.topology.feature_dim
        codes = [self.stages[0].z_star.expand(batch, -1, -1)]
        for i in range(1, self.pyramid.num_stages):
            codes.append(torch.zeros(batch, f, self.pyramid.stage_lengths[i]))
        return codes

    def require_trained(self, upto: int | None = None):
        upto = self.pyramid.num_stages if upto is None else upto
        for i in range(upto):
            if not self.trained[i]:
                raise StateError(f"stage {i} is not trained")

    def generate_full(
        self,
        noise,
        length_override: int | None = None,
        capture: list[tuple[int, int]] | None = None,
    ):
        """Run the whole pyramid; returns a real-unit MotionTensor (and the
        captured activations when `capture` is given)."""
        self.require_trained()
        lengths = self.scaled_lengths(length_override)
        codes = self.resolve_noise(noise, lengths)
        captured: dict = {}
        with torch.no_grad():
            out = self.run_stages(None, codes, capture=capture, captured=captured)
        motion = self.denormalize(out)
        if capture is not None:
            return motion, captured
        return motion

    def weights_digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for key, value in sorted(self.state_dict().items()):
            h.update(key.encode())
            h.update(value.detach().cpu().numpy().tobytes())
        return h.hexdigest()


def compute_noise_amplitudes(targets: list[MotionTensor]) -> np.ndarray:
    """sigma_1 = 1; sigma_i = RMSE between the upsampled previous target and
    the current one, clipped to be non-increasing."""
    sigmas = [1.0]
    for prev, cur in zip(targets, targets[1:]):
        up = resample_array(prev.features, cur.frames)
        rmse = float(np.sqrt(np.mean((up - cur.features) ** 2)))
        sigmas.append(min(rmse, sigmas[-1]))
    return np.asarray(sigmas)


def build_model(
    input_motion: MotionTensor,
    pyramid: PyramidConfig | None = None,
    net_config: NetworkConfig | None = None,
    seed: int = 0,
    std_floor: float = 1e-3,
) -> PyramidModel:
    """Model sized for one clip, with feature statistics taken from it."""
    pyramid = pyramid or PyramidConfig.for_length(input_motion.frames)
    model = PyramidModel(
        input_motion.topology,
        pyramid,
        net_config,
        seed=seed,
        frame_rate=input_motion.frame_rate,
    )
    mean = input_motion.features.mean(axis=0)
    std = np.maximum(input_motion.features.std(axis=0), std_floor)
    model.set_feature_stats(mean, std)
    return model


def save_checkpoint(model: PyramidModel, training_meta: dict | None = None) -> bytes:
    """Versioned archive: JSON metadata sidecar + named weight arrays."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "topology": model.topology.to_json_dict(),
        "pyramid": model.pyramid.to_json_dict(),
        "network": model.net_config.to_json_dict(),
        "seed": model.seed,
        "frame_rate": model.frame_rate,
        "trained": list(model.trained),
        "training": training_meta if training_meta is not None else model.training_meta,
    }
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    npz_buf = io.BytesIO()
    np.savez(npz_buf, **arrays)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=1))
        zf.writestr("weights.npz", npz_buf.getvalue())
        if model.input_motion is not None:
            clip_buf = io.BytesIO()
            np.savez(clip_buf, features=model.input_motion.features)
            zf.writestr("input_clip.npz", clip_buf.getvalue())
    return buf.getvalue()


def load_checkpoint(data: bytes) -> PyramidModel:
    try:
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            meta = json.loads(zf.read("meta.json"))
            npz = np.load(io.BytesIO(zf.read("weights.npz")))
            arrays = {k: npz[k] for k in npz.files}
            clip_features = None
            if "input_clip.npz" in zf.namelist():
                clip = np.load(io.BytesIO(zf.read("input_clip.npz")))
                clip_features = clip["features"]
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint: {exc}") from exc
    version = meta.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(
            f"checkpoint version {version} != supported {CHECKPOINT_VERSION}"
        )
    model = PyramidModel(
        SkeletonTopology.from_json_dict(meta["topology"]),
        PyramidConfig.from_json_dict(meta["pyramid"]),
        NetworkConfig.from_json_dict(meta["network"]),
        seed=int(meta["seed"]),
        frame_rate=float(meta["frame_rate"]),
    )
    state = {k: torch.as_tensor(v) for k, v in arrays.items()}
    model.load_state_dict(state)
    model.trained = [bool(b) for b in meta["trained"]]
    model.training_meta = meta.get("training", {})
    if clip_features is not None:
        model.input_motion = MotionTensor(
            clip_features, model.topology, model.frame_rate
        )
    return model
