"""Losses, per-level loss-weight annealing, cross-stage transfer learning and
the mini-batch training loop.

Training is level-by-level: the stages of a pyramid level train jointly while
everything below them is frozen and serves as a feature extractor. Each
iteration draws a fresh batch of noise chains, takes one critic step
(Wasserstein loss + gradient penalty) and one generator step (adversarial +
reconstruction + contact terms with the level's annealed weights). The
reconstruction path runs the fixed z* chain once per iteration.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch

from .motion_io import (
    MotionTensor,
    PyramidConfig,
    SkeletonTopology,
    build_pyramid_targets,
)
from .network import (
    NetworkConfig,
    PyramidModel,
    StageNetwork,
    build_model,
    compute_noise_amplitudes,
    derive_seed,
)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class LossWeights:
    lambda_adv: float
    lambda_rec: float
    lambda_con: float
    lambda_gp: float

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class AnnealingSchedule:
    """Per-level weights: the adversarial term boosted early, reconstruction
    dominating late. Both stages of a level share the level's weights."""

    lambda_adv_per_level: tuple[float, ...] = (5.0, 5.0, 2.5, 1.0)
    lambda_rec_per_level: tuple[float, ...] = (50.0, 75.0, 100.0, 100.0)
    lambda_con: float = 1.0
    lambda_gp: float = 10.0
    interpolate_within_level: bool = False

    def __post_init__(self):
        if len(self.lambda_adv_per_level) != len(self.lambda_rec_per_level):
            raise ValueError("per-level weight lists must have equal length")


def annealed_weights(
    level: int, schedule: AnnealingSchedule, progress: float | None = None
) -> LossWeights:
    """Weights for a level; with `interpolate_within_level` and a progress
    fraction, values slide linearly toward the next level's."""
    n = len(schedule.lambda_adv_per_level)
    if not 0 <= level < n:
        raise ValueError(f"level {level} out of range for {n}-level schedule")
    adv = schedule.lambda_adv_per_level[level]
    rec = schedule.lambda_rec_per_level[level]
    if schedule.interpolate_within_level and progress is not None:
        nxt = min(level + 1, n - 1)
        frac = min(max(progress, 0.0), 1.0)
        adv = adv + frac * (schedule.lambda_adv_per_level[nxt] - adv)
        rec = rec + frac * (schedule.lambda_rec_per_level[nxt] - rec)
    return LossWeights(adv, rec, schedule.lambda_con, schedule.lambda_gp)


@dataclass
class TrainConfig:
    batch_size: int = 16
    level_iterations: tuple[float, ...] = (210.0, 210.0, 105.0, 70.0)
    iteration_unit: float = 1.0  # multiplier turning units into steps
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.9)
    seed: int = 0
    transfer_learning: bool = True
    annealing: AnnealingSchedule = field(default_factory=AnnealingSchedule)
    contact_sigmoid_a: float = 12.0
    contact_sigmoid_b: float = 0.5
    stop_lrec: float | None = None  # per-level early stop on the z* loss
    deterministic: bool = True
    eval_samples: int = 8  # 0 skips the auto-run metrics report
    network: NetworkConfig | None = None
    pyramid: PyramidConfig | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if any(x <= 0 for x in self.level_iterations):
            raise ValueError("iteration budgets must be positive")

    def iterations_for_level(self, level: int) -> int:
        return max(0, round(self.level_iterations[level] * self.iteration_unit))

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["network"] = self.network.to_json_dict() if self.network else None
        d["pyramid"] = self.pyramid.to_json_dict() if self.pyramid else None
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("annealing") is not None and not isinstance(
            d["annealing"], AnnealingSchedule
        ):
            ann = dict(d["annealing"])
            for key in ("lambda_adv_per_level", "lambda_rec_per_level"):
                if key in ann:
                    ann[key] = tuple(ann[key])
            d["annealing"] = AnnealingSchedule(**ann)
        if d.get("network") is not None and not isinstance(d["network"], NetworkConfig):
            d["network"] = NetworkConfig.from_json_dict(d["network"])
        if d.get("pyramid") is not None and not isinstance(d["pyramid"], PyramidConfig):
            d["pyramid"] = PyramidConfig.from_json_dict(d["pyramid"])
        for key in ("level_iterations", "betas"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


def preset(name: str) -> TrainConfig:
    """Named configurations; scalar iteration counts from the source regimes
    are read as a per-level value repeated for every level."""
    if name == "abl9":
        return TrainConfig()
    if name == "baseline":
        return TrainConfig(
            batch_size=1,
            level_iterations=(105.0, 105.0, 105.0, 105.0),
            transfer_learning=False,
            annealing=AnnealingSchedule(
                lambda_adv_per_level=(1.0, 1.0, 1.0, 1.0),
                lambda_rec_per_level=(10.0, 10.0, 10.0, 10.0),
            ),
        )
    if name == "abl9-smoke":
        # desk-scale run for the smoke benchmark clip (8 joints, 96 frames);
        # the first level carries the raw noise-to-motion fit and needs the
        # largest share
        return TrainConfig(
            level_iterations=(1600.0, 450.0, 350.0, 450.0),
            lr_g=1e-3,
            lr_d=1e-3,
            network=NetworkConfig(temporal_kernel=3, hidden_per_node=8),
        )
    raise ValueError(f"unknown preset {name!r} (abl9, baseline, abl9-smoke)")


# --- losses -----------------------------------------------------------------

def _critic(d, x: torch.Tensor) -> torch.Tensor:
    """Per-element critic scores from a StageNetwork or a plain callable."""
    if isinstance(d, StageNetwork):
        return d.critic_score(x)
    return d(x)


def gradient_penalty(
    d, real: torch.Tensor, fake: torch.Tensor, alpha_generator=None
) -> torch.Tensor:
    b = fake.shape[0]
    alpha = torch.rand(b, 1, 1, generator=alpha_generator, dtype=fake.dtype)
    interp = (alpha * fake.detach() + (1.0 - alpha) * real.detach()).requires_grad_(True)
    scores = _critic(d, interp)
    if scores.requires_grad:
        grads = torch.autograd.grad(
            scores.sum(), interp, create_graph=True, allow_unused=True
        )[0]
    else:  # a constant critic has zero gradient everywhere
        grads = None
    if grads is None:
        grads = torch.zeros_like(interp)
    norms = grads.flatten(1).norm(dim=1)
    return ((norms - 1.0) ** 2).mean()


def adversarial_losses(
    d, real: torch.Tensor, fake_batch: torch.Tensor, lambda_gp: float,
    alpha_generator=None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Wasserstein critic/generator losses with gradient penalty.

    real: (1, F, T); fake_batch: (B, F, T). Scores are patch averages per
    element; the critic loss detaches the fakes, the generator loss keeps
    their graph.
    """
    if real.shape[-1] != fake_batch.shape[-1]:
        raise ValueError("real and fake tensors must share the stage length")
    fake_scores_detached = _critic(d, fake_batch.detach())
    real_score = _critic(d, real).mean()
    gp = gradient_penalty(d, real, fake_batch, alpha_generator)
    d_loss = fake_scores_detached.mean() - real_score + lambda_gp * gp
    g_loss = -_critic(d, fake_batch).mean()
    if not (torch.isfinite(d_loss) and torch.isfinite(g_loss)):
        return d_loss, g_loss  # caller owns the abort policy
    return d_loss, g_loss


def reconstruction_outputs(
    model: PyramidModel, upto: int, prefix: torch.Tensor | None = None
) -> dict[int, torch.Tensor]:
    """z*-chain outputs for stages [0, upto]; `prefix` short-circuits the
    frozen leading stages (it must be the chain output at stage(prefix))."""
    codes = model.reconstruction_codes()
    outs: dict[int, torch.Tensor] = {}
    x = prefix
    start = 0 if prefix is None else _prefix_stage(model, prefix) + 1
    for i in range(start, upto + 1):
        x = model.generate_stage(i, x if i > 0 else None, codes[i])
        outs[i] = x
    return outs


def _prefix_stage(model: PyramidModel, prefix: torch.Tensor) -> int:
    for i, n in enumerate(model.pyramid.stage_lengths):
        if prefix.shape[-1] == n:
            return i
    raise ValueError("prefix length does not match any stage")


def reconstruction_loss(
    model: PyramidModel, targets: list[torch.Tensor], stage: int
) -> torch.Tensor:
    """Mean absolute error of the z* chain against the stage target."""
    out = reconstruction_outputs(model, stage)[stage]
    return (out - targets[stage]).abs().mean()


def _sixd_to_matrix_torch(v: torch.Tensor) -> torch.Tensor:
    a, b = v[..., :3], v[..., 3:]
    c0 = torch.nn.functional.normalize(a, dim=-1, eps=1e-8)
    b = b - (c0 * b).sum(-1, keepdim=True) * c0
    c1 = torch.nn.functional.normalize(b, dim=-1, eps=1e-8)
    c2 = torch.cross(c0, c1, dim=-1)
    return torch.stack([c0, c1, c2], dim=-1)


def feature_positions(
    feats: torch.Tensor, topology: SkeletonTopology
) -> torch.Tensor:
    """Differentiable forward kinematics over real-unit features (B, F, T)
    giving global joint positions (B, T, J, 3)."""
    b, _, t = feats.shape
    j = topology.joint_count
    sixd = feats[:, : 6 * j, :].permute(0, 2, 1).reshape(b, t, j, 6)
    rot = _sixd_to_matrix_torch(sixd)  # (B, T, J, 3, 3)

    root = topology.root_index
    fwd = rot[:, :, root, :, 2]
    theta = torch.atan2(fwd[..., 0], fwd[..., 2])  # (B, T)
    rb = feats[:, -3:, :]
    vx, vz, y = rb[:, 0], rb[:, 1], rb[:, 2]
    c, s = torch.cos(theta[:, :-1]), torch.sin(theta[:, :-1])
    wx = c * vx[:, 1:] + s * vz[:, 1:]
    wz = -s * vx[:, 1:] + c * vz[:, 1:]
    zero = torch.zeros(b, 1, dtype=feats.dtype)
    px = torch.cat([zero, torch.cumsum(wx, dim=1)], dim=1)
    pz = torch.cat([zero, torch.cumsum(wz, dim=1)], dim=1)
    root_pos = torch.stack([px, y, pz], dim=-1)

    offsets = torch.as_tensor(topology.offsets, dtype=feats.dtype)
    grot = [None] * j
    pos = [None] * j
    for idx in topology.traversal_order():
        parent = topology.parent_index[idx]
        if parent < 0:
            grot[idx] = rot[:, :, idx]
            pos[idx] = root_pos
        else:
            grot[idx] = grot[parent] @ rot[:, :, idx]
            pos[idx] = pos[parent] + (grot[parent] @ offsets[idx]).squeeze(-1)
    return torch.stack(pos, dim=2)


def contact_loss(
    fake: torch.Tensor,
    model: PyramidModel,
    sigmoid_a: float = 12.0,
    sigmoid_b: float = 0.5,
) -> torch.Tensor:
    """Penalize contact-joint velocity where the contact value says planted.

    fake is a normalized (B, F, T) batch; velocities come from differentiable
    forward kinematics on the denormalized features, the skewed sigmoid
    S(x) = sigmoid(a*(x-b)) gates them by the contact block.
    """
    topo = model.topology
    feats = fake * model.feat_std[None, :, None] + model.feat_mean[None, :, None]
    pos = feature_positions(feats, topo)  # (B, T, J, 3)
    cj = list(topo.contact_joints)
    p = pos[:, :, cj, :]
    v = p[:, 1:] - p[:, :-1]
    v = torch.cat([v, v[:, -1:]], dim=1)  # copy the last step to keep T rows
    speed_sq = (v**2).sum(-1)  # (B, T, C)
    j = topo.joint_count
    logits = feats[:, 6 * j : 6 * j + len(cj), :].permute(0, 2, 1)  # (B, T, C)
    gate = torch.sigmoid(sigmoid_a * (logits - sigmoid_b))
    per_elem = (speed_sq * gate).sum(dim=(1, 2)) / (p.shape[1] * len(cj))
    return per_elem.mean()


# --- transfer learning ------------------------------------------------------

def transfer_init(model: PyramidModel, stage_index: int) -> None:
    """Warm-start a stage: generator conv layers 1-2 copied from the previous
    level's corresponding stage, discriminator copied whole from the last
    trained stage. Layers 3-4 of the generator keep their fresh init."""
    level = model.pyramid.level_of_stage(stage_index)
    if level == 0:
        raise ValueError("stages of the first level have no donor")
    pos = stage_index - model.pyramid.stages_of_level(level)[0]
    donor_stages = model.pyramid.stages_of_level(level - 1)
    donor = donor_stages[min(pos, len(donor_stages) - 1)]
    if not model.trained[donor]:
        raise RuntimeError(f"donor stage {donor} is not trained")

    src_g = model.stages[donor].generator
    dst_g = model.stages[stage_index].generator
    with torch.no_grad():
        for layer in (0, 1):
            if src_g.convs[layer].weight.shape != dst_g.convs[layer].weight.shape:
                raise RuntimeError("stage capacities differ; cannot transfer")
            dst_g.convs[layer].weight.copy_(src_g.convs[layer].weight)
            dst_g.convs[layer].bias.copy_(src_g.convs[layer].bias)

        trained_below = [i for i in range(stage_index) if model.trained[i]]
        if trained_below:
            src_d = model.stages[trained_below[-1]].discriminator
            dst_d = model.stages[stage_index].discriminator
            for src_conv, dst_conv in zip(src_d.convs, dst_d.convs):
                dst_conv.weight.copy_(src_conv.weight)
                dst_conv.bias.copy_(src_conv.bias)


# --- the loop ----------------------------------------------------------------

@dataclass
class TraceRow:
    iteration: int
    stage: int
    d_loss: float
    g_adv: float
    l_rec: float
    l_con: float
    wall_ms: float


@dataclass
class TrainingTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["iteration,stage,d_loss,g_adv,l_rec,l_con,wall_ms"]
        for r in self.rows:
            lines.append(
                f"{r.iteration},{r.stage},{r.d_loss:.6g},{r.g_adv:.6g},"
                f"{r.l_rec:.6g},{r.l_con:.6g},{r.wall_ms:.3f}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class LevelReport:
    level: int
    iterations_budget: int
    iterations_used: int
    wall_s: float
    stopped_early: bool
    final_lrec: float


@dataclass
class TrainReport:
    levels: list[LevelReport]
    sigmas: list[float]
    total_wall_s: float
    trace: TrainingTrace
    config: dict
    metrics: dict | None = None

    @property
    def total_iterations(self) -> int:
        return sum(l.iterations_used for l in self.levels)

    @property
    def final_lrec(self) -> float:
        return self.levels[-1].final_lrec

    def to_json_dict(self) -> dict:
        return {
            "levels": [asdict(l) for l in self.levels],
            "sigmas": self.sigmas,
            "total_wall_s": self.total_wall_s,
            "total_iterations": self.total_iterations,
            "final_lrec": self.final_lrec,
            "config": self.config,
            "metrics": self.metrics,
        }


def normalized_targets(
    model: PyramidModel, input_motion: MotionTensor
) -> list[torch.Tensor]:
    targets = build_pyramid_targets(input_motion, model.pyramid)
    return [model.normalize(t) for t in targets]


def _normalized_motion_tensors(
    model: PyramidModel, targets: list[torch.Tensor]
) -> list[MotionTensor]:
    topo = model.topology
    return [
        MotionTensor(t[0].t().to(torch.float64).numpy(), topo) for t in targets
    ]


def train_stage(
    model: PyramidModel,
    stage_index: int,
    targets: list[torch.Tensor],
    cfg: TrainConfig,
    iterations: int | None = None,
    trace: TrainingTrace | None = None,
    iteration_offset: int = 0,
) -> tuple[int, float]:
    """Train the pyramid level containing `stage_index` (stages within a
    level train jointly). Returns (iterations used, final z* loss)."""
    pyramid = model.pyramid
    level = pyramid.level_of_stage(stage_index)
    live = pyramid.stages_of_level(level)
    first, last = live[0], live[-1]
    for i in range(first):
        if not model.trained[i]:
            raise RuntimeError(f"stage {i} below level {level} is not trained")

    if iterations is None:
        iterations = cfg.iterations_for_level(level)
    trace = trace if trace is not None else TrainingTrace()

    g_params = [p for i in live for p in model.stages[i].generator.parameters()]
    d_params = [p for i in live for p in model.stages[i].discriminator.parameters()]
    opt_g = torch.optim.Adam(g_params, lr=cfg.lr_g, betas=cfg.betas)
    opt_d = torch.optim.Adam(d_params, lr=cfg.lr_d, betas=cfg.betas)
    noise_gen = torch.Generator().manual_seed(derive_seed(cfg.seed, 21, level))
    alpha_gen = torch.Generator().manual_seed(derive_seed(cfg.seed, 22, level))

    f = model.topology.feature_dim
    b = cfg.batch_size
    lengths = pyramid.stage_lengths

    # the frozen part of the z* chain never changes during this level
    rec_prefix = None
    if first > 0:
        with torch.no_grad():
            rec_prefix = model.run_stages(
                None, model.reconstruction_codes(), 0, first
            )

    nonfinite_run = 0
    used = 0
    final_lrec = math.inf
    for it in range(iterations):
        t0 = time.perf_counter()
        weights = annealed_weights(
            level, cfg.annealing, progress=it / max(iterations - 1, 1)
        )

        codes = [
            torch.randn(b, f, lengths[i], generator=noise_gen)
            for i in range(last + 1)
        ]
        with torch.no_grad():
            x = model.run_stages(None, codes, 0, first) if first > 0 else None
        fakes = {}
        for i in live:
            x = model.generate_stage(i, x if i > 0 else None, codes[i])
            fakes[i] = x

        d_loss = torch.zeros(())
        for i in live:
            dl, _ = adversarial_losses(
                model.stages[i], targets[i], fakes[i], weights.lambda_gp, alpha_gen
            )
            d_loss = d_loss + dl
        d_loss_val = float(d_loss.detach())
        finite = math.isfinite(d_loss_val)
        if finite:
            if abs(d_loss_val) > 1e4:
                raise TrainingDiverged(
                    "critic loss magnitude exceeded 1e4",
                    {"level": level, "iteration": it, "d_loss": d_loss_val},
                )
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

        g_adv = torch.zeros(())
        for i in live:
            g_adv = g_adv - model.stages[i].critic_score(fakes[i]).mean()
        rec_outs = reconstruction_outputs(model, last, prefix=rec_prefix)
        l_rec = torch.stack(
            [(rec_outs[i] - targets[i]).abs().mean() for i in live]
        ).mean()
        l_con = contact_loss(
            fakes[last], model, cfg.contact_sigmoid_a, cfg.contact_sigmoid_b
        )
        g_loss = (
            weights.lambda_adv * g_adv
            + weights.lambda_rec * l_rec
            + weights.lambda_con * l_con
        )
        if finite and torch.isfinite(g_loss):
            nonfinite_run = 0
            opt_g.zero_grad()
            for p in d_params:  # critic only relays gradients in the G step
                p.requires_grad_(False)
            g_loss.backward()
            for p in d_params:
                p.requires_grad_(True)
            opt_g.step()
        else:
            nonfinite_run += 1
            if nonfinite_run >= 100:
                raise TrainingDiverged(
                    "non-finite losses for 100 consecutive iterations",
                    {"level": level, "iteration": it},
                )

        used = it + 1
        final_lrec = float(l_rec.detach())
        trace.rows.append(
            TraceRow(
                iteration=iteration_offset + it,
                stage=last,
                d_loss=d_loss_val,
                g_adv=float(g_adv.detach()),
                l_rec=final_lrec,
                l_con=float(l_con.detach()),
                wall_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
        if cfg.stop_lrec is not None and final_lrec <= cfg.stop_lrec:
            break

    return used, final_lrec


def train_all(
    input_motion: MotionTensor, cfg: TrainConfig, on_level=None
) -> tuple[PyramidModel, TrainReport]:
    """Build a model for the clip and train every level in order.

    Transfer initialization runs when entering each level past the first if
    enabled. The report carries per-level wall clock, the merged loss trace,
    noise amplitudes and (unless disabled) an auto-run metrics report.
    `on_level(model, level)` fires when a level is entered, before any
    transfer initialization.
    """
    pyramid = cfg.pyramid or PyramidConfig.for_length(input_motion.frames)
    if pyramid.stage_lengths[-1] != input_motion.frames:
        raise ValueError("pyramid final length must equal the clip length")
    if pyramid.num_levels != len(cfg.annealing.lambda_adv_per_level):
        raise ValueError("annealing schedule and pyramid disagree on level count")
    if len(cfg.level_iterations) != pyramid.num_levels:
        raise ValueError("level_iterations and pyramid disagree on level count")

    was_deterministic = torch.are_deterministic_algorithms_enabled()
    if cfg.deterministic:
        torch.use_deterministic_algorithms(True)
    try:
        model = build_model(input_motion, pyramid, cfg.network, seed=cfg.seed)
        targets = normalized_targets(model, input_motion)
        sigmas = compute_noise_amplitudes(_normalized_motion_tensors(model, targets))
        for i, s in enumerate(sigmas):
            model.stages[i].sigma.copy_(torch.tensor(float(s)))

        trace = TrainingTrace()
        level_reports: list[LevelReport] = []
        t_total = time.perf_counter()
        offset = 0
        for level in range(pyramid.num_levels):
            live = pyramid.stages_of_level(level)
            if on_level is not None:
                on_level(model, level)
            if cfg.transfer_learning and level > 0:
                for s in live:
                    transfer_init(model, s)
            budget = cfg.iterations_for_level(level)
            t0 = time.perf_counter()
            used, final_lrec = train_stage(
                model, live[0], targets, cfg,
                iterations=budget, trace=trace, iteration_offset=offset,
            )
            offset += used
            for s in live:
                model.trained[s] = True
                for p in model.stages[s].parameters():
                    p.requires_grad_(False)
            level_reports.append(
                LevelReport(
                    level=level,
                    iterations_budget=budget,
                    iterations_used=used,
                    wall_s=time.perf_counter() - t0,
                    stopped_early=used < budget,
                    final_lrec=final_lrec,
                )
            )

        metrics = None
        if cfg.eval_samples > 0:
            from . import evaluation

            samples = [
                model.generate_full(derive_seed(cfg.seed, 77, k))
                for k in range(cfg.eval_samples)
            ]
            metrics = evaluation.compute_metrics(
                input_motion, samples, evaluation.MetricsConfig()
            ).to_json_dict()

        report = TrainReport(
            levels=level_reports,
            sigmas=[float(s) for s in sigmas],
            total_wall_s=time.perf_counter() - t_total,
            trace=trace,
            config=cfg.to_json_dict(),
            metrics=metrics,
        )
        model.training_meta = {
            "seed": cfg.seed,
            "iterations": [l.iterations_used for l in level_reports],
            "schedule": {
                "lambda_adv": list(cfg.annealing.lambda_adv_per_level),
                "lambda_rec": list(cfg.annealing.lambda_rec_per_level),
            },
            "preset_config": cfg.to_json_dict(),
        }
        model.input_motion = input_motion
        return model, report
    finally:
        torch.use_deterministic_algorithms(was_deterministic)
