"""Teacher-student self-distillation trainer.

One trainer owns its state exclusively: student and teacher parameter trees
(the teacher is an EMA shadow and never receives gradients), per-head
teacher-logit centers, and the step counter. Per step the teacher sees only
the two global views; the student sees masked globals plus all locals.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels as K
from .. import tensorcore as tc
from ..augment import GLOBAL, AugmentConfig, multicrop, replicate_channels
from ..errors import ConfigError
from ..tensorcore import checkpoint
from ..vit import ViTConfig, forward, init_params
from . import heads, losses
from .schedules import CropPairSpec, layer_lr_scales, lr_schedule, teacher_temp_schedule

HEAD_PREFIXES = ("dino_head.", "ibot_head.")


@dataclass
class DistillConfig:
    vit: ViTConfig = field(default_factory=ViTConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    n_prototypes: int = 1024
    head_hidden: int = 256
    head_bottleneck: int = 64
    batch_size: int = 32
    total_steps: int = 2000
    warmup_steps: int = 100
    peak_lr: float = 1e-4
    final_lr: float = 1e-6
    weight_decay: float = 0.04
    betas: tuple = (0.9, 0.999)
    clip_norm: float = 3.0
    layer_decay: float = 0.9
    ema_momentum: float = 0.994
    center_momentum: float = 0.9
    teacher_temp_start: float = 0.04
    teacher_temp_end: float = 0.07
    teacher_temp_warmup_frac: float = 0.2
    student_temp: float = 0.1
    koleo_weight: float = 0.1
    lambda_ibot: float = 1.0
    seed: int = 0
    stage: int = 1
    stage2: CropPairSpec | None = None

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        if self.stage == 2 and self.stage2 is None:
            self.stage2 = CropPairSpec()
        if not 0.0 < self.ema_momentum < 1.0:
            raise ConfigError("ema_momentum must lie in (0, 1)")

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items()
             if k not in ("vit", "augment", "stage2", "betas")}
        d["vit"] = self.vit.to_dict()
        d["augment"] = self.augment.to_dict()
        d["betas"] = list(self.betas)
        d["stage2"] = self.stage2.to_dict() if self.stage2 else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["vit"] = ViTConfig(**d["vit"])
        d["augment"] = AugmentConfig.from_dict(d["augment"])
        d["betas"] = tuple(d.get("betas", (0.9, 0.999)))
        if d.get("stage2"):
            d["stage2"] = CropPairSpec.from_dict(d["stage2"])
        return cls(**d)

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def backbone_params(params):
    """Drop head and mask-token entries, leaving the encoder tree."""
    return {k: v for k, v in params.items()
            if not k.startswith(HEAD_PREFIXES) and k != "mask_token"}


def _wd_exempt(name):
    return (name.endswith("bias") or ".gamma" in name or ".beta" in name
            or name.endswith(("cls_token", "storage_tokens", "mask_token")))


class DistillTrainer:
    def __init__(self, cfg):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        d = cfg.vit.embed_dim
        student = init_params(cfg.vit, rng)
        student["mask_token"] = tc.Tensor(
            np.zeros((1, 1, d), np.float32), requires_grad=True)
        for prefix in HEAD_PREFIXES:
            student.update(heads.head_init(prefix, d, cfg.head_hidden,
                                           cfg.head_bottleneck, cfg.n_prototypes, rng))
        self.student = student
        self.teacher = {k: tc.Tensor(v.data.copy()) for k, v in student.items()}
        self.dino_center = np.zeros(cfg.n_prototypes, np.float64)
        self.ibot_center = np.zeros(cfg.n_prototypes, np.float64)
        self.step = 0
        self.opt = tc.AdamW(
            student, betas=cfg.betas, weight_decay=cfg.weight_decay, decoupled=True,
            lr_scales=layer_lr_scales(student.keys(), cfg.vit.depth, cfg.layer_decay),
            wd_exempt=_wd_exempt)

    # ------------------------------------------------------------- one step
    def train_step(self, viewsets):
        cfg = self.cfg
        b = len(viewsets)
        n_g = len(viewsets[0].globals_)
        n_l = len(viewsets[0].locals_)
        for vs in viewsets:
            if any(vs.provenance[v].kind != GLOBAL for v in range(n_g)):
                raise ConfigError("teacher contract: non-global view offered as global")

        g_imgs = np.stack([vs.globals_[v] for v in range(n_g) for vs in viewsets])
        l_imgs = np.stack([vs.locals_[v] for v in range(n_l) for vs in viewsets])
        mask_rows = np.stack([vs.masks[v].mask for v in range(n_g) for vs in viewsets])
        g3 = replicate_channels(g_imgs)
        l3 = replicate_channels(l_imgs)

        lr = lr_schedule(self.step, cfg.total_steps, cfg.warmup_steps,
                         cfg.peak_lr, cfg.final_lr)
        t_temp = teacher_temp_schedule(self.step, cfg.total_steps,
                                       cfg.teacher_temp_start, cfg.teacher_temp_end,
                                       cfg.teacher_temp_warmup_frac)

        # teacher: clean global views only, no tape
        with tc.no_grad():
            t_out = forward(self.teacher, g3, cfg.vit)
            t_dino_logits = heads.head_forward(self.teacher, "dino_head.", t_out.cls).data
        q_dino = losses.sharpen_targets(t_dino_logits, self.dino_center, t_temp)

        # student: masked globals + all locals
        s_g = forward(self.student, g3, cfg.vit, mask=mask_rows,
                      mask_token=self.student["mask_token"])
        s_l = forward(self.student, l3, cfg.vit)
        cls_all = tc.concat([s_g.cls, s_l.cls], axis=0)
        s_logits = heads.head_forward(self.student, "dino_head.", cls_all)
        logp = tc.log_softmax(tc.mul(s_logits, 1.0 / cfg.student_temp), axis=-1)

        # all (teacher-global, student-view) pairs minus same-view globals
        n_views = n_g + n_l
        row_chunks, q_chunks = [], []
        for tv in range(n_g):
            for sv in range(n_views):
                if sv == tv:
                    continue
                row_chunks.append(np.arange(sv * b, (sv + 1) * b))
                q_chunks.append(q_dino[tv * b:(tv + 1) * b])
        sel = tc.take(logp, np.concatenate(row_chunks))
        l_dino = losses.cross_entropy_rows(np.concatenate(q_chunks), sel)

        # masked patch prediction on the global views
        flat_rows = np.flatnonzero(mask_rows.reshape(-1))
        ibot_teacher_logits = None
        if flat_rows.size:
            d = cfg.vit.embed_dim
            with tc.no_grad():
                t_patch_sel = tc.take(tc.reshape(t_out.patches, (-1, d)), flat_rows)
                ibot_teacher_logits = heads.head_forward(
                    self.teacher, "ibot_head.", t_patch_sel).data
            q_ibot = losses.sharpen_targets(ibot_teacher_logits, self.ibot_center, t_temp)
            s_patch_sel = tc.take(tc.reshape(s_g.patches, (-1, d)), flat_rows)
            s_ibot_logits = heads.head_forward(self.student, "ibot_head.", s_patch_sel)
            l_ibot = losses.masked_distill_ce(q_ibot, s_ibot_logits, cfg.student_temp)
        else:
            l_ibot = tc.tensor(np.zeros((), np.float32))

        l_koleo = losses.koleo_loss(s_g.cls)
        total, parts = losses.combined_loss(l_dino, l_ibot, l_koleo,
                                            cfg.lambda_ibot, cfg.koleo_weight)

        tc.backward(total)
        names = [n for n, p in self.student.items() if p.grad is not None]
        clipped, grad_norm = tc.clip_by_global_norm(
            [self.student[n].grad for n in names], cfg.clip_norm)
        for n, g in zip(names, clipped):
            self.student[n].grad = g
        self.opt.step(lr)
        self.opt.zero_grad()
        for prefix in HEAD_PREFIXES:
            heads.renorm_prototypes(self.student, prefix)
        losses.ema_update(self.teacher, self.student, cfg.ema_momentum)
        for prefix in HEAD_PREFIXES:
            heads.renorm_prototypes(self.teacher, prefix)
        self.dino_center = losses.update_center(self.dino_center, t_dino_logits,
                                                cfg.center_momentum)
        if ibot_teacher_logits is not None:
            self.ibot_center = losses.update_center(self.ibot_center, ibot_teacher_logits,
                                                    cfg.center_momentum)
        self.step += 1
        metrics = {
            "step": self.step,
            "loss_total": float(total.item()),
            "lr": lr,
            "teacher_temp": t_temp,
            "teacher_entropy": losses.teacher_entropy(q_dino),
            "grad_norm": grad_norm,
            "masked_tokens": int(flat_rows.size),
        }
        metrics.update(parts)
        return metrics

    # ------------------------------------------------------------ data loop
    def _augment_config(self, data_rng):
        cfg = self.cfg
        if cfg.stage == 1:
            return cfg.augment, 1
        g, l = cfg.stage2.sample(data_rng)
        aug = AugmentConfig(**{**cfg.augment.__dict__,
                               "global_size": g, "local_size": l})
        return aug, cfg.stage2.upsample

    def run(self, slices, steps=None, on_metrics=None):
        """Sample batches from a slice list and train; yields metric dicts."""
        cfg = self.cfg
        steps = cfg.total_steps if steps is None else steps
        data_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2**16 + 1]))
        history = []
        while self.step < steps:
            idx = data_rng.integers(0, len(slices), size=cfg.batch_size)
            aug, upsample = self._augment_config(data_rng)
            viewsets = []
            for j, i in enumerate(idx):
                sl = slices[i]
                if upsample != 1:
                    sl = K.resize_bilinear(
                        np.ascontiguousarray(sl, np.float32),
                        (sl.shape[0] * upsample, sl.shape[1] * upsample))
                seed = np.random.SeedSequence([cfg.seed, self.step, j])
                viewsets.append(multicrop(sl, seed, aug))
            m = self.train_step(viewsets)
            history.append(m)
            if on_metrics:
                on_metrics(m)
        return history

    # ---------------------------------------------------------- persistence
    def save(self, path, extra_meta=None):
        params = {f"student.{k}": v for k, v in self.student.items()}
        params.update({f"teacher.{k}": v for k, v in self.teacher.items()})
        params["dino_center"] = tc.Tensor(self.dino_center)
        params["ibot_center"] = tc.Tensor(self.ibot_center)
        meta = {"step": self.step, "config": self.cfg.to_dict()}
        meta.update(extra_meta or {})
        checkpoint.save(path, params, meta=meta)

    @classmethod
    def load(cls, path):
        arrays, meta = checkpoint.load(path)
        cfg = DistillConfig.from_dict(meta["config"])
        tr = cls(cfg)
        for k, v in arrays.items():
            if k.startswith("student."):
                tr.student[k[8:]].data[...] = v
            elif k.startswith("teacher."):
                tr.teacher[k[8:]].data[...] = v
        tr.dino_center = arrays["dino_center"].astype(np.float64)
        tr.ibot_center = arrays["ibot_center"].astype(np.float64)
        tr.step = int(meta["step"])
        return tr


def load_encoder(path, role="teacher"):
    """Frozen backbone (params, ViTConfig) from a trainer checkpoint."""
    arrays, meta = checkpoint.load(path)
    cfg = DistillConfig.from_dict(meta["config"])
    prefix = role + "."
    params = {k[len(prefix):]: tc.Tensor(v) for k, v in arrays.items()
              if k.startswith(prefix)}
    return backbone_params(params), cfg.vit
