from .heads import head_forward, head_init, head_param_spec, renorm_prototypes
from .losses import (
    combined_loss,
    dino_loss,
    ema_update,
    ibot_loss,
    koleo_loss,
    masked_distill_ce,
    sharpen_targets,
    teacher_entropy,
    update_center,
)
from .schedules import (
    CropPairSpec,
    layer_lr_scales,
    lr_schedule,
    stage2_config,
    teacher_temp_schedule,
)
from .trainer import DistillConfig, DistillTrainer, backbone_params, load_encoder

__all__ = [
    "CropPairSpec", "DistillConfig", "DistillTrainer", "backbone_params",
    "combined_loss", "dino_loss", "ema_update", "head_forward", "head_init",
    "head_param_spec", "ibot_loss", "koleo_loss", "layer_lr_scales",
    "load_encoder", "lr_schedule", "masked_distill_ce", "renorm_prototypes",
    "sharpen_targets", "stage2_config", "teacher_entropy",
    "teacher_temp_schedule", "update_center",
]
