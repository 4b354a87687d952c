from .losses import (
    LOSS_NAMES,
    LossConfigError,
    loss_fe,
    loss_minimum,
    loss_ol,
    loss_sg,
    loss_sisdr,
    loss_stoi,
    make_loss,
    register_stoi_plugin,
)
from .model import MaskNet, MaskNetConfig, enhance, enhance_tensor, forward_mask, parameter_checksum
from .training import (
    Checkpoint,
    TrainingConfig,
    TrainingDiverged,
    model_from_checkpoint,
    select_checkpoint,
    train,
)
