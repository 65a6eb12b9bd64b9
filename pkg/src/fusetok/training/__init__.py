from .discriminator import MultiFrequencyDiscriminator, SpectrogramDiscriminator
from .losses import LossError, adv_gen_loss, disc_loss, feature_matching_loss, mel_loss, semantic_loss
from .trainer import (
    CropSampler,
    GeneratorLossBreakdown,
    MetricsLog,
    NumericError,
    TrainState,
    crop_length,
    generator_loss,
    load_train_checkpoint,
    lr_schedule,
    new_state,
    save_train_checkpoint,
    train,
    train_step,
)
