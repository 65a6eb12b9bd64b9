from .enhance import Denoiser, NoisySpec, enhance, latent_mse, mix_at_snr, reconstruct, se_pairs, se_training_pairs, train_denoiser, unified_latents
from .flow import (
    FlowError,
    FlowModel,
    block_means,
    flow_matching_loss,
    flow_path,
    guided_velocity,
    rescale_width_depth,
    sample_flow,
    sample_latent,
    train_flow,
)
