from .distances import MetricError, ReconReport, mel_distance, mel_distance_per_scale, recon_report, stft_distance
from .frechet import GaussianStats, frechet_distance, gaussian_stats, semantic_fad
from .probe import ProbeResult, linear_probe
from .stoi import stoi
from .ablation import AblationData, AblationRow, ablation_dataset, ablation_report
