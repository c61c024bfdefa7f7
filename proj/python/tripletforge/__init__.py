"""Semantic audio embeddings from weakly constrained triplets."""

from _tripletforge import (  # noqa: F401
    ConfigError,
    IoError,
    Network,
    NumericError,
    apply_mixing,
    apply_noise,
    apply_translation,
    average_precision,
    cosine_distance,
    gap_recovery,
    mel_spectrogram,
    segment_embedding,
    semi_hard_mine,
    set_thread_count,
    stabilized_log,
    total_energy,
    triplet_loss,
    window_spectrogram,
)

__all__ = [
    "ConfigError",
    "IoError",
    "Network",
    "NumericError",
    "apply_mixing",
    "apply_noise",
    "apply_translation",
    "average_precision",
    "cosine_distance",
    "gap_recovery",
    "mel_spectrogram",
    "segment_embedding",
    "semi_hard_mine",
    "set_thread_count",
    "stabilized_log",
    "total_energy",
    "triplet_loss",
    "window_spectrogram",
]
