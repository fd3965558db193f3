"""Training, inference and ablation pipeline."""
