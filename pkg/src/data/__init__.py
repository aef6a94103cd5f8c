"""Experience stores, trajectory logs and checkpoints."""
