"""Actor-critic agents and their training loops."""
