"""Networks, windowed execution and targets, oracle and metrics."""
