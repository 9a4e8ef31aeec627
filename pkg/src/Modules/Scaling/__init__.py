"""Parameter sweeps and scaling-function checks."""
