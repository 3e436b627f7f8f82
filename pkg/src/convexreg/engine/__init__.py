"""Multiscale pipelines: oscillation cascade, boundary derivative, Log-Lipschitz induction."""
