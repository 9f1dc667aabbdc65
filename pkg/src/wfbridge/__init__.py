"""Wright-Fisher diffusion bridges, coalescent lineage counts and exact samplers."""

__version__ = "0.1.0"
