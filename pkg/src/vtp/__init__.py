"""vtp: learned latent world model + tree-search planner for desk-scale tasks."""

__version__ = "0.1.0"
