"""sphere_gap - image-charge potentials and blow-up rates between two close spherical conductors."""

__version__ = "0.1.0"
