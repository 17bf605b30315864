"""Mean curvature flow with density of spherical curves in warped products."""

__version__ = "0.1.0"
