"""
gelwrinkle: Q1RT0 finite elements for transient hydrogel swelling and
detection of swelling-induced wrinkling in film/substrate bilayers.
"""

__version__ = "0.1.0"

from .constitutive import MaterialParams, initial_state  # noqa: E402
from .mesh import build_annulus_bilayer, build_ellipse_annulus, build_rectangle_bilayer  # noqa: E402

__all__ = [
    "__version__",
    "MaterialParams",
    "initial_state",
    "build_rectangle_bilayer",
    "build_annulus_bilayer",
    "build_ellipse_annulus",
]
