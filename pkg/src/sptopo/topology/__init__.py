"""Extended persistence of spot neighbourhoods and its image vectorisation."""
from .diagram import EXTENDED, ORDINARY, ExtendedPersistenceDiagram, read_diagram, write_diagram
from .features import EPIResult, TopoConfig, epi_for_all_spots
from .filtration import EXPRESSION, SPATIAL, local_filtration
from .image import PersistenceImage, image_pixels, persistence_image, read_image, write_image, write_image_stack
from .persistence import extended_persistence
from .reduction import brute_force_reduction

__all__ = [
    "ORDINARY",
    "EXTENDED",
    "SPATIAL",
    "EXPRESSION",
    "ExtendedPersistenceDiagram",
    "PersistenceImage",
    "TopoConfig",
    "EPIResult",
    "extended_persistence",
    "brute_force_reduction",
    "local_filtration",
    "persistence_image",
    "image_pixels",
    "epi_for_all_spots",
    "read_diagram",
    "write_diagram",
    "read_image",
    "write_image",
    "write_image_stack",
]
