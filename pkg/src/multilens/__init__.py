"""Point-mass gravitational lenses on several planes: image finding,
critical curves, caustics, Rhie ensembles and cosmological couplings."""
from .builder import ConstructionReport, build_preliminary, max_stable_epsilon, perturb_epsilon, scale_lens, scale_plane
from .caustics import CurveSet, Polyline, Window, critical_curves, curve_set, group_by_caustic, map_to_caustics
from .core import (
    LensedImage,
    LensPlane,
    MultiplaneLens,
    ObstructionError,
    PlanePoint,
    PointMass,
    RayPath,
    lens_map,
    lens_map_jacobian,
    system_jacobian,
    system_residual,
    trace,
)
from .cosmology import Cosmology, PlaneRedshifts, plane_parameters, realize_small_epsilon
from .rhie import ConstructionError, max_source_radius, rhie_plane, tune_central_mass
from .scene import Scene, load_scene, save_scene
from .solver import SolveOptions, SolveResult, cluster_images, find_images, image_count_bounds, solve

__version__ = "0.1.0"
