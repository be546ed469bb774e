"""Scene-consistent depth placement of multiple people from height priors and relative depth."""

from .camera import CameraIntrinsics, ImageSize, fov_to_focal, focal_to_fov, project, unproject
from .depthfit import (DepthRaster, DepthSamplePair, IntraHumanFit, ScaleBounds, aggregate_scale,
                       bounds_for_persons, fit_intra_human, sample_representative_depth, select_bounds)
from .priors import AgeGroup, Gender, HeightPrior, adult_prior, fit_single_gaussian, minor_prior
from .solver import (AffineDepthTransform, DtoSolution, KktCase, PersonObservation, apply_solution,
                     filter_scene, run_dto, solve)

__version__ = "0.1.0"
