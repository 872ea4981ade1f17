"""Amenability and Property A certificates for free groups and lattices.

Builds tube-supported Reiter kernels, converts them between their l1, l2
and positive-type forms, checks the resulting Gram matrices, and assembles
the uniform embedding into l2 together with its distortion profile.
"""

__version__ = "0.1.0"

from .boundary import BoundaryPoint, boundary_act, boundary_point, cylinder_sample, parse_boundary
from .certificates import (
    BoundaryMeanFamily,
    DeficiencyReport,
    aicm_deficiency,
    boundary_aicm,
    deficiency_l1,
    deficiency_l2,
    folner_certificate,
    free_ray_certificate,
)
from .embedding import (
    CertificateSequence,
    DistortionProfile,
    EmbeddingVector,
    build_embedding,
    distortion_profile,
    embedding_distance,
    support_radius,
)
from .errors import (
    BoundViolationError,
    CoarseCertError,
    DecayContractError,
    DomainError,
    NotPositiveTypeError,
    ResourceError,
    UnderCoverageError,
)
from .groups import Ball, FreeGroup, LatticeGroup, Tube, ball_enumerate, parse_group, tube_contains
from .kernels import CoefficientKernel, TubeKernel
from .measures import ProbMeasure, translate, tv_distance
from .psd import PsdReport, psd_check_action, psd_check_group
from .transforms import (
    BumpFunction,
    coefficient_factorize,
    density_normalize,
    density_to_l2,
    l2_to_coefficient,
    l2_to_density,
    mean_to_density,
)
