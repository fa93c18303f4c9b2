"""Model-based clustering of stepwise photobleaching profiles.

Profiles are classified into four clusters (no jump, one jump, two jumps,
one double jump) sharing a common jump height, fitted by ECM.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    MixtureParams,
    ModelError,
    Profile,
    ProfileParams,
    Segmentation,
    complete_loglik,
    log_density,
    mean_vector,
    observed_loglik,
)
from .ecm import FitConfig, FitError, FitResult, fit  # noqa: E402
from .fisher import InfoBlocks, expected_information, standard_errors  # noqa: E402
from .simulate import GroundTruth, SimDesign, generate, run_study  # noqa: E402
from .theory import MisclassScenario, misclass_probability, q_contrast  # noqa: E402
