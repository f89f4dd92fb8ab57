"""Multi-level coverage criteria for autoregressive generative models, with
test prioritization and coverage-guided mutation testing."""

__version__ = "0.1.0"

from .coverage import ALL_CRITERIA, CriteriaConfig, CriterionId  # noqa: F401
from .stats import Measure, SectionConfig, kappa, section_index  # noqa: F401
from .trace import GenerationTrace, Topology, decode_trace, encode_trace  # noqa: F401
