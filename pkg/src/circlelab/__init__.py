"""circlelab: extended-precision experiments on smooth circle diffeomorphisms.

Modules
-------
numerics    precision contexts and log-log fits
rotnum      continued fractions, gaps, Diophantine diagnostics
circlemap   map families, jets, orbits, rotation numbers, parameter tuning
crossratio  ratio and cross-ratio distortion, small-scale expansions
renorm      dynamical partitions, Denjoy scans, exact M/K identities
conjugacy   conjugacy samples, invariant density, Hoelder exponents
cli         experiment runner
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .numerics import DEFAULT_CONTEXT, PrecisionContext  # noqa: F401
from .rotnum import cf_expand, gap_sequence, golden_mean, silver_mean  # noqa: F401
from .circlemap import CircleMapSpec, iterate_orbit, rotation_number, tune_parameter  # noqa: F401
