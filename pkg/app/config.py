# Shared numeric defaults and run-level constants.

VERSION = "1.0.0"
APP_NAME = "GaudinLens"

# Coordinates closer than this (absolute, on the eta / x scale) collide.
COLLISION_TOL = 1e-10

# Newton gives up on a Jacobian whose condition estimate exceeds this.
JACOBIAN_COND_LIMIT = 1e14
# Above this the Euler predictor falls back to a constant prediction.
PREDICTOR_COND_LIMIT = 1e12

# Repeated TDA roots are split by this much before continuation.
LIFT_MAGNITUDE = 1e-4

# Continuation defaults.
NEWTON_TOL = 1e-10
MAX_NEWTON_ITERS = 30
INITIAL_STEP = 1e-2
MIN_STEP = 1e-8
MAX_STEP = 0.1
STEP_SHRINK = 0.5
STEP_GROW = 1.3
# Newton iteration counts at or below this let the step grow.
EASY_STEP_ITERS = 3

# Degeneracy of the single deformed copy in the Dicke construction.
DEFAULT_OMEGA0 = 2

# Oracle defaults: boson cutoff = N + BOSON_PAD.
BOSON_PAD = 12
MAX_ORACLE_DIM = 5000
HERMITIAN_TOL = 1e-12

# Verification thresholds written into every result file.
ORACLE_TOL = 1e-8
ENERGY_MATCH_TOL = 1e-6

# Structured output: 17 significant digits round-trips any double.
FLOAT_FORMAT = "%.17g"

LOG_ENV_VAR = "GAUDIN_LOG"
DEFAULT_LOG_LEVEL = "WARNING"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONVERGENCE = 2
EXIT_VERIFICATION = 3
