from enum import Enum

# Tie detection when comparing welfare values
CMP_TOLERANCE = 1e-9
# Allowed constraint violation of a solver output, scaled by the constraint norm
FEASIBILITY_TOLERANCE = 1e-7
# Agreement between the two weakest-type solvers
SOLVER_AGREEMENT_TOLERANCE = 1e-6
PIVOT_TOLERANCE = 1e-9
MAX_SIMPLEX_ITERATIONS = 10_000

DEFAULT_VALUE_HIGH = 100.0
DEFAULT_ALLOCATION_CAP = 4096
SE_MULTIPLIER = 3.0
# Two-sided checks between SE_MULTIPLIER and this many standard errors are inconclusive
INCONCLUSIVE_SE_MULTIPLIER = 4.0
MONTE_CARLO_BLOCK_SIZE = 1000

UNASSIGNED = -1

SWEEP_CSV_HEADER = [
    "param",
    "lambda",
    "expected_value",
    "expected_payment",
    "empirical_value",
    "empirical_payment",
    "se",
]


class EnvironmentKind(str, Enum):
    COMBINATORIAL_AUCTION = "combinatorial_auction"
    MATCHING = "matching"
    SHARED_OUTCOME = "shared_outcome"
    EXPLICIT = "explicit"


class Valuation(str, Enum):
    GENERAL = "general"  # one independent value per bundle
    ADDITIVE = "additive"
    UNIT_DEMAND = "unit_demand"


class Relation(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="


class PredictorKind(str, Enum):
    POLYTOPE = "polytope"
    ZERO = "zero"  # the whole non-negative orthant
    EXACT = "exact"  # a single point
    SCALED_OTHER = "scaled_other"
    ITEM_FLOOR = "item_floor"
    PARTITION = "partition"


class DensityKind(str, Enum):
    POINT = "point"
    UNIFORM_BOX = "uniform_box"


class PriorKind(str, Enum):
    DISCRETE = "discrete"
    SINGLE_ITEM_IID = "single_item_iid"


class Solver(str, Enum):
    LP = "lp"
    CONSTRAINT_GENERATION = "cg"


class MechanismName(str, Enum):
    VCG = "vcg"
    WEAKEST_TYPE_VCG = "weakest_type_vcg"
    ZETA_LAMBDA = "zeta_lambda"
    ZETA_ZERO = "zeta_zero"
    GENERALIZED = "generalized"
    SUBSPACE = "subspace"
    GROVES = "groves"
    AFFINE_MAXIMIZER = "affine_maximizer"
    TRUST = "trust"
    DISCARD = "discard"


class PredictionClass(str, Enum):
    EXACT = "exact"
    CONSERVATIVE = "conservative"
    AGGRESSIVE = "aggressive"
    UNINFORMATIVE = "uninformative"  # reaches the baseline level set, pays like vanilla VCG


class CheckKind(str, Enum):
    EQUAL = "equal"
    AT_LEAST = "at_least"


class Verdict(str, Enum):
    SATISFIED = "satisfied"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"


class Suite(str, Enum):
    THM2 = "thm2"
    THM5 = "thm5"
    THM6 = "thm6"
    THM7 = "thm7"
    THM9 = "thm9"
    MYERSON = "myerson"
    LP_ORACLE = "lp_oracle"
    LEMMA1 = "lemma1"
    BASELINES = "baselines"
    IC_IR = "ic_ir"


class ExitCode(int, Enum):
    OK = 0
    VERIFY_FAILED = 1
    INVALID_CONFIG = 2
    INFEASIBLE_PREDICTOR = 3
