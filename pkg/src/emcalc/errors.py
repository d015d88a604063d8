"""Exception hierarchy.

Every error carries a ``module`` and a short ``code`` so the CLI can surface
them uniformly.
"""


class EmcalcError(Exception):
    module = "emcalc"
    code = "Error"


# kernel_core
class KernelError(EmcalcError, ValueError):
    module = "kernel_core"


class NonSquare(KernelError):
    code = "NonSquare"


class NegativeEntry(KernelError):
    code = "NegativeEntry"


class RowSumOutOfTolerance(KernelError):
    code = "RowSumOutOfTolerance"


class DimensionMismatch(EmcalcError, ValueError):
    code = "DimensionMismatch"


class NotIrreducible(KernelError):
    code = "NotIrreducible"


class NotConverged(KernelError, RuntimeError):
    code = "NotConverged"


# lens_packaging
class LensError(EmcalcError, ValueError):
    module = "lens_packaging"


class TauZero(LensError):
    code = "TauZero"


class NotARefinement(LensError):
    code = "NotARefinement"


# path_audit
class PathError(EmcalcError, ValueError):
    module = "path_audit"


class ExplosionCap(PathError):
    code = "ExplosionCap"


class ShapeMismatch(EmcalcError, ValueError):
    code = "ShapeMismatch"


# cycle_forms
class GraphError(EmcalcError, ValueError):
    module = "cycle_forms"


class RevViolation(GraphError):
    code = "RevViolation"


class EdgeMissing(GraphError):
    code = "EdgeMissing"


class RowStarved(GraphError):
    code = "RowStarved"


class NotReversible(GraphError):
    code = "NotReversible"


# forcing_count
class BudgetExceeded(EmcalcError, ValueError):
    module = "forcing_count"
    code = "BudgetExceeded"


# capacity_zeno
class BadWindow(EmcalcError, ValueError):
    module = "capacity_zeno"
    code = "BadWindow"


# cli_reports
class InputError(EmcalcError, ValueError):
    module = "cli_reports"


class ParseError(InputError):
    code = "ParseError"


class SchemaError(InputError):
    code = "SchemaError"
