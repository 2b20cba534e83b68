"""Trace-driven simulator of coded multi-bank memory built from single-port banks."""

from codedmem.codes import (
    Address,
    CodeLayout,
    ParityBankSpec,
    ParitySegment,
    ReadPlan,
    Scheme,
    build_replication,
    build_scheme_i,
    build_scheme_ii,
    build_scheme_iii,
    build_uncoded,
    degraded_read_plans,
    rate,
    xor_rows,
)
from codedmem.errors import (
    ConfigError,
    InvariantViolation,
    ShapeError,
    TraceError,
)
from codedmem.status import CodeStatusTable, Status

__version__ = "0.1.0"
