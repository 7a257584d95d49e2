"""binforge: compile crawled repositories under a compiler matrix and publish
function-level ground truth as a queryable relational dataset.

The pipeline: crawl repositories, rewrite their build files to pin one cell of
the compiler matrix, build them under a coordinator/worker farm, extract
function/address/line ground truth from debug information, and store
everything in a single-file SQLite dataset plus a content-addressed archive.
Datasets can be exported as license-gated recipes and reproduced.
"""

__version__ = "0.1.0"

from binforge.model import (  # noqa: F401
    Arch,
    BinaryRecord,
    BuildConfig,
    BuildMode,
    BuildOutcome,
    BuildStatus,
    BuildSystem,
    DebugArtifactRecord,
    DebugKind,
    ErrorCategory,
    FunctionRecord,
    LineRecord,
    MatrixRequest,
    OptLevel,
    Platform,
    RepoRecord,
    RvaRecord,
    Toolchain,
    config_matrix,
    validate_record,
)
