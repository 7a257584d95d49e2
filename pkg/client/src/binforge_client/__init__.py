"""Read-only client for published binforge datasets.

Opens the distributed SQLite file directly (this package depends only on the
documented file format, not on the producer), exposes function/line queries,
and generates positive/negative/triplet streams for similarity training.
"""

from binforge_client.reader import (  # noqa: F401
    BinaryRow,
    ClientError,
    DatasetReader,
    FunctionRow,
    LineRow,
    MissingDatasetError,
    SchemaVersionError,
)
from binforge_client.pairs import (  # noqa: F401
    InfeasiblePairRequestError,
    Pair,
    Triplet,
    make_pairs,
)

__version__ = "0.1.0"
