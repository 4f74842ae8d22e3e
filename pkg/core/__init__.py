"""Core learning components: the classifier, synthetic data and seed streams."""
from .network import (
    Dataset,
    ModelError,
    ModelParams,
    apply_update,
    evaluate_accuracy,
    init_params,
    inner,
    local_gradient,
)
from .datasets import (
    DataError,
    Partition,
    SplitRegime,
    SplitSpec,
    generate_dataset,
    load_columnar,
    partition,
    save_columnar,
)
from .seeding import SeedStreams

__all__ = [
    'Dataset', 'ModelError', 'ModelParams', 'apply_update', 'evaluate_accuracy', 'init_params',
    'inner', 'local_gradient', 'DataError', 'Partition', 'SplitRegime', 'SplitSpec', 'generate_dataset',
    'load_columnar', 'partition', 'save_columnar', 'SeedStreams',
]
