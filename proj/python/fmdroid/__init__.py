from ._core import (
    Dataset,
    FmdroidError,
    FmModel,
    LinearModel,
    SparseVector,
    TrainConfig,
    Vocabulary,
    __version__,
    auc,
    default_corpus_spec,
    evaluate_families,
    extract_bundle,
    generate_corpus,
    metrics,
    split_train_test,
    stratified_kfold,
    train,
    train_logistic,
)

__all__ = [
    "Dataset",
    "FmdroidError",
    "FmModel",
    "LinearModel",
    "SparseVector",
    "TrainConfig",
    "Vocabulary",
    "__version__",
    "auc",
    "default_corpus_spec",
    "evaluate_families",
    "extract_bundle",
    "generate_corpus",
    "metrics",
    "split_train_test",
    "stratified_kfold",
    "train",
    "train_logistic",
]
