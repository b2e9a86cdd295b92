"""Domain-reweighted pretraining laboratory."""

try:
    from dogelab._dogelab import (  # noqa: F401
        ConfigError,
        ContractError,
        DataError,
        ShapeError,
        cosine_lr,
        detokenize,
        run_config_file,
        tokenize,
        update_domain_weights,
        weights_from_json,
        weights_to_json,
    )
except ImportError:  # extension built outside the package (in-tree builds)
    from _dogelab import (  # noqa: F401
        ConfigError,
        ContractError,
        DataError,
        ShapeError,
        cosine_lr,
        detokenize,
        run_config_file,
        tokenize,
        update_domain_weights,
        weights_from_json,
        weights_to_json,
    )

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "ShapeError",
    "cosine_lr",
    "detokenize",
    "run_config_file",
    "tokenize",
    "update_domain_weights",
    "weights_from_json",
    "weights_to_json",
]
