"""JSON schema for run-config documents accepted by ``train`` and ``transfer``.

The same fields exist as command-line flags; a config file simply bundles
them.  Every run writes its resolved configuration beside its outputs as
``resolved_config.json``.
"""

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "required": ["task"],
    "additionalProperties": False,
    "properties": {
        "task": {"enum": ["decryptor", "katan", "simon", "classifier"]},
        "corpus": {"enum": ["mnist", "fashion"]},
        "data_dir": {"type": "string"},
        "pattern": {
            "type": "object",
            "required": ["pattern"],
            "properties": {
                "pattern": {"enum": ["logistic", "lorenz", "gcbpm", "cml"]},
            },
        },
        "rounds": {"type": "integer", "minimum": 1},
        "train_count": {"type": "integer", "minimum": 1},
        "val_count": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "out_dir": {"type": "string"},
        "checkpoint": {"type": "string"},
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 0},
                "optimizer": {"enum": ["adam", "sgd"]},
                "init": {"enum": ["xavier_uniform", "xavier_normalized"]},
                "loss": {"enum": ["mse", "sparse_cce"]},
                "lr_decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "shuffle": {"type": "boolean"},
            },
        },
    },
}
