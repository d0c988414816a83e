"""Weight-space ensembling laboratory: python bindings over the C++ core."""

from ._wiseft import (
    Checkpoint,
    CheckpointMeta,
    Dataset,
    GenSpec,
    ShiftSpec,
    apply_shift,
    ckac,
    clopper_pearson,
    cohens_kappa_complement,
    effective_robustness,
    fit_baseline,
    gen_pretrain_mixture,
    gen_reference,
    interpolate,
    load_checkpoint,
    logit,
    mean_kl,
    param_distance,
    prediction_diversity,
    run_experiment,
    save_checkpoint,
    sigmoid,
    subsample_per_class,
)

__all__ = [
    "Checkpoint",
    "CheckpointMeta",
    "Dataset",
    "GenSpec",
    "ShiftSpec",
    "apply_shift",
    "ckac",
    "clopper_pearson",
    "cohens_kappa_complement",
    "effective_robustness",
    "fit_baseline",
    "gen_pretrain_mixture",
    "gen_reference",
    "interpolate",
    "load_checkpoint",
    "logit",
    "mean_kl",
    "param_distance",
    "prediction_diversity",
    "run_experiment",
    "save_checkpoint",
    "sigmoid",
    "subsample_per_class",
]
