"""Project pipelines."""

from kedro.pipeline import Pipeline

from immune_face_defense.pipelines import (
    ablation_study,
    analyze,
    attack,
    data_preparation,
    data_synthesis,
    evaluate,
    fit_basis,
    train_defense,
    train_embedder,
)


def register_pipelines() -> dict[str, Pipeline]:
    """Register the project's pipelines.

    Every pipeline reading faces starts from the shared split and pair protocol;
    both are deterministic, so re-deriving them per command is safe.

    Returns:
        A mapping from pipeline names to ``Pipeline`` objects.
    """
    preparation = data_preparation.create_pipeline()
    experiment = (
        preparation
        + fit_basis.create_pipeline()
        + train_embedder.create_pipeline()
        + train_defense.create_pipeline()
        + attack.create_pipeline()
        + evaluate.create_pipeline()
        + analyze.create_pipeline()
    )
    return {
        "__default__": experiment,
        "synthesize_corpus": data_synthesis.create_pipeline(),
        "fit_basis": preparation + fit_basis.create_pipeline(),
        "train_embedder": preparation + train_embedder.create_pipeline(),
        "train_defense": preparation + train_defense.create_pipeline(),
        "attack": preparation + attack.create_pipeline(),
        "evaluate": preparation + evaluate.create_pipeline(),
        "analyze": analyze.create_pipeline(),
        "ablation_study": preparation + ablation_study.create_pipeline(),
    }
