"""Adversarial attacks used for training-time samples and evaluation."""

from .adversarial_set import (
    AdversarialSet,
    generate_adversarial_set,
    pair_key,
    perturbed_ids,
)
from .attacks import (
    ATTACKS,
    AttackConfig,
    adaptive_loss,
    apply_patch,
    attack_adaptive,
    attack_pgd,
    attack_sticker,
    calibrate_scale,
    fgsm_attack,
    fgsm_step_size,
    generate_adversarial_fgsm,
    noise_magnitude,
    pair_attack_loss,
    pgd_radius,
    rescale_to_ratio,
    run_attack,
    sticker_anchor,
)

__all__ = [
    "ATTACKS",
    "AdversarialSet",
    "AttackConfig",
    "adaptive_loss",
    "apply_patch",
    "attack_adaptive",
    "attack_pgd",
    "attack_sticker",
    "calibrate_scale",
    "fgsm_attack",
    "fgsm_step_size",
    "generate_adversarial_fgsm",
    "generate_adversarial_set",
    "noise_magnitude",
    "pair_attack_loss",
    "pair_key",
    "perturbed_ids",
    "pgd_radius",
    "rescale_to_ratio",
    "run_attack",
    "sticker_anchor",
]
