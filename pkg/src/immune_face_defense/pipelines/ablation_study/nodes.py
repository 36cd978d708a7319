import logging

import pandas as pd

from immune_face_defense.evaluation.acceptance import ablation_direction

logger = logging.getLogger(__name__)

DIRECTIONAL = ("no_ssat", "no_memory")


def summarise_ablations(full_reports: dict, **variant_reports: dict) -> tuple[dict, str]:
    """EER table over the full run and every variant, plus directional checks.

    Only the runs in ``DIRECTIONAL`` must be strictly worse under attack; the
    ``k`` sensitivity runs and the model swap are reported as they come.

    Args:
        full_reports: Reports of the full run
        **variant_reports: Reports of every variant keyed by its namespace

    Returns:
        tuple of (summary JSON, rendered table)
    """
    rows, checks = [], {}
    for name, reports in {"full": full_reports, **variant_reports}.items():
        defended = reports["fgsm_defended"]
        rows.append(
            {
                "RUN": name,
                "CLEAN EER (%)": round(100 * reports["clean_defended"]["eer"], 2),
                "FGSM EER (%)": round(100 * defended["eer"], 2),
                "PGD EER (%)": round(100 * reports["pgd_defended"]["eer"], 2),
                "ADAPTIVE EER (%)": round(100 * reports["adaptive_defended"]["eer"], 2),
                "|a|": None
                if defended["mean_cardinality"] is None
                else round(defended["mean_cardinality"], 1),
            }
        )
        if name in DIRECTIONAL:
            checks[name] = ablation_direction(full_reports, reports)
            if checks[name]["passed"] is False:
                logger.warning("Ablation '%s' is not worse than the full defense under attack", name)
    table = pd.DataFrame(rows).to_string(index=False, na_rep="-")
    logger.info("Ablation results:\n%s", table)
    return {"checks": checks, "runs": rows}, table
