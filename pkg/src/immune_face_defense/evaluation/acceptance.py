"""Directional checks over the reports of a full experiment.

These are properties of long training runs, so they are reported rather than
asserted: every check carries the numbers it compared and ``passed`` is None
when one of its inputs was not produced.
"""

import logging
from collections.abc import Mapping

logger = logging.getLogger(__name__)

CLEAN_EER_TARGET = 0.05
MIN_ATTACK_GAP = 0.15
MIN_GAP_RECOVERY = 0.5
MAX_CLEAN_PENALTY = 0.03


def _eer(reports: Mapping[str, Mapping], name: str) -> float | None:
    report = reports.get(name)
    return None if report is None else float(report["eer"])


def _check(passed, **values) -> dict:
    if any(value is None for value in values.values()):
        passed = None
    return {"passed": passed if passed is None else bool(passed), **values}


def defense_recovery(reports: Mapping[str, Mapping]) -> dict:
    """Clean EER target, FGSM gap, recovered share of the gap and clean penalty."""
    clean = _eer(reports, "clean_undefended")
    clean_defended = _eer(reports, "clean_defended")
    attacked = _eer(reports, "fgsm_undefended")
    attacked_defended = _eer(reports, "fgsm_defended")
    if None in (clean, clean_defended, attacked, attacked_defended):
        return _check(None, clean=clean, clean_defended=clean_defended, attacked=attacked)
    gap = attacked - clean
    checks = {
        "clean_eer": clean <= CLEAN_EER_TARGET,
        "attack_gap": gap >= MIN_ATTACK_GAP,
        "gap_recovery": attacked_defended <= attacked - MIN_GAP_RECOVERY * gap,
        "clean_penalty": clean_defended - clean <= MAX_CLEAN_PENALTY,
    }
    return {
        "passed": all(checks.values()),
        "checks": checks,
        "clean": clean,
        "clean_defended": clean_defended,
        "attacked": attacked,
        "attacked_defended": attacked_defended,
        "gap": gap,
    }


def ablation_direction(
    full: Mapping[str, Mapping], ablated: Mapping[str, Mapping] | None, report: str = "fgsm_defended"
) -> dict:
    """The ablated defense must be strictly worse under attack than the full one."""
    full_eer = _eer(full, report)
    ablated_eer = None if ablated is None else _eer(ablated, report)
    passed = None if None in (full_eer, ablated_eer) else ablated_eer > full_eer
    return _check(passed, full=full_eer, ablated=ablated_eer)


def adaptive_direction(reports: Mapping[str, Mapping]) -> dict:
    """Adaptive PGD beats plain PGD on the defense and loses to it without one."""
    values = {
        "pgd_defended": _eer(reports, "pgd_defended"),
        "adaptive_defended": _eer(reports, "adaptive_defended"),
        "pgd_undefended": _eer(reports, "pgd_undefended"),
        "adaptive_undefended": _eer(reports, "adaptive_undefended"),
    }
    if None in values.values():
        return _check(None, **values)
    passed = (
        values["adaptive_defended"] > values["pgd_defended"]
        and values["adaptive_undefended"] < values["pgd_undefended"]
    )
    return _check(passed, **values)


def sticker_direction(sticker: Mapping[str, float] | None) -> dict:
    defended = None if sticker is None else sticker.get("defended")
    undefended = None if sticker is None else sticker.get("undefended")
    passed = None if None in (defended, undefended) else defended > undefended
    return _check(passed, defended=defended, undefended=undefended)


def acceptance_summary(
    reports: Mapping[str, Mapping],
    trends: Mapping | None = None,
    sticker: Mapping[str, float] | None = None,
    ablations: Mapping[str, Mapping[str, Mapping]] | None = None,
) -> dict:
    """Collect every directional check into one JSON-ready summary.

    Args:
        reports: EvalReport dicts of the full run, keyed by experiment id
        trends: Output of ``antibody_trends``
        sticker: ``{"defended": ..., "undefended": ...}`` accuracies
        ablations: Reports of each ablation run keyed by ablation name

    Returns:
        dict of checks keyed by name
    """
    ablations = ablations or {}
    summary = {
        "defense_recovery": defense_recovery(reports),
        "ablation_no_ssat": ablation_direction(reports, ablations.get("no_ssat")),
        "ablation_no_memory": ablation_direction(reports, ablations.get("no_memory")),
        "adaptive_attack": adaptive_direction(reports),
        "sticker": sticker_direction(sticker),
    }
    if trends is not None:
        observed = trends["trends"].values()
        passed = None if None in observed else all(observed)
        summary["antibody_trends"] = {"passed": passed, **trends["trends"]}
    else:
        summary["antibody_trends"] = {"passed": None}

    for name, check in summary.items():
        if check["passed"] is None:
            logger.info("Acceptance check '%s' not evaluated: inputs missing", name)
        else:
            logger.info("Acceptance check '%s': %s", name, "passed" if check["passed"] else "failed")
    return summary
