"""Clinical wording: WHO thresholds, qualitative Hgb bands, and the disclaimer.

The system classifies anemic vs non-anemic; it does not estimate a haemoglobin
value. The band verbalizes the classification against the WHO threshold for
the patient's sex without inventing a number.
"""

from __future__ import annotations

from dataclasses import dataclass

# Shown verbatim with every prediction and on every report.
DISCLAIMER = "Screening tool only — not a substitute for laboratory diagnosis."

SEXES = ("female", "male", "unspecified")

LABEL_ANEMIC = "anemic"
LABEL_NON_ANEMIC = "non_anemic"
LABELS = (LABEL_ANEMIC, LABEL_NON_ANEMIC)

# Confidence above which an anemic call drops the "borderline" qualifier.
BAND_CONFIDENCE_CUT = 0.85


@dataclass(frozen=True)
class ClinicalThresholds:
    """WHO haemoglobin cutoffs (g/dL) below which anemia is defined."""

    female_gdl: int = 12
    male_gdl: int = 13

    def for_sex(self, sex: str) -> int:
        # unspecified uses the lower (female) cutoff: conservative wording
        # favors sensitivity
        return self.male_gdl if sex == "male" else self.female_gdl


def hgb_band(label: str, confidence: float, sex: str,
             thresholds: ClinicalThresholds | None = None,
             confidence_cut: float = BAND_CONFIDENCE_CUT) -> str:
    """Qualitative haemoglobin band for a prediction."""
    if label not in LABELS:
        raise ValueError(f"label must be one of {LABELS}, got {label!r}")
    if not 0.5 <= confidence <= 1.0:
        raise ValueError(f"2-class confidence must be in [0.5, 1], got {confidence}")
    thresholds = thresholds or ClinicalThresholds()
    cutoff = thresholds.for_sex(sex)
    if label == LABEL_NON_ANEMIC:
        return f"likely ≥ {cutoff} g/dL (normal range)"
    if confidence >= confidence_cut:
        return f"likely well below {cutoff} g/dL"
    return f"possibly below {cutoff} g/dL (borderline)"
