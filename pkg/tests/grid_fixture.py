"""Reference evaluation grid: per-dimension scores for the 18 benchmark
instances with the expected rendered averages, in catalog order
(difficulty, then task id, then dataset)."""

GRID = [
    ("easy", "E1", "eicu_demo", (3, 3, 3, 3, 3), 3.0),
    ("easy", "E1", "mimic_iv_icu", (2, 2, 2, 3, 3), 2.4),
    ("easy", "E2", "eicu_demo", (3, 3, 3, 2, 3), 2.8),
    ("easy", "E2", "mimic_iv_icu", (3, 3, 3, 3, 3), 3.0),
    ("easy", "E3", "eicu_demo", (2, 3, 3, 2, 3), 2.6),
    ("easy", "E3", "mimic_iv_icu", (3, 3, 3, 2, 3), 2.8),
    ("medium", "M1", "eicu_demo", (3, 2, 3, 2, 3), 2.6),
    ("medium", "M1", "mimic_iv_icu", (3, 3, 3, 3, 3), 3.0),
    ("medium", "M2", "eicu_demo", (2, 3, 1, 2, 1), 1.8),
    ("medium", "M2", "mimic_iv_icu", (3, 3, 2, 2, 3), 2.6),
    ("medium", "M3", "eicu_demo", (2, 3, 2, 3, 2), 2.4),
    ("medium", "M3", "mimic_iv_icu", (2, 3, 3, 2, 3), 2.6),
    ("hard", "H1", "eicu_demo", (2, 3, 2, 3, 2), 2.4),
    ("hard", "H1", "mimic_iv_icu", (2, 2, 1, 2, 1), 1.6),
    ("hard", "H2", "eicu_demo", (3, 3, 3, 3, 3), 3.0),
    ("hard", "H2", "mimic_iv_icu", (1, 2, 1, 3, 2), 1.8),
    ("hard", "H3", "eicu_demo", (3, 3, 2, 3, 3), 2.8),
    ("hard", "H3", "mimic_iv_icu", (3, 3, 2, 3, 2), 2.6),
]

EXPECTED_AVERAGES = [
    3.0, 2.4, 2.8, 3.0, 2.6, 2.8,
    2.6, 3.0, 1.8, 2.6, 2.4, 2.6,
    2.4, 1.6, 3.0, 1.8, 2.8, 2.6,
]
