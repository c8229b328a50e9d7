"""Academic rigor checks: mechanical audits over declared experiment files.

All four rules are pure functions of the run bundle — the same bundle
always yields the same findings. Inputs come from a ``declared.json``
sidecar the analysis/coding scripts leave in the workspace:

    {"splits": {"train": "train.csv", "test": "test.csv", "key": "stay_id"},
     "metrics": "metrics.json",
     "prediction_time_column": "pred_ts",
     "feature_timestamps": {"lab_result": "lab_ts"},
     "features_used": ["age", "lab_result"],
     "prediction_time_features": ["age"]}

Missing declarations are reported, never fatal. Metric-sanity thresholds
live in a declarative rules file so reviewers can tune them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

RULE_DATA_LEAKAGE = "data_leakage"
RULE_UNREALISTIC_METRIC = "unrealistic_metric"
RULE_TEMPORAL_VIOLATION = "temporal_violation"
RULE_FEATURE_TIMING = "feature_timing"

DECLARATIONS_FILE = "declared.json"


def load_metric_rules(path: Optional[Path] = None) -> dict[str, Any]:
    if path is not None:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    return json.loads(
        resources.files("labflow.quality").joinpath("metric_rules.json").read_text("utf-8")
    )


@dataclass(frozen=True)
class RigorFinding:
    rule: str
    severity: str  # blocking | warning
    location: dict[str, str]  # artifact + detail
    explanation: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule": self.rule,
            "severity": self.severity,
            "location": self.location,
            "explanation": self.explanation,
        }


@dataclass
class RigorReport:
    findings: list[RigorFinding] = field(default_factory=list)
    missing_declarations: list[str] = field(default_factory=list)

    def rules_triggered(self) -> set[str]:
        return {f.rule for f in self.findings}

    def to_dict(self) -> dict[str, Any]:
        return {
            "findings": [f.to_dict() for f in self.findings],
            "missing_declarations": self.missing_declarations,
        }


@dataclass
class RunBundle:
    workspace: Path
    run_dir: Optional[Path] = None

    def declarations(self) -> Optional[dict[str, Any]]:
        path = Path(self.workspace) / DECLARATIONS_FILE
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def read_csv(self, rel_path: str) -> list[dict[str, str]]:
        with open(Path(self.workspace) / rel_path, newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))


def _as_comparable(value: str) -> Any:
    try:
        return ("num", float(value))
    except (TypeError, ValueError):
        return ("str", value)


def _check_leakage(bundle: RunBundle, declared: dict[str, Any], severities: dict) -> list[RigorFinding]:
    splits = declared.get("splits")
    if not splits:
        return []
    key = splits["key"]
    try:
        train_keys = {row[key] for row in bundle.read_csv(splits["train"])}
        test_keys = {row[key] for row in bundle.read_csv(splits["test"])}
    except (OSError, KeyError):
        return []
    overlap = sorted(train_keys & test_keys)
    if not overlap:
        return []
    return [
        RigorFinding(
            rule=RULE_DATA_LEAKAGE,
            severity=severities.get(RULE_DATA_LEAKAGE, "blocking"),
            location={
                "artifact": f"{splits['train']} ∩ {splits['test']}",
                "detail": f"shared {key} values: {', '.join(overlap[:5])}",
            },
            explanation=(
                f"{len(overlap)} row keys appear in both the train and test "
                "splits; evaluation scores are contaminated"
            ),
        )
    ]


def _check_metrics(bundle: RunBundle, declared: dict[str, Any], rules: dict, severities: dict) -> list[RigorFinding]:
    metrics_path = declared.get("metrics")
    if not metrics_path:
        return []
    try:
        payload = json.loads((Path(bundle.workspace) / metrics_path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError):
        return []
    metrics = payload.get("metrics", {})
    test_rows = int(payload.get("test_rows", 0))
    watched = set(rules.get("classification_metrics", ()))
    perfect = float(rules.get("perfect_metric_threshold", 1.0))
    min_rows = int(rules.get("perfect_metric_min_rows", 50))

    findings = []
    for name, value in sorted(metrics.items()):
        if name.lower() not in watched:
            continue
        value = float(value)
        if not 0.0 <= value <= 1.0:
            findings.append(
                RigorFinding(
                    rule=RULE_UNREALISTIC_METRIC,
                    severity="blocking",
                    location={"artifact": metrics_path, "detail": f"{name}={value}"},
                    explanation=f"classification metric {name} outside [0, 1]",
                )
            )
        elif value >= perfect and test_rows >= min_rows:
            findings.append(
                RigorFinding(
                    rule=RULE_UNREALISTIC_METRIC,
                    severity=severities.get(RULE_UNREALISTIC_METRIC, "warning"),
                    location={"artifact": metrics_path, "detail": f"{name}={value}"},
                    explanation=(
                        f"{name} = {value} on a {test_rows}-row test set is "
                        "flagged unrealistic by the declared threshold rule"
                    ),
                )
            )
    return findings


def _check_temporal(bundle: RunBundle, declared: dict[str, Any], severities: dict) -> list[RigorFinding]:
    pred_col = declared.get("prediction_time_column")
    feature_ts = declared.get("feature_timestamps", {})
    if not pred_col or not feature_ts:
        return []
    files = []
    splits = declared.get("splits") or {}
    files.extend(p for p in (splits.get("train"), splits.get("test")) if p)
    if declared.get("data"):
        files.append(declared["data"])

    findings = []
    for rel_path in files:
        try:
            rows = bundle.read_csv(rel_path)
        except OSError:
            continue
        for feature, ts_col in sorted(feature_ts.items()):
            bad = 0
            for row in rows:
                if ts_col not in row or pred_col not in row:
                    continue
                if _as_comparable(row[ts_col]) > _as_comparable(row[pred_col]):
                    bad += 1
            if bad:
                findings.append(
                    RigorFinding(
                        rule=RULE_TEMPORAL_VIOLATION,
                        severity=severities.get(RULE_TEMPORAL_VIOLATION, "blocking"),
                        location={"artifact": rel_path, "detail": f"{feature} via {ts_col}"},
                        explanation=(
                            f"feature {feature} has {bad} rows whose timestamp "
                            f"postdates the prediction time column {pred_col}"
                        ),
                    )
                )
    return findings


def _check_feature_timing(declared: dict[str, Any], severities: dict) -> list[RigorFinding]:
    used = declared.get("features_used")
    allowed = declared.get("prediction_time_features")
    if used is None or allowed is None:
        return []
    undeclared = sorted(set(used) - set(allowed))
    # Features with an audited timestamp column are covered by the temporal
    # rule instead of being flagged as undeclared.
    undeclared = [f for f in undeclared if f not in declared.get("feature_timestamps", {})]
    if not undeclared:
        return []
    return [
        RigorFinding(
            rule=RULE_FEATURE_TIMING,
            severity=severities.get(RULE_FEATURE_TIMING, "blocking"),
            location={"artifact": DECLARATIONS_FILE, "detail": ", ".join(undeclared)},
            explanation=(
                "features used by the model are absent from the declared "
                "prediction-time schema: " + ", ".join(undeclared)
            ),
        )
    ]


def rigor_check(bundle: RunBundle, rules_path: Optional[Path] = None) -> RigorReport:
    """Apply all four mechanical rules to the bundle's declared files."""
    declared = bundle.declarations()
    if declared is None:
        return RigorReport(missing_declarations=[DECLARATIONS_FILE])

    rules = load_metric_rules(rules_path)
    severities = rules.get("severities", {})
    missing = [
        name
        for name, present in (
            ("splits", bool(declared.get("splits"))),
            ("metrics", bool(declared.get("metrics"))),
            ("schema", bool(declared.get("prediction_time_column"))),
        )
        if not present
    ]

    findings: list[RigorFinding] = []
    findings.extend(_check_leakage(bundle, declared, severities))
    findings.extend(_check_metrics(bundle, declared, rules, severities))
    findings.extend(_check_temporal(bundle, declared, severities))
    findings.extend(_check_feature_timing(declared, severities))
    return RigorReport(findings=findings, missing_declarations=missing)
