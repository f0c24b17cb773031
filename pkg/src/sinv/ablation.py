"""Output-subset ablation of the multi-task model."""

import itertools
import json
from dataclasses import dataclass, replace

from .channels import ORAL_TVS, SOURCE_FEATURES, VP
from .errors import ConfigError
from .evaluation import evaluate
from .models import ModelSpec, build_model
from .training import TrainConfig, train

GROUPS = {"VP": (VP,), "3SF": SOURCE_FEATURES}
_ALIASES = {"VP": "VP", "3SF": "3SF", "SF": "3SF"}


def parse_exclusions(names):
    """Normalize exclusion tokens to a subset of {'VP', '3SF'}."""
    out = []
    for n in names:
        key = _ALIASES.get(n)
        if key is None:
            if n in ORAL_TVS:
                raise ConfigError(f"oral tract variable {n!r} cannot be ablated")
            raise ConfigError(f"unknown ablation group {n!r}; expected VP or 3SF")
        if key not in out:
            out.append(key)
    return tuple(sorted(out, key=list(GROUPS).index))


def variant_spec(base, excluded):
    """ModelSpec for the variant that drops the ``excluded`` groups.

    Removing every auxiliary output leaves a single-head 6-channel model.
    """
    aux = tuple(c for g, chans in GROUPS.items() if g not in excluded for c in chans)
    if not aux:
        return replace(base, arch="stl-si", heads=(ORAL_TVS,), head_weights=None)
    return replace(base, arch="mtl-si", heads=(ORAL_TVS, aux), head_weights=None)


@dataclass
class AblationRow:
    excluded: tuple
    channels: tuple
    arch: str
    report: object

    def to_dict(self):
        return {
            "excluded": list(self.excluded),
            "channels": list(self.channels),
            "arch": self.arch,
            "mean_oral": self.report.mean_oral,
            "ppmc": self.report.ppmc,
        }


def ablate(base, manifest, excluded=("VP", "3SF"), cfg=None, protocol="unsegmented",
           segment_seconds=None, log=None):
    """Train and evaluate one variant per subset of ``excluded``.

    Rows run from most to least ablated; with the default exclusions these are
    {6 oral}, {6 oral + VP}, {6 oral + 3SF} and all 10 channels.
    """
    groups = parse_exclusions(excluded)
    if not isinstance(base, ModelSpec):
        raise ConfigError("ablate needs a ModelSpec as its base")
    cfg = cfg or TrainConfig()
    rows = []
    for k in range(len(groups) + 1):
        for kept in itertools.combinations(groups, k):
            subset = tuple(g for g in groups if g not in kept)
            spec = variant_spec(base, subset)
            if log is not None:
                log(f"variant excluding {list(subset) or 'nothing'}: {spec.arch}, {len(spec.output_channels)} outputs")
            model = build_model(spec)
            train(model, manifest, cfg)
            report = evaluate(model, manifest, "test", protocol, segment_seconds)
            rows.append(AblationRow(subset, spec.output_channels, spec.arch, report))
    return rows


def comparison_table(rows):
    """Plain-text table: one row per variant, PPMC per channel plus the oral mean."""
    channels = []
    for r in rows:
        channels += [c for c in r.channels if c not in channels]
    head = ["excluded".ljust(10)] + [c.rjust(6) for c in channels] + ["oral".rjust(6)]
    lines = ["  ".join(head)]
    for r in rows:
        cells = [(",".join(r.excluded) or "-").ljust(10)]
        cells += [f"{r.report.ppmc[c]:6.3f}" if c in r.report.ppmc else "     -" for c in channels]
        cells.append(f"{r.report.mean_oral:6.3f}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def rows_to_json(rows):
    return json.dumps([r.to_dict() for r in rows], indent=1, sort_keys=True)
