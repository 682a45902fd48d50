"""Run configuration: defaults, key=value files and CLI overrides.

Config files are flat ``key=value`` lines; ``#`` starts a comment.
The key ``lambda`` (a Python keyword) maps to the ``lam`` attribute.
Unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .graph import GraphConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # optimization
    lr_high: float = 1e-4
    lr_low: float = 1e-3
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    n_seeds: int = 3
    # architecture
    hidden: int = 32
    d_g: int = 32
    emb_dim: int = 64
    gat_layers: int = 1
    gat_heads: int = 1
    gat_aggregates_neighbors: bool = False
    # loss mixing
    lam: float = 0.3
    mu: float = 0.15
    # graph construction
    w_s: float = 1.0
    tp_threshold: float = 0.75
    tp_metric: str = "leven"
    # evaluation protocol
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    topk_union: int = 1
    scope: str = "predicted"
    numeric_filter: bool = True
    # feature / branch switches
    use_cs: bool = True
    use_es: bool = True
    use_el: bool = True
    use_bon: bool = True
    use_gat: bool = True
    use_os: bool = True
    use_mva: bool = True

    def graph_config(self) -> GraphConfig:
        return GraphConfig(
            w_s=self.w_s, tp_threshold=self.tp_threshold, tp_metric=self.tp_metric
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            value = getattr(self, f.name)
            out[key] = list(value) if isinstance(value, tuple) else value
        return out


_ALIASES = {"lambda": "lam"}


def _parse_value(name: str, raw: str, pytype) -> object:
    raw = raw.strip()
    if pytype is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"config key {name}: expected a boolean, got {raw!r}")
    if pytype is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key {name}: expected an integer, got {raw!r}")
    if pytype is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key {name}: expected a number, got {raw!r}")
    if name == "split":
        parts = [p for p in raw.split(",") if p.strip()]
        if len(parts) != 3:
            raise ConfigError(f"config key split: expected three ratios, got {raw!r}")
        return tuple(float(p) for p in parts)
    return raw


def apply_items(cfg: RunConfig, items: dict[str, str]) -> RunConfig:
    """Overlay raw string settings onto a config, strictly typed."""
    by_name = {f.name: f for f in fields(RunConfig)}
    updates = {}
    for key, raw in items.items():
        name = _ALIASES.get(key, key)
        if name not in by_name:
            raise ConfigError(f"unknown config key {key!r}")
        base = type(getattr(cfg, name))
        if base is tuple:
            updates[name] = _parse_value(key, raw, tuple)
        else:
            updates[name] = _parse_value(key, raw, base)
    out = replace(cfg, **updates)
    validate_config(out)
    return out


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        items[key.strip()] = value.strip()
    return apply_items(base or RunConfig(), items)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


def validate_config(cfg: RunConfig) -> None:
    if cfg.max_epochs < 1:
        raise ConfigError("max_epochs must be >= 1")
    if cfg.patience < 1:
        raise ConfigError("patience must be >= 1")
    if cfg.gat_layers < 1 or cfg.gat_heads < 1:
        raise ConfigError("gat_layers and gat_heads must be >= 1")
    if not (abs(sum(cfg.split) - 1.0) < 1e-9):
        raise ConfigError(f"split ratios must sum to 1, got {cfg.split}")
    if any(r <= 0 for r in cfg.split):
        raise ConfigError("split ratios must all be positive")
    if cfg.scope not in ("predicted", "whole"):
        raise ConfigError(f"scope must be 'predicted' or 'whole', got {cfg.scope!r}")
    if cfg.tp_metric not in ("leven", "lcstr", "lcseq"):
        raise ConfigError(f"unknown tp_metric {cfg.tp_metric!r}")
    if not (0.0 <= cfg.tp_threshold <= 1.0):
        raise ConfigError("tp_threshold must lie in [0, 1]")
    if cfg.topk_union < 1:
        raise ConfigError("topk_union must be >= 1")
    if cfg.n_seeds < 1:
        raise ConfigError("n_seeds must be >= 1")
    if cfg.emb_dim < 8:
        raise ConfigError("emb_dim must be >= 8")
