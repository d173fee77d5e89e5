"""Run configuration: a flat, sectioned text format.

Grammar: one ``section.key = value`` assignment per line; ``#`` starts
a comment; blank lines are ignored. Sections:

  run        name, rounds, seeds (comma list), out, regime
             (intra_domain | cross_domain)
  data       one graph source ("data"), or several ("data1".."dataN"):
             kind = path | complete | planted | csv, plus per-kind
             parameters and ``clients`` (how many clients split this
             source)
  partition  alpha (Dirichlet concentration), seed (offset)
  model      layers, hidden, activation, bias
  client     trainer (fedavg | fedsgd | fedprox), lr, epochs, mu
  server     regulation (plain | ggrs), alpha, beta, epsilon (number or
             'adaptive'), subspace_dim, window, proxy_dim (number, 0, or
             'auto'), weights, fallback, reference

Every key has a default except data.kind; unknown sections or keys are
errors that name the offending line. CSV paths are resolved relative to
the config file's directory.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .graphs import PartitionSpec

__all__ = ["DataSource", "RunConfig", "parse_config", "load_config"]

_LINE = re.compile(r"^([A-Za-z][A-Za-z0-9]*)\.([A-Za-z_]+)\s*=\s*(.*)$")


@dataclass(frozen=True)
class DataSource:
    """One graph source feeding one or more clients."""

    kind: str
    clients: int = 1
    # path / complete
    n: int = 8
    # planted partition
    blocks: int = 4
    block_size: int = 30
    p_in: float = 0.3
    p_out: float = 0.05
    classes: int = 4
    feature_dim: int = 8
    class_sep: float = 1.0
    # csv
    edges: str | None = None
    features_path: str | None = None
    labels: str | None = None
    splits: str | None = None


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"
    rounds: int = 100
    seeds: tuple[int, ...] = (1, 2, 3)
    out: str = "out"
    regime: str = "intra_domain"
    sources: tuple[DataSource, ...] = ()
    alpha: float = 0.3               # partition concentration
    partition_seed: int = 0
    layers: int = 2
    hidden: int = 16
    activation: str = "relu"
    bias: bool = True
    trainer: str = "fedavg"
    lr: float = 0.05
    epochs: int = 1
    mu: float = 0.01
    regulation: str = "plain"
    server_alpha: float = 0.9
    server_beta: float = 0.5
    epsilon: float | str = "adaptive"
    subspace_dim: int = 8
    window: int = 32
    proxy_dim: int | None = None     # None = auto
    weights: str = "uniform"
    fallback: str = "largest"
    reference: str = "raw"
    raw_text: str = field(default="", repr=False)

    @property
    def n_clients(self) -> int:
        return sum(s.clients for s in self.sources)

    def partition_spec(self, source_index: int, run_seed: int) -> PartitionSpec:
        """Dirichlet spec for one source under one run seed (seed mixing
        is part of the determinism contract: partition_seed + 1000 *
        run_seed + 500 + source_index)."""
        return PartitionSpec(
            n_clients=self.sources[source_index].clients,
            dirichlet_alpha=self.alpha,
            seed=self.partition_seed + 1000 * run_seed + 500 + source_index,
        )


def _fail(path: str, line: int, reason: str):
    raise ConfigError(f"{path}:{line}: {reason}")


def _to_int(raw, where):
    try:
        return int(raw)
    except ValueError:
        _fail(*where, f"expected an integer, got {raw!r}")


def _to_float(raw, where):
    try:
        return float(raw)
    except ValueError:
        _fail(*where, f"expected a number, got {raw!r}")


def _to_bool(raw, where):
    if raw in ("true", "false"):
        return raw == "true"
    _fail(*where, f"expected true or false, got {raw!r}")


def _to_choice(raw, choices, where):
    if raw in choices:
        return raw
    _fail(*where, f"expected one of {', '.join(choices)}, got {raw!r}")


_RUN_KEYS = {"name", "rounds", "seeds", "out", "regime"}
_DATA_KEYS = {
    "kind", "clients", "n", "blocks", "block_size", "p_in", "p_out",
    "classes", "features", "class_sep", "edges", "labels", "splits",
}
_PARTITION_KEYS = {"alpha", "seed"}
_MODEL_KEYS = {"layers", "hidden", "activation", "bias"}
_CLIENT_KEYS = {"trainer", "lr", "epochs", "mu"}
_SERVER_KEYS = {
    "regulation", "alpha", "beta", "epsilon", "subspace_dim", "window",
    "proxy_dim", "weights", "fallback", "reference",
}


def _parse_lines(text: str, path: str) -> dict[tuple[str, str], tuple[str, int]]:
    entries: dict[tuple[str, str], tuple[str, int]] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m is None:
            _fail(path, ln, f"expected 'section.key = value', got {line!r}")
        section, key, value = m.group(1), m.group(2), m.group(3).strip()
        if (section, key) in entries:
            _fail(path, ln, f"duplicate key {section}.{key}")
        entries[(section, key)] = (value, ln)
    return entries


def _source_sections(entries, path) -> list[str]:
    names = sorted(
        {s for s, _ in entries if s == "data" or re.fullmatch(r"data[1-9][0-9]*", s)}
    )
    if not names:
        _fail(path, 1, "at least one data section is required")
    if "data" in names and len(names) > 1:
        _fail(path, 1, "use either a single [data] section or numbered data1..dataN")
    if "data" in names:
        return ["data"]
    expected = [f"data{i}" for i in range(1, len(names) + 1)]
    if names != expected:
        _fail(path, 1, f"data sections must be numbered consecutively, got {names}")
    return names


def _build_source(section, entries, path, base_dir: Path) -> DataSource:
    def get(key):
        return entries.get((section, key))

    for (s, k), (_, ln) in entries.items():
        if s == section and k not in _DATA_KEYS:
            _fail(path, ln, f"unknown key {s}.{k}")

    kind_entry = get("kind")
    if kind_entry is None:
        _fail(path, 1, f"{section}.kind is required")
    kind = _to_choice(kind_entry[0], ("path", "complete", "planted", "csv"),
                      (path, kind_entry[1]))

    kw: dict = {"kind": kind}
    if get("clients"):
        v, ln = get("clients")
        kw["clients"] = _to_int(v, (path, ln))
        if kw["clients"] < 1:
            _fail(path, ln, "clients must be >= 1")
    for key, conv in (
        ("n", _to_int), ("blocks", _to_int), ("block_size", _to_int),
        ("p_in", _to_float), ("p_out", _to_float), ("classes", _to_int),
        ("class_sep", _to_float),
    ):
        if get(key):
            v, ln = get(key)
            kw[key] = conv(v, (path, ln))
    if get("features"):
        v, ln = get("features")
        if kind == "csv":
            kw["features_path"] = str(base_dir / v)
        else:
            kw["feature_dim"] = _to_int(v, (path, ln))
    if kind == "csv":
        for key, attr in (("edges", "edges"), ("labels", "labels"), ("splits", "splits")):
            if get(key) is None:
                _fail(path, 1, f"{section}.{key} is required for csv sources")
            v, _ = get(key)
            kw[attr] = str(base_dir / v)
        if "features_path" not in kw:
            _fail(path, 1, f"{section}.features is required for csv sources")
    return DataSource(**kw)


def parse_config(text: str, path: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    base_dir = base_dir or Path(".")
    entries = _parse_lines(text, path)
    source_names = _source_sections(entries, path)

    known = {"run": _RUN_KEYS, "partition": _PARTITION_KEYS, "model": _MODEL_KEYS,
             "client": _CLIENT_KEYS, "server": _SERVER_KEYS}
    for (s, k), (_, ln) in entries.items():
        if s in known and k not in known[s]:
            _fail(path, ln, f"unknown key {s}.{k}")
        if s not in known and s not in source_names:
            _fail(path, ln, f"unknown section {s!r}")

    def get(section, key):
        return entries.get((section, key))

    kw: dict = {"raw_text": text}

    if get("run", "name"):
        kw["name"] = get("run", "name")[0]
    if get("run", "rounds"):
        v, ln = get("run", "rounds")
        kw["rounds"] = _to_int(v, (path, ln))
        if kw["rounds"] < 1:
            _fail(path, ln, "rounds must be >= 1")
    if get("run", "seeds"):
        v, ln = get("run", "seeds")
        try:
            seeds = tuple(int(p.strip()) for p in v.split(",") if p.strip())
        except ValueError:
            _fail(path, ln, f"seeds must be a comma list of integers, got {v!r}")
        if not seeds:
            _fail(path, ln, "at least one seed is required")
        if len(set(seeds)) != len(seeds):
            _fail(path, ln, "seeds must be distinct")
        kw["seeds"] = seeds
    if get("run", "out"):
        kw["out"] = get("run", "out")[0]
    if get("run", "regime"):
        v, ln = get("run", "regime")
        kw["regime"] = _to_choice(v, ("intra_domain", "cross_domain"), (path, ln))

    kw["sources"] = tuple(
        _build_source(name, entries, path, base_dir) for name in source_names
    )

    if get("partition", "alpha"):
        v, ln = get("partition", "alpha")
        kw["alpha"] = _to_float(v, (path, ln))
        if kw["alpha"] <= 0.0:
            _fail(path, ln, "partition alpha must be positive")
    if get("partition", "seed"):
        v, ln = get("partition", "seed")
        kw["partition_seed"] = _to_int(v, (path, ln))

    if get("model", "layers"):
        v, ln = get("model", "layers")
        kw["layers"] = _to_int(v, (path, ln))
        if kw["layers"] not in (1, 2):
            _fail(path, ln, "layers must be 1 or 2")
    if get("model", "hidden"):
        v, ln = get("model", "hidden")
        kw["hidden"] = _to_int(v, (path, ln))
        if kw["hidden"] < 1:
            _fail(path, ln, "hidden must be >= 1")
    if get("model", "activation"):
        v, ln = get("model", "activation")
        kw["activation"] = _to_choice(v, ("relu", "identity"), (path, ln))
    if get("model", "bias"):
        v, ln = get("model", "bias")
        kw["bias"] = _to_bool(v, (path, ln))

    if get("client", "trainer"):
        v, ln = get("client", "trainer")
        kw["trainer"] = _to_choice(v, ("fedavg", "fedsgd", "fedprox"), (path, ln))
    if get("client", "lr"):
        v, ln = get("client", "lr")
        kw["lr"] = _to_float(v, (path, ln))
        if kw["lr"] < 0.0:
            _fail(path, ln, "lr must be nonnegative")
    if get("client", "epochs"):
        v, ln = get("client", "epochs")
        kw["epochs"] = _to_int(v, (path, ln))
        if kw["epochs"] < 1:
            _fail(path, ln, "epochs must be >= 1")
    if get("client", "mu"):
        v, ln = get("client", "mu")
        kw["mu"] = _to_float(v, (path, ln))
        if kw["mu"] < 0.0:
            _fail(path, ln, "mu must be nonnegative")

    if get("server", "regulation"):
        v, ln = get("server", "regulation")
        kw["regulation"] = _to_choice(v, ("plain", "ggrs"), (path, ln))
    if get("server", "alpha"):
        v, ln = get("server", "alpha")
        kw["server_alpha"] = _to_float(v, (path, ln))
        if not (0.0 <= kw["server_alpha"] < 1.0):
            _fail(path, ln, "server alpha must be in [0, 1)")
    if get("server", "beta"):
        v, ln = get("server", "beta")
        kw["server_beta"] = _to_float(v, (path, ln))
        if not (0.0 <= kw["server_beta"] < 1.0):
            _fail(path, ln, "server beta must be in [0, 1)")
    if get("server", "epsilon"):
        v, ln = get("server", "epsilon")
        if v == "adaptive":
            kw["epsilon"] = "adaptive"
        else:
            kw["epsilon"] = _to_float(v, (path, ln))
            if kw["epsilon"] <= 0.0:
                _fail(path, ln, "epsilon must be positive or 'adaptive'")
    if get("server", "subspace_dim"):
        v, ln = get("server", "subspace_dim")
        kw["subspace_dim"] = _to_int(v, (path, ln))
        if kw["subspace_dim"] < 0:
            _fail(path, ln, "subspace_dim must be >= 0")
    if get("server", "window"):
        v, ln = get("server", "window")
        kw["window"] = _to_int(v, (path, ln))
        if kw["window"] < 1:
            _fail(path, ln, "window must be >= 1")
    if get("server", "proxy_dim"):
        v, ln = get("server", "proxy_dim")
        if v == "auto":
            kw["proxy_dim"] = None
        else:
            kw["proxy_dim"] = _to_int(v, (path, ln))
            if kw["proxy_dim"] < 0:
                _fail(path, ln, "proxy_dim must be 'auto', 0, or positive")
    if get("server", "weights"):
        v, ln = get("server", "weights")
        kw["weights"] = _to_choice(v, ("uniform", "by_train_count"), (path, ln))
    if get("server", "fallback"):
        v, ln = get("server", "fallback")
        kw["fallback"] = _to_choice(v, ("largest", "none"), (path, ln))
    if get("server", "reference"):
        v, ln = get("server", "reference")
        kw["reference"] = _to_choice(v, ("raw", "regulated"), (path, ln))

    cfg = RunConfig(**kw)
    if cfg.subspace_dim > cfg.window:
        _fail(path, 1, "server.subspace_dim must not exceed server.window")
    if cfg.regime == "cross_domain":
        if len(cfg.sources) < 2:
            _fail(path, 1, "cross_domain requires at least 2 data sections")
        if cfg.layers < 2:
            _fail(path, 1, "cross_domain requires layers = 2 (the head stays local)")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(text, path=str(path), base_dir=p.parent)
