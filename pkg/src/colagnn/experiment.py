"""Run configuration and the method x horizon x seed experiment grid."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baselines import RNNBaseline, fit_arma, fit_direct_linear
from .data import AdjacencyMatrix, EpiDataset, PreparedData, WindowSet, dump_adjacency, dump_series, \
    load_adjacency, load_series, make_windows, prepare
from .evaluate import MetricsReport, evaluate
from .model import ColaGNN, ColaGnnConfig
from .synthetic import seasonal_benchmark
from .train import TrainConfig, train_model

log = logging.getLogger(__name__)

METHODS = ("cola-gnn", "gar", "ar", "var", "arma", "rnn")
ABLATIONS = ("none", "no-temp", "no-loc")
SYNTHETIC = "synthetic"


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    series: str = SYNTHETIC
    adjacency: str = ""
    global_extrema: bool = False


@dataclass
class ModelSection:
    hidden: int = 20
    attn_dim: int = 0       # 0: hidden // 2
    n_filters: int = 10
    filter_len: int = 0     # 0: the window length
    graph_dims: str = ""
    n_layers: int = 2
    norm_p: float = 2.0
    norm_eps: float = 1e-12
    dropout: float = 0.2


@dataclass
class TrainSection:
    lr: float = 0.001
    weight_decay: float = 5e-4
    batch_size: int = 32
    max_epochs: int = 1500
    patience: int = 200
    seed: int = 0
    trials: int = 10


@dataclass
class ExperimentSection:
    horizon: int = 2
    horizons: str = "2,3,4,5,10,15"
    window: int = 20
    out: str = "runs"
    method: str = "cola-gnn"
    methods: str = "cola-gnn,gar,ar,var,arma,rnn"
    ablation: str = "none"
    arma_q: int = 2


SECTIONS = {"data": DataSection, "model": ModelSection, "train": TrainSection, "experiment": ExperimentSection}


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    # -- parsing --------------------------------------------------------
    @classmethod
    def from_file(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg = cls()
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, value in parser.items(section):
                cfg.set(f"{section}.{key}", value)
        return cfg

    def set(self, key: str, value: str) -> None:
        """Set ``section.key`` (or a bare key that is unique across sections) from text."""
        if "." in key:
            section, name = key.split(".", 1)
        else:
            owners = [s for s, kls in SECTIONS.items() if name_in(kls, key)]
            if len(owners) != 1:
                raise ConfigError(f"unknown config key {key!r}")
            section, name = owners[0], key
        name = name.replace("-", "_")
        if section not in SECTIONS or not name_in(SECTIONS[section], name):
            raise ConfigError(f"unknown config key {key!r}")
        obj = getattr(self, section)
        ftype = type(getattr(SECTIONS[section](), name))
        try:
            setattr(obj, name, _coerce(ftype, value))
        except ValueError:
            raise ConfigError(f"{section}.{name}: cannot parse {value!r} as {ftype.__name__}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolved(self) -> dict:
        """All settings with derived defaults filled in."""
        d = self.to_dict()
        mc = self.model_config()
        d["model"]["attn_dim"] = mc.attn_dim
        d["model"]["filter_len"] = mc.q(self.experiment.window) if mc.use_temporal_conv else mc.filter_len
        d["model"]["graph_dims"] = ",".join(str(x) for x in mc.graph_dims)
        d["model"]["n_layers"] = mc.n_layers
        return d

    def copy(self) -> "RunConfig":
        return RunConfig(**{k: dataclasses.replace(getattr(self, k)) for k in SECTIONS})

    # -- typed views ----------------------------------------------------
    def horizons(self) -> list[int]:
        return _int_list(self.experiment.horizons, "experiment.horizons")

    def methods(self) -> list[str]:
        methods = [m.strip().lower() for m in self.experiment.methods.split(",") if m.strip()]
        for m in methods:
            if m not in METHODS:
                raise ConfigError(f"experiment.methods: unknown method {m!r}; choose from {', '.join(METHODS)}")
        return methods

    def model_config(self) -> ColaGnnConfig:
        m = self.model
        ablation = self.experiment.ablation
        if ablation not in ABLATIONS:
            raise ConfigError(f"experiment.ablation must be one of {ABLATIONS}, got {ablation!r}")
        dims = tuple(_int_list(m.graph_dims, "model.graph_dims")) if m.graph_dims.strip() else None
        try:
            return ColaGnnConfig(hidden=m.hidden, attn_dim=m.attn_dim or None, n_filters=m.n_filters,
                                 filter_len=m.filter_len or None, graph_dims=dims, n_layers=m.n_layers,
                                 norm_p=m.norm_p, norm_eps=m.norm_eps, dropout=m.dropout,
                                 use_temporal_conv=ablation != "no-temp",
                                 use_location_attention=ablation != "no-loc")
        except ValueError as exc:
            raise ConfigError(f"[model] {exc}") from None

    def train_config(self, seed: int | None = None) -> TrainConfig:
        t = self.train
        try:
            return TrainConfig(lr=t.lr, weight_decay=t.weight_decay, batch_size=t.batch_size,
                               max_epochs=t.max_epochs, patience=t.patience,
                               seed=t.seed if seed is None else seed, trials=t.trials)
        except ValueError as exc:
            raise ConfigError(f"[train] {exc}") from None

    def validate(self) -> "RunConfig":
        """Raise ``ConfigError`` for any inconsistent setting; returns ``self``."""
        e = self.experiment
        if e.method not in METHODS:
            raise ConfigError(f"experiment.method: unknown method {e.method!r}; choose from {', '.join(METHODS)}")
        if e.window < 1:
            raise ConfigError(f"experiment.window must be >= 1, got {e.window}")
        for h in [e.horizon, *self.horizons()]:
            if h < 1:
                raise ConfigError(f"horizons must be >= 1, got {h}")
        if e.arma_q < 0:
            raise ConfigError(f"experiment.arma_q must be >= 0, got {e.arma_q}")
        mc = self.model_config()
        if mc.use_temporal_conv and mc.filter_len is not None and mc.filter_len > e.window:
            raise ConfigError(f"model.filter_len {mc.filter_len} exceeds the window {e.window}")
        self.methods()
        self.train_config()
        self.seeds()
        return self

    def seeds(self) -> list[int]:
        if self.train.trials < 1:
            raise ConfigError("train.trials must be >= 1")
        return [self.train.seed + k for k in range(self.train.trials)]


def name_in(kls, name: str) -> bool:
    return name in {f.name for f in dataclasses.fields(kls)}


def _coerce(ftype, value: str):
    value = str(value).strip()
    if ftype is bool:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(value)
    if ftype is int:
        return int(value)
    if ftype is float:
        return float(value)
    return value


def _int_list(text: str, key: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {text!r}") from None


# --- data ----------------------------------------------------------------------

def load_inputs(cfg: RunConfig) -> tuple[EpiDataset, AdjacencyMatrix, dict]:
    """Dataset, adjacency and content hashes of both."""
    if cfg.data.series == SYNTHETIC:
        bench = seasonal_benchmark()
        ds, adj = bench.series, bench.adjacency
    else:
        ds = load_series(cfg.data.series)
        adj = load_adjacency(cfg.data.adjacency, ds.locations) if cfg.data.adjacency \
            else AdjacencyMatrix.identity(ds.locations)
    hashes = {"series_sha256": hashlib.sha256(dump_series(ds).encode()).hexdigest(),
              "adjacency_sha256": hashlib.sha256(dump_adjacency(adj).encode()).hexdigest()}
    return ds, adj, hashes


def input_width(model) -> int:
    return getattr(model, "history", None) or model.window


def prepare_for(method: str, ds: EpiDataset, window: int, horizon: int, cfg: RunConfig, q: int = 2) -> PreparedData:
    """ARMA windows carry extra history when the residual recursion needs it."""
    width = window
    if method == "arma":
        width = window + q
    return prepare(ds, width, horizon, global_extrema=cfg.data.global_extrema)


# --- models ----------------------------------------------------------------------

def build_and_fit(method: str, data: PreparedData, adj: AdjacencyMatrix, cfg: RunConfig, seed: int,
                  window: int, log_path=None):
    """Construct, fit and return ``(model, TrainReport | None)`` for one grid cell."""
    if method == "cola-gnn":
        rng = np.random.default_rng(seed)
        model = ColaGNN(cfg.model_config(), adj.normalized, window, rng)
        report = train_model(model, data.train, data.val, cfg.train_config(seed), log_path=log_path)
        return model, report
    if method == "rnn":
        rng = np.random.default_rng(seed)
        model = RNNBaseline(cfg.model.hidden, window, rng, cfg.model.dropout)
        report = train_model(model, data.train, data.val, cfg.train_config(seed), log_path=log_path)
        return model, report
    if method in ("gar", "ar", "var"):
        return fit_direct_linear(data.train, method), None
    if method == "arma":
        return fit_arma(data.train_split, window, data.train.horizon, q=cfg.experiment.arma_q), None
    raise ConfigError(f"unknown method {method!r}")


def is_deterministic(method: str) -> bool:
    return method in ("gar", "ar", "var", "arma")


def run_cell(method: str, ds: EpiDataset, adj: AdjacencyMatrix, cfg: RunConfig, horizon: int,
             seeds: Sequence[int], window: int | None = None) -> dict:
    """Metrics ``{metric: {per_seed, mean, sd}}`` for one method and horizon."""
    window = cfg.experiment.window if window is None else window
    data = prepare_for(method, ds, window, horizon, cfg, cfg.experiment.arma_q)
    per_seed = []
    cache = None
    for seed in seeds:
        if is_deterministic(method) and cache is not None:
            per_seed.append(cache)
            continue
        model, _ = build_and_fit(method, data, adj, cfg, seed, window)
        metrics = evaluate(model, data.test, data.normalizer).metrics()
        per_seed.append(metrics)
        cache = metrics
        log.info("%s h=%d seed=%d rmse=%.3f", method, horizon, seed, metrics["rmse"])
    report = MetricsReport()
    report.add(horizon, per_seed)
    return report.results[horizon]


def run_benchmark(ds: EpiDataset, adj: AdjacencyMatrix, cfg: RunConfig, methods: Sequence[str],
                  horizons: Sequence[int], seeds: Sequence[int]) -> dict:
    """``{method: {horizon: cell}}``; a failing cell records its error and the grid continues."""
    out: dict = {}
    for method in methods:
        out[method] = {}
        for h in horizons:
            try:
                out[method][int(h)] = run_cell(method, ds, adj, cfg, h, seeds)
            except Exception as exc:  # noqa: BLE001  partial failures are recorded per cell
                log.warning("%s h=%s failed: %s", method, h, exc)
                out[method][int(h)] = {"error": f"{type(exc).__name__}: {exc}"}
    return out


def format_table(results: dict, metric: str, horizons: Sequence[int]) -> str:
    width = max([len(m) for m in results] + [6])
    head = f"{metric.upper():<{width}} " + " ".join(f"{h:>10}" for h in horizons)
    lines = [head, "-" * len(head)]
    for method, cells in results.items():
        vals = []
        for h in horizons:
            cell = cells.get(int(h), {})
            v = cell.get(metric, {}).get("mean") if "error" not in cell else None
            vals.append(f"{'ERR' if v is None else ('nan' if math.isnan(v) else f'{v:.4g}'):>10}")
        lines.append(f"{method:<{width}} " + " ".join(vals))
    return "\n".join(lines)


def sweep_values(param: str, values: Sequence[int]) -> list[int]:
    if param == "window":
        bad = [v for v in values if not (10 <= v <= 50)]
    elif param == "graph-dim":
        bad = [v for v in values if not (1 <= v <= 15)]
    else:
        raise ConfigError(f"parameter {param!r} is not sweepable; use 'window' or 'graph-dim'")
    if bad:
        raise ConfigError(f"{param} values out of range: {bad}")
    return list(values)


def apply_sweep_value(cfg: RunConfig, param: str, value: int) -> RunConfig:
    """Copy of ``cfg`` with one swept hyperparameter changed.

    The filter length follows the window unless set explicitly;
    ``graph-dim`` sets the width of the last graph layer.
    """
    new = cfg.copy()
    if param == "window":
        new.experiment.window = value
    else:
        dims = _int_list(cfg.model.graph_dims, "model.graph_dims") if cfg.model.graph_dims.strip() \
            else [cfg.model.n_filters] * cfg.model.n_layers
        dims[-1] = value
        new.model.graph_dims = ",".join(str(d) for d in dims)
    return new


def window_set_for_series(ds: EpiDataset, model, horizon: int, normalizer) -> WindowSet:
    return make_windows(normalizer.apply_dataset(ds), input_width(model), horizon)
