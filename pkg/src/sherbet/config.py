"""Run configuration: nested JSON sections with strict key checking."""
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .data import TASKS, SynthConfig
from .errors import ConfigError
from .hyperbolic import HyperbolicConfig
from .model import ModelConfig
from .training import TrainConfig


# (graph-layer, decoder-input) dropout per task
TASK_DROPOUT = {"diagnosis": (0.2, 0.02), "heart-failure": (0.8, 0.15)}


def _model_defaults():
    # None means "use the task's dropout"; see TASK_DROPOUT
    return ModelConfig(graph_dropout=None, decoder_dropout=None)


def _ssl_defaults():
    return TrainConfig(task="ssl", epochs=1000, batch_size=128, lr=0.01, breakpoints=(100, 500))


def _finetune_defaults():
    return TrainConfig(task="diagnosis", epochs=200, batch_size=32, lr=0.01, breakpoints=(20, 35, 100))


@dataclass
class Ablations:
    hyperbolic: bool = True
    hierarchy: bool = True
    ssl: bool = True
    graph: bool = True


@dataclass
class RunConfig:
    """Every knob of a pipeline run.

    ``seed`` is copied into each section that draws random numbers, so one
    value reproduces the whole run.
    """
    ontology: str = None   # CSV path; None means generate a synthetic corpus
    dataset: str = None
    out: str = "runs/default"
    seed: int = 0
    task: str = "diagnosis"
    splits: tuple = (6000, 493, 1000)
    strict: bool = True
    phi: float = 0.9
    threshold: float = 0.5
    explain_patients: int = 5
    explain_top_k: int = 5
    threads: int = 1
    ablations: Ablations = field(default_factory=Ablations)
    synth: SynthConfig = field(default_factory=SynthConfig)
    hyperbolic: HyperbolicConfig = field(default_factory=HyperbolicConfig)
    model: ModelConfig = field(default_factory=_model_defaults)
    ssl: TrainConfig = field(default_factory=_ssl_defaults)
    finetune: TrainConfig = field(default_factory=_finetune_defaults)

    def check(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if len(self.splits) != 3 or min(self.splits) < 1:
            raise ConfigError("splits must be three positive counts (train, valid, test)")
        if not 0.0 < self.phi < 1.0:
            raise ConfigError("phi must lie in (0, 1)")
        for rate in (self.model.graph_dropout, self.model.decoder_dropout):
            if rate is not None and not 0.0 <= rate < 1.0:
                raise ConfigError("dropout rates must lie in [0, 1)")
        if (self.ontology is None) != (self.dataset is None):
            raise ConfigError("give both ontology and dataset paths, or neither")
        self.synth.check()
        self.ssl.check()
        self.finetune.check()
        return self

    def resolved(self):
        """Copy with the run seed and task pushed into every section."""
        cfg = from_obj(to_obj(self))
        cfg.synth.seed = cfg.hyperbolic.seed = cfg.ssl.seed = cfg.finetune.seed = cfg.seed
        cfg.finetune.task = cfg.task
        cfg.model.use_graph = cfg.ablations.graph
        cfg.model.hierarchical = cfg.ablations.hierarchy
        if cfg.task in TASK_DROPOUT:
            graph, decoder = TASK_DROPOUT[cfg.task]
            if cfg.model.graph_dropout is None:
                cfg.model.graph_dropout = graph
            if cfg.model.decoder_dropout is None:
                cfg.model.decoder_dropout = decoder
        return cfg.check()

    def digest(self):
        """Hash of everything that changes results; output path and threads are left out."""
        obj = to_obj(self)
        obj.pop("out")
        obj.pop("threads")
        return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def to_obj(cfg):
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def dumps(cfg):
    return json.dumps(to_obj(cfg), sort_keys=True, indent=2) + "\n"


def _fill(inst, obj, where):
    """Overwrite fields of ``inst`` from ``obj``; nested sections keep their own defaults."""
    if not isinstance(obj, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    fields = {f.name for f in dataclasses.fields(inst)}
    unknown = sorted(set(obj) - fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    for name, value in obj.items():
        current = getattr(inst, name)
        path = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(current):
            value = _fill(current, value, path)
        elif isinstance(current, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{path} must be a list")
            value = tuple(value)
        setattr(inst, name, value)
    return inst


def from_obj(obj):
    return _fill(RunConfig(), obj, "")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return from_obj(obj)
