"""Pipeline stages; each reads earlier artifacts from the run directory and writes its own."""
import hashlib
import json
import logging
import os
from dataclasses import asdict

import numpy as np

from . import checkpoint
from .config import dumps as dump_config
from .data import (diagnosis_label_space, generate_synthetic, load_dataset, make_task_instances,
                   raw_codes, save_dataset, split, Splits)
from .errors import MissingArtifact, SchemaError
from .graph import build_adjacency, count_cooccurrence, normalize_adjacency, read_adjacency_csv, write_adjacency_csv
from .hyperbolic import read_embedding_csv, train_hyperbolic, write_embedding_csv
from .interpret import export_trace, write_hidden_csv
from .metrics import evaluate as evaluate_scores
from .model import ModelConfig, SherbetModel
from .ontology import load_ontology, pad_virtual_leaves, read_ontology_csv, write_ontology_csv
from .training import run_finetune, run_ssl

logger = logging.getLogger(__name__)

ONTOLOGY = "ontology.csv"
DATASET = "dataset.json"
EMBEDDINGS = "embeddings.csv"
GRAPH = "graph.csv"
SPLITS = "splits.json"
SSL_CKPT = "ssl.ckpt"
FINETUNE_CKPT = "finetune.ckpt"
METRICS = "metrics.json"
HIDDEN = "hidden.csv"
CODE_EMBEDDINGS = "code_embeddings.csv"
TRACES = "traces"
MANIFEST = "manifest.json"
RESOLVED = "config.resolved.json"

STAGES = ("gen-synth", "embed-hier", "build-graph", "pretrain-ssl", "finetune", "evaluate", "explain")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


class JsonLines:
    """Append-only JSON-lines writer used as a training log callback."""

    def __init__(self, path):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")

    def __call__(self, record):
        self.fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self):
        self.fh.close()


class Run:
    """A resolved config bound to its output directory."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.out = cfg.out
        os.makedirs(self.out, exist_ok=True)
        with open(self.path(RESOLVED), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dump_config(cfg))

    def path(self, name):
        return os.path.join(self.out, name)

    def need(self, name):
        p = self.path(name)
        if not os.path.exists(p):
            raise MissingArtifact(f"{name} not found in {self.out}; run the stage that produces it first")
        return p

    def corpus_paths(self):
        if self.cfg.ontology is not None:
            for p in (self.cfg.ontology, self.cfg.dataset):
                if not os.path.exists(p):
                    raise MissingArtifact(f"input file not found: {p}")
            return self.cfg.ontology, self.cfg.dataset
        return self.need(ONTOLOGY), self.need(DATASET)

    def record(self, stage, inputs, outputs):
        """Merge one stage's input and output hashes into the manifest."""
        path = self.path(MANIFEST)
        manifest = {"config_hash": self.cfg.digest(), "stages": {}}
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                manifest = json.load(fh)
        manifest["config_hash"] = self.cfg.digest()

        def rel(p):
            return os.path.relpath(p, self.out) if os.path.abspath(p).startswith(os.path.abspath(self.out)) else p
        manifest["stages"][stage] = {"inputs": {rel(p): sha256(p) for p in inputs},
                                     "outputs": {rel(p): sha256(p) for p in outputs}}
        _write_json(path, manifest)


# -- shared loaders --------------------------------------------------------

def load_corpus(run):
    onto_path, data_path = run.corpus_paths()
    ont = pad_virtual_leaves(read_ontology_csv(onto_path), recorded=raw_codes(data_path))
    ds, report = load_dataset(data_path, ont.code_index, run.cfg.strict)
    if report.dropped_codes or report.resorted_patients:
        logger.info("dataset: dropped %d unknown codes, re-sorted %d patients",
                    report.dropped_codes, report.resorted_patients)
    return ont, ds, [onto_path, data_path]


def load_splits(run):
    with open(run.need(SPLITS), encoding="utf-8") as fh:
        return Splits.from_obj(json.load(fh))


def load_model(run, ont, name):
    params, header = checkpoint.load(run.need(name))
    A = read_adjacency_csv(run.need(GRAPH), ont.n_codes)
    meta = header["meta"]
    cfg = ModelConfig(**meta["model"])
    return SherbetModel(ont, normalize_adjacency(A, meta["phi"]), cfg, params), header


def save_model(run, model, name, stage):
    meta = {"model": asdict(model.config), "phi": run.cfg.phi, "task": run.cfg.task}
    checkpoint.save(run.path(name), model.params, stage, run.cfg.digest(), meta)


# -- stages ----------------------------------------------------------------

def gen_synth(run):
    edges, ds = generate_synthetic(run.cfg.synth)
    write_ontology_csv(load_ontology(edges), run.path(ONTOLOGY))
    save_dataset(ds, run.path(DATASET))
    run.record("gen-synth", [], [run.path(ONTOLOGY), run.path(DATASET)])
    logger.info("gen-synth: %d patients written", len(ds))


def embed_hier(run):
    cfg = run.cfg
    ont, _, inputs = load_corpus(run)
    outputs = [run.path(EMBEDDINGS)]
    if cfg.ablations.hyperbolic:
        log = JsonLines(run.path("hyperbolic_log.jsonl"))
        try:
            E, _, _ = train_hyperbolic(ont, cfg.hyperbolic,
                                       lambda epoch, loss, lr, _: log({"epoch": epoch, "loss": loss, "lr": lr, "val": {}}))
        finally:
            log.close()
        outputs.append(run.path("hyperbolic_log.jsonl"))
    else:
        # flat random initialization in place of the hierarchy-aware one
        E = np.random.default_rng([cfg.seed, 30]).uniform(-0.05, 0.05, size=(ont.n_codes, cfg.hyperbolic.dim))
    write_embedding_csv(run.path(EMBEDDINGS), ont.leaf_labels(), E)
    run.record("embed-hier", inputs, outputs)
    logger.info("embed-hier: %d x %d embeddings", *E.shape)


def build_graph_stage(run):
    cfg = run.cfg
    ont, ds, inputs = load_corpus(run)
    sp = split(ds, cfg.splits, cfg.seed)
    pool = [a for pid in sp.pretrain_ids() for a in ds.encode(ds[pid])]
    A, _ = build_adjacency(count_cooccurrence(pool, n_codes=ont.n_codes), cfg.phi)
    write_adjacency_csv(run.path(GRAPH), A)
    _write_json(run.path(SPLITS), sp.to_obj())
    run.record("build-graph", inputs, [run.path(GRAPH), run.path(SPLITS)])
    logger.info("build-graph: %d train, %d valid, %d test, %d single-admission patients",
                len(sp.train), len(sp.valid), len(sp.test), len(sp.single))


def pretrain_ssl(run):
    cfg = run.cfg
    ont, ds, inputs = load_corpus(run)
    labels, E = read_embedding_csv(run.need(EMBEDDINGS))
    if labels != ont.leaf_labels():
        raise SchemaError("embedding rows do not match the ontology's code order")
    A = read_adjacency_csv(run.need(GRAPH), ont.n_codes)
    sp = load_splits(run)
    model = SherbetModel.create(ont, normalize_adjacency(A, cfg.phi), E, cfg.model,
                                np.random.default_rng([cfg.seed, 40]))
    inputs += [run.path(EMBEDDINGS), run.path(GRAPH), run.path(SPLITS)]
    outputs = [run.path(SSL_CKPT)]
    stage = "init"
    if cfg.ablations.ssl:
        log = JsonLines(run.path("ssl_log.jsonl"))
        try:
            curve = run_ssl(model, [ds.encode(ds[pid]) for pid in sp.pretrain_ids()], cfg.ssl, log)
        finally:
            log.close()
        outputs.append(run.path("ssl_log.jsonl"))
        stage = "ssl"
        logger.info("pretrain-ssl: loss %.4f -> %.4f", curve[0], curve[-1])
    save_model(run, model, SSL_CKPT, stage)
    run.record("pretrain-ssl", inputs, outputs)


def _label_mask(cfg, ds, ont):
    return diagnosis_label_space(ds, ont.n_codes) if cfg.task == "diagnosis" else None


def finetune(run):
    cfg = run.cfg
    ont, ds, inputs = load_corpus(run)
    model, _ = load_model(run, ont, SSL_CKPT)
    sp = load_splits(run)
    train = make_task_instances(ds, sp.train, cfg.task, ont.n_codes)
    valid = make_task_instances(ds, sp.valid, cfg.task, ont.n_codes)
    log = JsonLines(run.path("finetune_log.jsonl"))
    try:
        run_finetune(model, train, valid, cfg.task, cfg.finetune, log=log,
                     mask=_label_mask(cfg, ds, ont), threshold=cfg.threshold)
    finally:
        log.close()
    save_model(run, model, FINETUNE_CKPT, "finetune")
    run.record("finetune", inputs + [run.path(SSL_CKPT), run.path(GRAPH), run.path(SPLITS)],
               [run.path(FINETUNE_CKPT), run.path("finetune_log.jsonl")])


def evaluate(run, ckpt=FINETUNE_CKPT):
    cfg = run.cfg
    ont, ds, inputs = load_corpus(run)
    model, header = load_model(run, ont, ckpt)
    sp = load_splits(run)
    test = make_task_instances(ds, sp.test, cfg.task, ont.n_codes)
    if not model.has_head:
        logger.warning("checkpoint %s has no task head; scoring with an untrained one", ckpt)
        model.add_head(test[0].label.size)
    scores = model.predict([inst.inputs for inst in test])
    report = evaluate_scores(cfg.task, scores, np.stack([inst.label for inst in test]), cfg.threshold,
                             mask=_label_mask(cfg, ds, ont))
    obj = report.to_obj()
    obj["split"] = "test"
    obj["checkpoint_stage"] = header["stage"]
    _write_json(run.path(METRICS), obj)
    run.record("evaluate", inputs + [run.path(ckpt), run.path(SPLITS)], [run.path(METRICS)])
    logger.info("evaluate: %s", json.dumps({k: v for k, v in obj.items() if k not in ("task", "split")}))
    return obj


def explain(run, ckpt=FINETUNE_CKPT):
    cfg = run.cfg
    ont, ds, inputs = load_corpus(run)
    model, _ = load_model(run, ont, ckpt)
    sp = load_splits(run)
    labels = ont.leaf_labels()
    os.makedirs(run.path(TRACES), exist_ok=True)
    outputs = []
    for pid in sp.test[:cfg.explain_patients]:
        rec = ds[pid]
        trace = export_trace(rec, model, cfg.explain_top_k, labels, ds.encode(rec, rec.admissions[:-1]))
        path = os.path.join(run.path(TRACES), f"{pid}.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(trace.check().dumps())
        outputs.append(path)
    write_hidden_csv(run.path(HIDDEN), labels, model.hidden_embeddings())
    write_embedding_csv(run.path(CODE_EMBEDDINGS), labels, model.params["E"])
    outputs += [run.path(HIDDEN), run.path(CODE_EMBEDDINGS)]
    run.record("explain", inputs + [run.path(ckpt), run.path(SPLITS)], outputs)
    logger.info("explain: %d traces", len(outputs) - 2)


STAGE_FUNCS = {
    "gen-synth": gen_synth,
    "embed-hier": embed_hier,
    "build-graph": build_graph_stage,
    "pretrain-ssl": pretrain_ssl,
    "finetune": finetune,
    "evaluate": evaluate,
    "explain": explain,
}


def pipeline(run):
    for stage in STAGES:
        if stage == "gen-synth" and run.cfg.ontology is not None:
            continue
        STAGE_FUNCS[stage](run)
    with open(run.path(METRICS), encoding="utf-8") as fh:
        return json.load(fh)
