"""EHR records with JSON I/O and splitting, plus a seeded synthetic corpus."""
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, EmptyAdmission, InsufficientPatients, SchemaError,
                     SingleAdmissionPatientInFineTune, UnknownCodeInStrictMode)
from .ontology import ROOT_TOKEN

HF_PREFIX = "428"
TASKS = ("diagnosis", "heart-failure")


@dataclass(frozen=True)
class Admission:
    t: int
    codes: tuple


@dataclass(frozen=True)
class PatientRecord:
    id: str
    admissions: tuple

    @property
    def n_admissions(self):
        return len(self.admissions)


@dataclass
class LoadReport:
    n_patients: int = 0
    n_admissions: int = 0
    resorted_patients: int = 0
    dropped_codes: int = 0


@dataclass
class EhrDataset:
    patients: list
    code_index: dict = None

    def __post_init__(self):
        self._by_id = {p.id: p for p in self.patients}

    def __len__(self):
        return len(self.patients)

    def __getitem__(self, pid):
        return self._by_id[pid]

    def single(self):
        return [p for p in self.patients if p.n_admissions == 1]

    def multiple(self):
        return [p for p in self.patients if p.n_admissions > 1]

    def encode(self, patient, admissions=None):
        """Admissions of ``patient`` as sorted unique arrays of code columns."""
        adms = patient.admissions if admissions is None else admissions
        return [np.array(sorted({self.code_index[c] for c in a.codes}), dtype=np.int64) for a in adms]


def _validate(obj):
    if not isinstance(obj, dict) or not isinstance(obj.get("patients"), list):
        raise SchemaError("top level must be an object with a 'patients' list")
    for p in obj["patients"]:
        if not isinstance(p, dict) or not isinstance(p.get("id"), str):
            raise SchemaError("each patient needs a string 'id'")
        adms = p.get("admissions")
        if not isinstance(adms, list) or not adms:
            raise SchemaError(f"patient {p['id']!r}: 'admissions' must be a non-empty list")
        for a in adms:
            if not isinstance(a, dict) or not isinstance(a.get("codes"), list):
                raise SchemaError(f"patient {p['id']!r}: admission needs a 'codes' list")
            if not isinstance(a.get("t", 0), int) or isinstance(a.get("t", 0), bool):
                raise SchemaError(f"patient {p['id']!r}: 't' must be an integer")
            if not all(isinstance(c, str) for c in a["codes"]):
                raise SchemaError(f"patient {p['id']!r}: codes must be strings")


def dataset_from_obj(obj, code_index=None, strict=True):
    _validate(obj)
    report = LoadReport()
    patients = []
    seen = set()
    for p in obj["patients"]:
        if p["id"] in seen:
            raise SchemaError(f"duplicate patient id {p['id']!r}")
        seen.add(p["id"])
        adms = []
        for k, a in enumerate(p["admissions"]):
            if not a["codes"]:
                raise EmptyAdmission(f"patient {p['id']!r} admission {k} has no codes")
            codes = []
            for c in a["codes"]:
                if code_index is not None and c not in code_index:
                    if strict:
                        raise UnknownCodeInStrictMode(f"patient {p['id']!r}: unknown code {c!r}")
                    report.dropped_codes += 1
                    continue
                if c not in codes:
                    codes.append(c)
            if codes:
                adms.append(Admission(int(a.get("t", k)), tuple(codes)))
        if not adms:
            continue
        ordered = sorted(adms, key=lambda a: a.t)
        if ordered != adms:
            report.resorted_patients += 1
        patients.append(PatientRecord(p["id"], tuple(ordered)))
    report.n_patients = len(patients)
    report.n_admissions = sum(p.n_admissions for p in patients)
    return EhrDataset(patients, code_index), report


def load_dataset(path, code_index=None, strict=True):
    """Read and validate a dataset file; returns ``(dataset, report)``."""
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from None
    return dataset_from_obj(obj, code_index, strict)


def dataset_to_obj(ds):
    return {"patients": [{"id": p.id, "admissions": [{"t": a.t, "codes": list(a.codes)} for a in p.admissions]}
                         for p in ds.patients]}


def save_dataset(ds, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(dataset_to_obj(ds), fh, separators=(",", ":"))
        fh.write("\n")


def raw_codes(path):
    """Every code string in a dataset file, without validation against an ontology."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    _validate(obj)
    return sorted({c for p in obj["patients"] for a in p["admissions"] for c in a["codes"]})


# -- splitting -------------------------------------------------------------

@dataclass
class Splits:
    train: list
    valid: list
    test: list
    single: list

    def pretrain_ids(self):
        """Patients allowed into graph counting and self-supervision."""
        return self.single + self.train

    def to_obj(self):
        return {"train": self.train, "valid": self.valid, "test": self.test, "single": self.single}

    @classmethod
    def from_obj(cls, obj):
        return cls(obj["train"], obj["valid"], obj["test"], obj["single"])


def split(dataset, counts, seed):
    """Randomly partition multiple-admission patients into train/valid/test."""
    multi = sorted(p.id for p in dataset.multiple())
    n_train, n_valid, n_test = counts
    if n_train + n_valid + n_test > len(multi):
        raise InsufficientPatients(f"asked for {n_train + n_valid + n_test} patients, only {len(multi)} "
                                   "have multiple admissions")
    perm = np.random.default_rng(seed).permutation(len(multi))
    ids = [multi[k] for k in perm]
    return Splits(sorted(ids[:n_train]), sorted(ids[n_train:n_train + n_valid]),
                  sorted(ids[n_train + n_valid:n_train + n_valid + n_test]),
                  sorted(p.id for p in dataset.single()))


# -- task instances --------------------------------------------------------

@dataclass
class TaskInstance:
    patient_id: str
    inputs: list   # code-column arrays for admissions 1..T-1
    label: np.ndarray


def diagnosis_label_space(dataset, n_codes):
    """Mask over ``C`` of codes seen in any multiple-admission patient."""
    mask = np.zeros(n_codes, dtype=bool)
    for p in dataset.multiple():
        for a in p.admissions:
            for c in a.codes:
                mask[dataset.code_index[c]] = True
    return mask


def is_heart_failure(code):
    return code.startswith(HF_PREFIX)


def make_task_instances(dataset, patients, task, n_codes):
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    out = []
    for p in patients:
        if isinstance(p, str):
            p = dataset[p]
        if p.n_admissions < 2:
            raise SingleAdmissionPatientInFineTune(f"patient {p.id!r} has a single admission")
        inputs = dataset.encode(p, p.admissions[:-1])
        last = p.admissions[-1]
        if task == "diagnosis":
            label = np.zeros(n_codes)
            label[[dataset.code_index[c] for c in last.codes]] = 1.0
        else:
            label = np.array([float(any(is_heart_failure(c) for c in last.codes))])
        out.append(TaskInstance(p.id, inputs, label))
    return out


# -- synthetic corpus -----------------------------------------------------

@dataclass
class SynthConfig:
    """Knobs of the synthetic EHR generator.

    The defaults give a desk-scale corpus whose single/multiple patient
    ratio and admissions per multiple-admission patient follow the shape of
    a large ICU corpus at a fraction of its size.
    """
    n_single: int = 3000
    n_multiple: int = 600
    n_chapters: int = 7
    categories_per_chapter: tuple = (3, 5)
    leaves_per_category: tuple = (4, 8)
    shallow_fraction: float = 0.08
    n_clusters: int = 12
    cross_cluster_rate: float = 0.15
    affinity: float = 0.95
    concentration: float = 0.1
    hf_boost: float = 0.5
    extra_admissions_mean: float = 0.66
    max_admissions: int = 12
    codes_per_admission_mean: float = 6.0
    max_codes_per_admission: int = 20
    drift: float = 0.05
    progression: float = 0.1
    recurrence: float = 0.3
    seed: int = 0

    def check(self):
        positive = ("n_chapters", "n_clusters", "codes_per_admission_mean", "concentration",
                    "max_admissions", "max_codes_per_admission")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"synthetic config field {name!r} must be positive")
        for name in ("affinity", "cross_cluster_rate", "drift", "progression", "recurrence", "shallow_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"synthetic config field {name!r} must lie in [0, 1]")
        if self.n_single < 0 or self.n_multiple < 0 or self.extra_admissions_mean < 0:
            raise ConfigError("patient counts and admission means must be non-negative")
        if self.seed is None:
            raise ConfigError("synthetic generation needs a seed")


def _synth_tree(cfg, rng):
    """Three-level code tree under a root; returns ``(edges, codes, category_of, hf_slot)``."""
    edges = [(ROOT_TOKEN, "ROOT_DX")]
    n_cat = [int(rng.integers(cfg.categories_per_chapter[0], cfg.categories_per_chapter[1] + 1))
             for _ in range(cfg.n_chapters)]
    total = sum(n_cat)
    pool = [c for c in range(1, 1000) if c != int(HF_PREFIX)]
    numbers = sorted(int(x) for x in rng.choice(pool, size=total - 1, replace=False))
    hf_slot = int(rng.integers(total))
    numbers.insert(hf_slot, int(HF_PREFIX))
    codes, category_of = [], []
    k = 0
    for ch in range(cfg.n_chapters):
        chapter = f"CH{ch + 1:02d}"
        edges.append(("ROOT_DX", chapter))
        for _ in range(n_cat[ch]):
            cat = f"{numbers[k]:03d}"
            edges.append((chapter, cat))
            if cat != HF_PREFIX and rng.random() < cfg.shallow_fraction:
                codes.append(cat)  # recorded at category level, padded later
                category_of.append(k)
            else:
                n_leaf = int(rng.integers(cfg.leaves_per_category[0], cfg.leaves_per_category[1] + 1))
                for j in range(n_leaf):
                    leaf = f"{cat}.{j}"
                    edges.append((cat, leaf))
                    codes.append(leaf)
                    category_of.append(k)
            k += 1
    return edges, codes, np.array(category_of), hf_slot


def generate_synthetic(cfg=None):
    """Return ``(ontology_edges, dataset)`` for ``cfg``; deterministic under ``cfg.seed``."""
    cfg = cfg or SynthConfig()
    cfg.check()
    rng = np.random.default_rng([cfg.seed, 0])
    edges, codes, category_of, hf_cat = _synth_tree(cfg, rng)
    n_codes = len(codes)
    n_cat = int(category_of.max()) + 1

    # contiguous category chunks keep clusters mostly inside chapters
    chunk = np.array_split(np.arange(n_cat), min(cfg.n_clusters, n_cat))
    cluster_of_cat = np.empty(n_cat, dtype=np.int64)
    for k, cats in enumerate(chunk):
        cluster_of_cat[cats] = k
    n_clusters = len(chunk)
    cluster_of = cluster_of_cat[category_of].copy()
    hf_codes = {i for i, c in enumerate(codes) if c.startswith(HF_PREFIX)}
    for i in range(n_codes):
        if i not in hf_codes and rng.random() < cfg.cross_cluster_rate:
            cluster_of[i] = rng.integers(n_clusters)
    target = int(cluster_of_cat[hf_cat])
    members = [np.flatnonzero(cluster_of == k) for k in range(n_clusters)]
    popularity = [rng.zipf(1.6, size=m.size).astype(float) ** -1 + 0.2 for m in members]
    popularity = [w / w.sum() for w in popularity]
    # each cluster drifts toward one other cluster over time
    successor = (np.arange(n_clusters) + rng.integers(1, max(n_clusters, 2), size=n_clusters)) % n_clusters
    alpha = np.full(n_clusters, cfg.concentration)
    alpha[target] += cfg.hf_boost

    def admission(prng, mix, previous):
        primary = prng.choice(n_clusters, p=mix)
        n = 1 + prng.poisson(cfg.codes_per_admission_mean - 1.0)
        n = int(min(n, cfg.max_codes_per_admission))
        # chronic codes carry over from the previous admission
        chosen = [c for c in previous if prng.random() < cfg.recurrence][:n]
        for _ in range(n - len(chosen)):
            if prng.random() < cfg.affinity and members[primary].size:
                c = members[primary][prng.choice(members[primary].size, p=popularity[primary])]
            else:
                c = prng.integers(n_codes)
            if int(c) not in chosen:
                chosen.append(int(c))
        return sorted(chosen)

    def evolve(prng, mix):
        moved = mix * cfg.progression
        nxt = mix - moved
        np.add.at(nxt, successor, moved)
        nxt = (1.0 - cfg.drift) * nxt + cfg.drift * prng.dirichlet(alpha)
        return nxt / nxt.sum()

    patients = []
    n_total = cfg.n_single + cfg.n_multiple
    multi_flags = np.zeros(n_total, dtype=bool)
    multi_flags[rng.choice(n_total, size=cfg.n_multiple, replace=False)] = True
    for k in range(n_total):
        prng = np.random.default_rng([cfg.seed, 1, k])
        mix = prng.dirichlet(alpha)
        T = 1
        if multi_flags[k]:
            T = int(min(2 + prng.poisson(cfg.extra_admissions_mean), cfg.max_admissions))
        adms, t, previous = [], 0, []
        for tau in range(T):
            previous = admission(prng, mix, previous)
            adms.append(Admission(t, tuple(codes[c] for c in previous)))
            t += 1 + int(prng.integers(0, 365))
            mix = evolve(prng, mix)
        patients.append(PatientRecord(f"p{k:06d}", tuple(adms)))
    return edges, EhrDataset(patients)


@dataclass
class SynthSummary:
    n_single: int
    n_multiple: int
    mean_admissions_multiple: float
    mean_codes_per_admission: float
    n_codes: int
    hf_positive_rate: float = field(default=float("nan"))


def summarize(ds):
    multi = ds.multiple()
    adms = [a for p in ds.patients for a in p.admissions]
    codes = {c for a in adms for c in a.codes}
    hf = [any(is_heart_failure(c) for c in p.admissions[-1].codes) for p in multi]
    return SynthSummary(len(ds.single()), len(multi),
                        float(np.mean([p.n_admissions for p in multi])) if multi else 0.0,
                        float(np.mean([len(a.codes) for a in adms])) if adms else 0.0,
                        len(codes), float(np.mean(hf)) if hf else float("nan"))
