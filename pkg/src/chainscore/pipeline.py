"""Staged evaluation pipeline with checkpointed, resumable runs.

A run lives under <out_dir>/<run_id>/ and advances through fixed stages:

    instances -> generate -> transform -> chain -> score

Each stage writes one JSONL checkpoint in input order and marks itself
complete in manifest.json. Rerunning skips completed stages; a killed run
recomputes its partial stage from the prior checkpoint. Because every model
call is cache-addressed and every artifact is written in input order with
canonical JSON, reruns and resumes are byte-identical (manifest timestamps
never enter stage artifacts).

Per-instance failures are recorded, not raised; a stage only aborts
(StageFailure) when more than failure_threshold of its inputs fail.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Iterable

from . import chain as chain_mod
from . import metrics as metrics_mod
from . import transform as transform_mod
from .gateway import (
    Gateway,
    GatewayError,
    LlmRequest,
    MockProvider,
    OpenAIProvider,
    ParseError,
    Provider,
    parse_generation,
)
from .ingest import ConfigError, DatasetConfig, load_dataset, render_document_block
from .model import (
    Dataset,
    EntityKey,
    EvalInstance,
    LongFormAnswer,
    Proposition,
    PropositionSet,
    ShortAnswer,
    Triple,
    dump_json_line,
    encode_fraction,
    validate_instance,
)
from .prompts import TemplateId

log = logging.getLogger(__name__)

STAGES = ("instances", "generate", "transform", "chain", "score")

MANIFEST_NAME = "manifest.json"


class StageFailure(RuntimeError):
    def __init__(self, stage: str, failures: int, total: int):
        self.stage = stage
        self.failures = failures
        self.total = total
        super().__init__(f"stage {stage}: {failures}/{total} instances failed")


@dataclass(frozen=True)
class ModelRoles:
    """Which model serves which role; unset roles fall back sensibly.

    transformer and reinfer default to the generator (self-assessment);
    extractor (triples + question NER) defaults to the judge model.
    """

    generator: str = "gpt-4o-mini"
    transformer: str | None = None
    extractor: str | None = None
    judge: str = "gpt-4o-mini"
    reinfer: str | None = None

    def resolved(self) -> dict[str, str]:
        return {
            "generator": self.generator,
            "transformer": self.transformer or self.generator,
            "extractor": self.extractor or self.judge,
            "judge": self.judge,
            "reinfer": self.reinfer or self.generator,
        }

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "generator": self.generator,
            "transformer": self.transformer,
            "extractor": self.extractor,
            "judge": self.judge,
            "reinfer": self.reinfer,
        }

    @staticmethod
    def from_json_dict(obj: dict[str, Any]) -> "ModelRoles":
        return ModelRoles(
            generator=obj.get("generator", "gpt-4o-mini"),
            transformer=obj.get("transformer"),
            extractor=obj.get("extractor"),
            judge=obj.get("judge", "gpt-4o-mini"),
            reinfer=obj.get("reinfer"),
        )


@dataclass(frozen=True)
class RunConfig:
    dataset: Dataset
    input_path: str
    out_dir: str
    cache_dir: str
    setting: str = "default"
    limit: int | None = None
    models: ModelRoles = field(default_factory=ModelRoles)
    run_id: str | None = None
    concurrency: int = 1
    seed: int | None = None
    temperature: float = 1.0
    sentence_fallback: bool = False
    prefer_shortest: bool = True
    search_budget: int = chain_mod.DEFAULT_WORK_BUDGET
    failure_threshold: float = 0.2
    mock_script: str | None = None

    def semantic_dict(self) -> dict[str, Any]:
        """The config fields that influence results (hashed for run ids)."""
        return {
            "dataset": self.dataset.value,
            "input_path": self.input_path,
            "setting": self.setting,
            "limit": self.limit,
            "models": self.models.resolved(),
            "seed": self.seed,
            "temperature": self.temperature,
            "sentence_fallback": self.sentence_fallback,
            "prefer_shortest": self.prefer_shortest,
            "search_budget": self.search_budget,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def resolved_run_id(self) -> str:
        return self.run_id or f"run-{self.config_hash()[:12]}"

    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.resolved_run_id()

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset.value,
            "input_path": self.input_path,
            "out_dir": self.out_dir,
            "cache_dir": self.cache_dir,
            "setting": self.setting,
            "limit": self.limit,
            "models": self.models.to_json_dict(),
            "run_id": self.resolved_run_id(),
            "concurrency": self.concurrency,
            "seed": self.seed,
            "temperature": self.temperature,
            "sentence_fallback": self.sentence_fallback,
            "prefer_shortest": self.prefer_shortest,
            "search_budget": self.search_budget,
            "failure_threshold": self.failure_threshold,
            "mock_script": self.mock_script,
        }

    @staticmethod
    def from_json_dict(obj: dict[str, Any]) -> "RunConfig":
        return RunConfig(
            dataset=Dataset(obj["dataset"]),
            input_path=obj["input_path"],
            out_dir=obj["out_dir"],
            cache_dir=obj["cache_dir"],
            setting=obj.get("setting", "default"),
            limit=obj.get("limit"),
            models=ModelRoles.from_json_dict(obj.get("models", {})),
            run_id=obj.get("run_id"),
            concurrency=obj.get("concurrency", 1),
            seed=obj.get("seed"),
            temperature=obj.get("temperature", 1.0),
            sentence_fallback=obj.get("sentence_fallback", False),
            prefer_shortest=obj.get("prefer_shortest", True),
            search_budget=obj.get("search_budget", chain_mod.DEFAULT_WORK_BUDGET),
            failure_threshold=obj.get("failure_threshold", 0.2),
            mock_script=obj.get("mock_script"),
        )


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    _atomic_write(path, "".join(dump_json_line(r) + "\n" for r in rows))


def read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def build_gateway(config: RunConfig, provider: Provider | None = None) -> Gateway:
    if provider is None:
        if config.mock_script:
            provider = MockProvider.from_jsonl(config.mock_script)
        else:
            api_key = os.environ.get("OPENAI_API_KEY")
            if not api_key:
                raise ConfigError(
                    "no provider: set OPENAI_API_KEY or pass a mock script"
                )
            provider = OpenAIProvider(
                api_key=api_key,
                base_url=os.environ.get("OPENAI_BASE_URL", "https://api.openai.com/v1"),
            )
    return Gateway(provider, config.cache_dir, concurrency=config.concurrency)


class Runner:
    """Executes stages in order, persisting checkpoints and the manifest."""

    def __init__(self, config: RunConfig, provider: Provider | None = None):
        self.config = config
        self.run_dir = config.run_dir()
        self.manifest_path = self.run_dir / MANIFEST_NAME
        self.gateway = build_gateway(config, provider)
        self.manifest = self._load_or_create_manifest()

    @staticmethod
    def from_run_dir(
        run_dir: str | Path,
        provider: Provider | None = None,
        overrides: dict[str, Any] | None = None,
    ) -> "Runner":
        manifest_path = Path(run_dir) / MANIFEST_NAME
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        config_dict = dict(manifest["config"])
        config_dict.update(overrides or {})
        return Runner(RunConfig.from_json_dict(config_dict), provider)

    def _load_or_create_manifest(self) -> dict[str, Any]:
        if self.manifest_path.exists():
            with open(self.manifest_path, encoding="utf-8") as fh:
                manifest = json.load(fh)
            if manifest.get("config_hash") != self.config.config_hash():
                raise ConfigError(
                    f"run dir {self.run_dir} was created with a different config"
                )
            return manifest
        import datetime

        return {
            "run_id": self.config.resolved_run_id(),
            "config": self.config.to_json_dict(),
            "config_hash": self.config.config_hash(),
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "stages": {},
        }

    def _save_manifest(self) -> None:
        _atomic_write(self.manifest_path, json.dumps(self.manifest, indent=2) + "\n")

    def stage_path(self, stage: str) -> Path:
        name = "instances.jsonl" if stage == "instances" else f"stage_{stage}.jsonl"
        return self.run_dir / name

    def _stage_complete(self, stage: str) -> bool:
        entry = self.manifest["stages"].get(stage)
        return bool(entry and entry.get("complete") and self.stage_path(stage).exists())

    def _finish_stage(self, stage: str, rows: list[dict]) -> None:
        write_jsonl(self.stage_path(stage), rows)
        failures = sum(1 for r in rows if r.get("error"))
        self.manifest["stages"][stage] = {
            "path": self.stage_path(stage).name,
            "complete": True,
            "count": len(rows),
            "failures": failures,
        }
        self._save_manifest()
        fresh = [r for r in rows if not r.get("carried_error")]
        fresh_failures = sum(1 for r in fresh if r.get("error"))
        if fresh and fresh_failures / len(fresh) > self.config.failure_threshold:
            raise StageFailure(stage, fresh_failures, len(fresh))

    def _map_instances(self, worker: Callable[[Any], dict], inputs: list) -> list[dict]:
        if self.config.concurrency > 1:
            with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
                return list(pool.map(worker, inputs))
        return [worker(item) for item in inputs]

    def run(self, through: str = "score") -> dict[str, Any]:
        if through not in STAGES:
            raise ConfigError(f"unknown stage {through!r}")
        if not self._stage_complete("instances") and not os.path.exists(
            self.config.input_path
        ):
            raise ConfigError(f"dataset file not found: {self.config.input_path}")

        upto = STAGES.index(through)
        for stage in STAGES[: upto + 1]:
            if self._stage_complete(stage):
                continue
            log.info("running stage %s", stage)
            getattr(self, f"_stage_{stage}")()
        return self.manifest

    # ------------------------------------------------------------------
    # stages

    def _stage_instances(self) -> None:
        instances = load_dataset(
            DatasetConfig(
                dataset=self.config.dataset,
                path=self.config.input_path,
                setting=self.config.setting,
                limit=self.config.limit,
            )
        )
        self._finish_stage("instances", [i.to_json_dict() for i in instances])

    def _load_instances(self) -> list[EvalInstance]:
        return [EvalInstance.from_json_dict(r) for r in read_jsonl(self.stage_path("instances"))]

    def _stage_generate(self) -> None:
        models = self.config.models.resolved()

        def worker(instance: EvalInstance) -> dict:
            row: dict[str, Any] = {"instance_id": instance.instance_id}
            request = LlmRequest(
                model_id=models["generator"],
                template_id=TemplateId.GENERATE,
                bindings={
                    "question": instance.question,
                    "document_block": render_document_block(instance.documents),
                },
                temperature=self.config.temperature,
                seed=self.config.seed,
            )
            try:
                raw = self.gateway.complete(request).text
                answer, short = parse_generation(
                    raw, sentence_fallback=self.config.sentence_fallback
                )
            except (GatewayError, ParseError) as exc:
                row.update(
                    {"raw": "", "answer": None, "short_answer": None,
                     "error": f"{type(exc).__name__}: {exc}"}
                )
                return row
            row.update(
                {
                    "raw": raw,
                    "answer": answer.to_json_dict(),
                    "short_answer": short.text,
                    "error": None,
                }
            )
            return row

        rows = self._map_instances(worker, self._load_instances())
        self._finish_stage("generate", rows)

    def _stage_transform(self) -> None:
        models = self.config.models.resolved()
        instances = {i.instance_id: i for i in self._load_instances()}
        generated = read_jsonl(self.stage_path("generate"))

        def worker(gen_row: dict) -> dict:
            instance_id = gen_row["instance_id"]
            row: dict[str, Any] = {"instance_id": instance_id}
            if gen_row.get("error"):
                row.update(
                    {"propositions": [], "horn_expression": [], "triples": {},
                     "question_entities": [], "violations": [],
                     "error": gen_row["error"], "carried_error": True}
                )
                return row
            instance = instances[instance_id]
            answer = LongFormAnswer.from_json_dict(gen_row["answer"])
            try:
                prop_set = transform_mod.transform(
                    instance.question,
                    answer,
                    self.gateway,
                    models["transformer"],
                    temperature=self.config.temperature,
                    seed=self.config.seed,
                )
                triples: dict[str, list[dict]] = {}
                for prop in prop_set.propositions:
                    try:
                        extracted = transform_mod.extract_triples(
                            prop.text,
                            self.gateway,
                            models["extractor"],
                            temperature=self.config.temperature,
                            seed=self.config.seed,
                        )
                    except transform_mod.NoTriples:
                        extracted = []
                    triples[prop.label] = [t.to_json_dict() for t in extracted]
                entities = transform_mod.extract_question_entities(
                    instance.question,
                    self.gateway,
                    models["extractor"],
                    temperature=self.config.temperature,
                    seed=self.config.seed,
                )
            except (GatewayError, transform_mod.TransformError) as exc:
                row.update(
                    {"propositions": [], "horn_expression": [], "triples": {},
                     "question_entities": [], "violations": [],
                     "error": f"{type(exc).__name__}: {exc}"}
                )
                return row
            violations = validate_instance(instance, answer, prop_set)
            row.update(
                {
                    "propositions": [p.to_json_dict() for p in prop_set.propositions],
                    "horn_expression": list(prop_set.horn_expression),
                    "triples": triples,
                    "question_entities": [e.to_json_dict() for e in entities],
                    "violations": [
                        {"field": v.field, "rule": v.rule, "detail": v.detail}
                        for v in violations
                    ],
                    "error": None,
                }
            )
            return row

        rows = self._map_instances(worker, generated)
        self._finish_stage("transform", rows)

    def _stage_chain(self) -> None:
        instances = {i.instance_id: i for i in self._load_instances()}
        transformed = read_jsonl(self.stage_path("transform"))

        def worker(tr_row: dict) -> dict:
            instance_id = tr_row["instance_id"]
            row: dict[str, Any] = {"instance_id": instance_id}
            if tr_row.get("error"):
                row.update({"result": None, "error": tr_row["error"], "carried_error": True})
                return row
            instance = instances[instance_id]
            prop_set = PropositionSet(
                propositions=tuple(
                    Proposition.from_json_dict(p) for p in tr_row["propositions"]
                ),
                horn_expression=tuple(tr_row["horn_expression"]),
            )
            triples_by_label = {
                label: [Triple.from_json_dict(t) for t in rows]
                for label, rows in tr_row["triples"].items()
            }
            entities = [EntityKey.from_json_dict(e) for e in tr_row["question_entities"]]
            graph = chain_mod.build_graph(
                prop_set,
                triples_by_label,
                entities,
                instance.gold_answer,
                instance.gold_aliases,
            )
            result = chain_mod.build_backward_chain(
                graph,
                prefer_shortest=self.config.prefer_shortest,
                budget=self.config.search_budget,
            )
            row.update({"result": result.to_json_dict(), "error": None})
            return row

        rows = self._map_instances(worker, transformed)
        self._finish_stage("chain", rows)

    def _stage_score(self) -> None:
        models = self.config.models.resolved()
        instances = {i.instance_id: i for i in self._load_instances()}
        generated = {r["instance_id"]: r for r in read_jsonl(self.stage_path("generate"))}
        transformed = {r["instance_id"]: r for r in read_jsonl(self.stage_path("transform"))}
        chained = read_jsonl(self.stage_path("chain"))

        def zero_row(instance: EvalInstance, error: str, flag: str) -> dict:
            return {
                "instance_id": instance.instance_id,
                "dataset": instance.dataset.value if instance.dataset else None,
                "hop_count": instance.hop_count,
                "model": models["generator"],
                "status": None,
                "minimal_set": [],
                "proposition_labels": [],
                "completeness": 0,
                "conciseness": "0",
                "determinateness": 0,
                "reinferred_answer": None,
                "precision": "0",
                "recall": "0",
                "f1": "0",
                "n_citations": 0,
                "n_statements": 0,
                "flags": [flag],
                "error": error,
                "carried_error": True,
            }

        def worker(ch_row: dict) -> dict:
            instance_id = ch_row["instance_id"]
            instance = instances[instance_id]
            if ch_row.get("error"):
                return zero_row(instance, ch_row["error"], "upstream_failure")

            gen_row = generated[instance_id]
            tr_row = transformed[instance_id]
            answer = LongFormAnswer.from_json_dict(gen_row["answer"])
            short = ShortAnswer(text=gen_row["short_answer"])
            prop_set = PropositionSet.from_json_dict(
                {
                    "propositions": tr_row["propositions"],
                    "horn_expression": tr_row["horn_expression"],
                }
            )
            result = chain_mod.ChainResult.from_json_dict(ch_row["result"])

            flags: list[str] = []
            if result.budget_exhausted:
                flags.append("search_budget_exhausted")

            minimal = chain_mod.minimal_sufficient_set(result)
            comp = metrics_mod.completeness(minimal)
            conc = metrics_mod.conciseness(minimal, prop_set)

            try:
                dete, reinferred = metrics_mod.determinateness(
                    instance.question,
                    answer,
                    short,
                    self.gateway,
                    models["reinfer"],
                    temperature=self.config.temperature,
                    seed=self.config.seed,
                )
            except metrics_mod.ReinferParseError:
                dete, reinferred = 0, None
                flags.append("reinfer_parse_error")
            except GatewayError as exc:
                dete, reinferred = 0, None
                flags.append(f"reinfer_gateway_error:{type(exc).__name__}")

            judge = metrics_mod.JudgeContext(
                gateway=self.gateway,
                model_id=models["judge"],
                temperature=self.config.temperature,
                seed=self.config.seed,
            )
            try:
                attribution = metrics_mod.attribution_scores(
                    answer, instance.question, instance, judge
                )
            except GatewayError as exc:
                attribution = metrics_mod.AttributionScores(
                    precision=Fraction(0), recall=Fraction(0), f1=Fraction(0),
                    n_citations=len(answer.all_citations()),
                    n_statements=len(answer.statements),
                )
                flags.append(f"judge_gateway_error:{type(exc).__name__}")
            flags.extend(judge.flags)

            return {
                "instance_id": instance_id,
                "dataset": instance.dataset.value if instance.dataset else None,
                "hop_count": instance.hop_count,
                "model": models["generator"],
                "status": result.status.value,
                "minimal_set": minimal,
                "proposition_labels": list(prop_set.labels()),
                "completeness": comp,
                "conciseness": encode_fraction(conc),
                "determinateness": dete,
                "reinferred_answer": reinferred,
                "precision": encode_fraction(attribution.precision),
                "recall": encode_fraction(attribution.recall),
                "f1": encode_fraction(attribution.f1),
                "n_citations": attribution.n_citations,
                "n_statements": attribution.n_statements,
                "flags": sorted(set(flags)),
                "error": None,
            }

        rows = self._map_instances(worker, chained)
        self._finish_stage("score", rows)


def load_manifest(run_dir: str | Path) -> dict[str, Any]:
    with open(Path(run_dir) / MANIFEST_NAME, encoding="utf-8") as fh:
        return json.load(fh)
