import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..adapters.datasets.idx import load_idx_dataset
from ..adapters.oracles.factory import OracleFactory
from .errors import DimensionMismatchError, EquivalenceError, ExtractionError
from .evaluation import (
    align_and_precision,
    fidelity,
    max_logit_gap,
    predict_labels,
    transfer_stats,
    uniform_inputs,
)
from .extraction import extract
from .hardness import build_rectangle_net, build_subsetsum_net, brute_force_equiv
from .hybrid import refine
from .models import (
    AttackConfig,
    ExtractionConfig,
    LabeledDataset,
    QueryLedger,
    RectangleSpec,
    RefinementConfig,
    RunReport,
    TrainConfig,
    TwoLayerNet,
)
from .oracle import OracleHandle
from .serialization import load_model, save_model
from .training import gen_synthetic, train_victim

logger = logging.getLogger(__name__)

ORACLE_PREFIXES = ("local:", "tcp:", "http://", "https://")


def write_report(report: RunReport, path: Optional[str]) -> None:
    """JSON with sorted keys, so reruns diff cleanly."""
    if not path:
        return
    Path(path).write_text(
        json.dumps(report.model_dump(mode="json"), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    logger.info(f"Report written to {path}")


class Orchestrator:
    """Runs one command end to end and returns its report."""

    def __init__(self, factory: Optional[OracleFactory] = None):
        self.factory = factory or OracleFactory()

    def _oracle(
        self, spec: str, ledger: Optional[QueryLedger] = None, d: Optional[int] = None
    ) -> OracleHandle:
        return self.factory.connect(spec, ledger=ledger, d=d)

    def _model_or_oracle(self, spec: str) -> Union[TwoLayerNet, OracleHandle]:
        if spec.startswith(ORACLE_PREFIXES):
            return self._oracle(spec)
        return load_model(spec)

    def _dataset(self, task: str, d: int, k: int, n: int, seed: int) -> LabeledDataset:
        if task.startswith("idx:"):
            images, _, labels = task[len("idx:") :].partition(",")
            if not labels:
                raise ValueError("idx task needs idx:<images>,<labels>")
            return load_idx_dataset(images, labels, k)
        return gen_synthetic(d, k, n, seed, task)

    def train_victim(
        self,
        cfg: TrainConfig,
        task: str,
        n: int,
        seed: int,
        out: str,
    ) -> RunReport:
        started = time.perf_counter()
        data = self._dataset(task, cfg.d, cfg.k, n, seed)
        if data.d != cfg.d:
            raise DimensionMismatchError("dataset input width", cfg.d, data.d)
        result = train_victim(cfg, data)
        save_model(result.net, out)

        metrics: Dict[str, Any] = {
            "final_loss": result.final_loss,
            "train_accuracy": result.accuracy,
            "losses": result.losses,
        }
        if not task.startswith("idx:"):
            test = gen_synthetic(cfg.d, cfg.k, max(n // 4, 1), seed + 1, task, task_seed=seed)
            metrics["test_accuracy"] = float(
                np.mean(np.argmax(test.targets, axis=1) == predict_labels(result.net, test.inputs))
            )
        return RunReport(
            command="train-victim",
            config={**cfg.model_dump(), "task": task, "n": n},
            seeds={"data": seed, "init": cfg.init_seed, "shuffle": cfg.shuffle_seed},
            metrics=metrics,
            timings={"train": time.perf_counter() - started},
            artifacts={"model": out},
        )

    def extract(
        self, oracle_spec: str, d: int, h: int, cfg: ExtractionConfig, out: str
    ) -> RunReport:
        started = time.perf_counter()
        run_config = {**cfg.model_dump(), "oracle": oracle_spec, "d": d, "h": h}
        oracle = self._oracle(oracle_spec, d=d)
        try:
            report = extract(oracle, d, h, cfg)
        except ExtractionError as e:
            e.report = RunReport(
                command="extract",
                config=run_config,
                seeds={"extract": cfg.seed},
                ledger=e.partial.get("ledger"),
                metrics={
                    "error": str(e),
                    "neurons_found": len(e.partial.get("neurons", [])),
                    "partial_neurons": [
                        {
                            "row": n.row.tolist(),
                            "bias": n.bias,
                            "pivot": n.pivot,
                            "confidence_bits": n.confidence_bits,
                            "low_confidence": n.low_confidence,
                        }
                        for n in e.partial.get("neurons", [])
                    ],
                },
                timings={"extract": time.perf_counter() - started},
            )
            raise
        finally:
            oracle.close()
        save_model(report.net, out)
        metrics = report.summary(d, h)
        metrics["neurons"] = [
            {
                "pivot": n.pivot,
                "global_sign": n.global_sign,
                "confidence_bits": n.confidence_bits,
                "low_confidence": n.low_confidence,
                "critical_point_t": n.source.t,
            }
            for n in report.neurons
        ]
        return RunReport(
            command="extract",
            config=run_config,
            seeds={"extract": cfg.seed},
            ledger=report.ledger,
            metrics=metrics,
            timings={"extract": time.perf_counter() - started},
            artifacts={"model": out},
        )

    def refine(self, model: str, oracle_spec: str, cfg: RefinementConfig, out: str) -> RunReport:
        started = time.perf_counter()
        net = load_model(model)
        oracle = self._oracle(oracle_spec, d=net.d)
        try:
            result = refine(net, oracle, cfg)
            check = uniform_inputs(net.d, cfg.dataset_size, cfg.seed + 1, cfg.low, cfg.high)
            before = fidelity(net, oracle, inputs=check)
            after = fidelity(result.net, oracle, inputs=check)
        finally:
            oracle.close()
        save_model(result.net, out)
        return RunReport(
            command="refine",
            config={**cfg.model_dump(), "model": model, "oracle": oracle_spec},
            seeds={"refine": cfg.seed},
            ledger=oracle.ledger.snapshot(),
            metrics={
                "initial_objective": result.initial_objective,
                "final_objective": result.final_objective,
                "iterations": result.iterations,
                "restarts": result.restarts,
                "fidelity_before": before,
                "fidelity_after": after,
            },
            timings={"refine": time.perf_counter() - started},
            artifacts={"model": out},
        )

    def gen_rectangle(
        self, d: int, p: int, cells: List[int], active: Optional[List[int]], out: str
    ) -> RunReport:
        spec = RectangleSpec.from_cells(d, p, cells, active)
        rect = build_rectangle_net(spec)
        save_model(rect.net, out)
        return RunReport(
            command="gen-hard rectangle",
            config={"d": d, "p": p, "cells": cells, "active": spec.active},
            metrics={
                "width": rect.net.h,
                "k": spec.k,
                "a": spec.a.tolist(),
                "b": spec.b.tolist(),
                "final_relu": True,
            },
            artifacts={"model": out},
        )

    def gen_subsetsum(self, values: List[int], target: int, p: int, out: str) -> RunReport:
        net = build_subsetsum_net(values, target, p)
        save_model(net, out)
        return RunReport(
            command="gen-hard subsetsum",
            config={"set": values, "target": target, "p": p},
            metrics={"d": net.d, "width": net.h},
            artifacts={"model": out},
        )

    def verify_equiv(self, model_a: str, model_b: str, d: int) -> RunReport:
        started = time.perf_counter()
        result = brute_force_equiv(load_model(model_a), load_model(model_b), d)
        metrics: Dict[str, Any] = {"result": result.kind}
        if result.kind == "witness":
            metrics["witness"] = result.x.tolist()
            metrics["gap"] = result.gap
        else:
            metrics["checked"] = result.checked
        return RunReport(
            command="verify-equiv",
            config={"a": model_a, "b": model_b, "d": d, "mode": "bruteforce"},
            metrics=metrics,
            timings={"verify": time.perf_counter() - started},
        )

    def evaluate(
        self,
        metric: str,
        model_a: str,
        model_b: str,
        n: int,
        seed: int,
        attack: AttackConfig,
    ) -> RunReport:
        started = time.perf_counter()
        net_a = load_model(model_a)
        b = self._model_or_oracle(model_b)
        metrics: Dict[str, Any] = {}
        try:
            inputs = uniform_inputs(net_a.d, n, seed, attack.low, attack.high)
            if metric == "fidelity":
                metrics["fidelity"] = fidelity(net_a, b, inputs=inputs)
                metrics["max_logit_gap"] = max_logit_gap(net_a, b, inputs)
            elif metric == "precision":
                if not isinstance(b, TwoLayerNet):
                    raise EquivalenceError("precision needs a model file for --b, not an oracle")
                report = align_and_precision(net_a, b, n, seed)
                alignment = report.alignment
                metrics.update(
                    {
                        "mean_bits": report.mean_bits,
                        "bits_histogram": report.bits_histogram,
                        "logit_bits_mean": report.logit_bits_mean,
                        "logit_bits_histogram": report.logit_bits_histogram,
                        "permutation": alignment.permutation,
                        "scales": alignment.scales,
                        "signs": alignment.signs,
                        "unmatched": alignment.unmatched,
                    }
                )
            elif metric == "transfer":
                stats = transfer_stats(net_a, b, inputs, attack)
                metrics.update(stats.model_dump())
                metrics["rate"] = stats.rate
            else:
                raise ValueError(f"unknown metric {metric!r}")
        finally:
            if isinstance(b, OracleHandle):
                b.close()
        return RunReport(
            command=f"eval {metric}",
            config={"a": model_a, "b": model_b, "n": n, **attack.model_dump()},
            seeds={"eval": seed},
            ledger=b.ledger.snapshot() if isinstance(b, OracleHandle) else None,
            metrics=metrics,
            timings={"eval": time.perf_counter() - started},
        )
