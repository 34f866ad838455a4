#!/usr/bin/env python3
"""Temporal-separation benchmark: trains ToyNets on reversal pairs and writes a text report."""

import argparse
import logging
import os
import sys
import time
from concurrent import futures
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

sys.path.append(os.path.dirname(__file__))

from action_core import build_toynet, evaluate, gen_direction_dataset, train
from action_core.backbones import legal_stages
from action_core.cam import cam_peaks, class_activation_maps, tracking_hits
from action_core.config import NetConfig, TrainConfig, load_config_file, thread_cap
from action_core.dataset import ClipDataset, segment_indices

logger = logging.getLogger("benchmark_separation")

MODULES = ("none", "shift", "action")
NESTED_STAGES = (("stage1",), ("stage1", "stage2"), ("stage1", "stage2", "stage3"))
ACTION_MIN_TOP1 = 90.0
BLIND_MAX_TOP1 = 60.0
STAGE_TOLERANCE = 2.0
TRACKING_MIN_RATE = 0.70
CAM_CLIPS = 10


class SeparationBenchmark:
    """Runs the separation, stage-nesting and CAM-tracking experiments."""

    def __init__(
        self,
        seeds: Sequence[int] = (0, 1, 2),
        output_dir: str = "BenchmarkResults",
        train_cfg: Optional[TrainConfig] = None,
        net_cfg: Optional[NetConfig] = None,
        n_train: int = 50,
        n_val: int = 20,
        size: int = 32,
        frames: int = 40,
        noise: float = 0.05,
        concurrency: Optional[int] = None,
    ):
        self.seeds = tuple(seeds)
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.train_cfg = train_cfg or TrainConfig()
        self.net_cfg = net_cfg or NetConfig()
        self.n_train = n_train
        self.n_val = n_val
        self.size = size
        self.frames = frames
        self.noise = noise
        self.concurrency = thread_cap(concurrency)

    def _data(self, seed: int) -> Tuple[ClipDataset, ClipDataset]:
        common = dict(frames=self.frames, height=self.size, width=self.size, noise=self.noise, seed=seed)
        return (
            gen_direction_dataset(self.n_train, split="train", **common),
            gen_direction_dataset(self.n_val, split="val", **common),
        )

    def _fit(self, seed: int, module: str, stages: Optional[Sequence[str]] = None) -> Dict:
        data, val = self._data(seed)
        cfg = replace(self.train_cfg, seed=seed)
        net = build_toynet(
            module,
            self.net_cfg.widths,
            stages=stages,
            seed=seed,
            input_size=self.size,
            reduce_ratio=self.net_cfg.reduce_ratio,
            zero_gates=self.net_cfg.zero_gates,
        )
        started = time.perf_counter()
        history = train(net, data, cfg)
        result = evaluate(net, val, cfg.segments)
        logger.info("[Benchmark] seed %d %s %s: val top1 %.1f", seed, module, ",".join(net.stages), result.top1)
        return {
            "seed": seed,
            "module": module,
            "stages": list(net.stages),
            "loss": history[-1].loss,
            "train_top1": history[-1].top1,
            "val_top1": result.top1,
            "seconds": time.perf_counter() - started,
            "net": net,
            "val": val,
        }

    def _run_jobs(self, jobs: List[Tuple]) -> List[Dict]:
        with futures.ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            return list(pool.map(lambda job: self._fit(*job), jobs))

    def _tracking(self, run: Dict) -> float:
        net, val = run["net"], run["val"]
        segments = self.train_cfg.segments
        hits = []
        for index in range(min(CAM_CLIPS, len(val))):
            video = val.videos[index]
            raw = class_activation_maps(net, val.clip(index, segments), video.label)
            frames = segment_indices(video.num_frames, segments, "center")
            positions = np.asarray(video.meta["trajectory"])[frames]
            hits.append(tracking_hits(cam_peaks(raw), positions, self.size, raw.shape[-1]))
        return float(np.concatenate(hits).mean())

    def run_benchmark(self) -> Dict:
        """Run all experiments and write the report file."""
        print("=" * 120)
        print("TEMPORAL SEPARATION BENCHMARK")
        print("=" * 120)
        print(f"Seeds: {list(self.seeds)}, Modules: {list(MODULES)}, Epochs: {self.train_cfg.epochs}")
        print(f"Started: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        print("=" * 120)
        started = time.perf_counter()

        first = self.seeds[0]
        full = legal_stages("toynet", self.net_cfg.widths)
        separation_jobs = [(seed, module, None) for seed in self.seeds for module in MODULES]
        # the all-stage nesting run is the first seed's ACTION separation run
        nested_jobs = [(first, "action", stages) for stages in NESTED_STAGES if set(stages) < set(full)]
        fitted = self._run_jobs(separation_jobs + nested_jobs)
        separation = fitted[: len(separation_jobs)]
        by_seed: Dict[int, Dict[str, Dict]] = {}
        for run in separation:
            by_seed.setdefault(run["seed"], {})[run["module"]] = run

        gap_ok = all(
            runs["action"]["val_top1"] >= ACTION_MIN_TOP1 and runs["none"]["val_top1"] <= BLIND_MAX_TOP1
            for runs in by_seed.values()
        )
        between = sum(
            runs["none"]["val_top1"] < runs["shift"]["val_top1"] < runs["action"]["val_top1"]
            for runs in by_seed.values()
        )
        ordering_ok = between >= min(2, len(by_seed))

        nested = sorted(fitted[len(separation_jobs) :] + [by_seed[first]["action"]], key=lambda r: len(r["stages"]))
        nested_ok = all(b["val_top1"] >= a["val_top1"] - STAGE_TOLERANCE for a, b in zip(nested, nested[1:]))

        tracking = self._tracking(by_seed[first]["action"])
        tracking_ok = tracking >= TRACKING_MIN_RATE
        duration = time.perf_counter() - started

        results = {
            "separation": [{k: v for k, v in r.items() if k not in ("net", "val")} for r in separation],
            "nested": [{k: v for k, v in r.items() if k not in ("net", "val")} for r in nested],
            "tracking_rate": tracking,
            "checks": {
                "separation_gap": gap_ok,
                "shift_between": ordering_ok,
                "stage_nesting": nested_ok,
                "cam_tracking": tracking_ok,
            },
            "duration": duration,
        }
        path = self._write_report(results)
        print(f"Report written to {path}")
        return results

    def _write_report(self, results: Dict) -> Path:
        stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        path = self.output_dir / f"benchmark_separation_{stamp}.txt"
        with open(path, "w", encoding="utf-8") as f:
            f.write("=" * 120 + "\n")
            f.write("TEMPORAL SEPARATION BENCHMARK\n")
            f.write("=" * 120 + "\n")
            cfg = self.train_cfg
            f.write(f"Train: {self.n_train}/class, Val: {self.n_val}/class, Size: {self.size}x{self.size}, Frames: {self.frames}\n")
            f.write(
                f"T={cfg.segments} epochs={cfg.epochs} lr={cfg.lr} decay={list(cfg.lr_decay_epochs)} batch={cfg.batch_size} "
                f"gate_lr_mult={cfg.gate_lr_mult}\n"
            )
            net = self.net_cfg
            f.write(f"Widths: {list(net.widths)}, reduce ratio: {net.reduce_ratio}, zero gates: {net.zero_gates}\n")
            f.write(f"Completed at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n")
            f.write("=" * 120 + "\n\n")

            f.write("-" * 120 + "\n")
            f.write("SEPARATION (val top-1 on reversal pairs)\n")
            f.write("-" * 120 + "\n")
            f.write(f"{'Seed':<6} {'Module':<10} {'Loss':<10} {'Train%':<10} {'Val%':<10} {'Seconds':<10}\n")
            f.write("-" * 120 + "\n")
            for run in results["separation"]:
                f.write(
                    f"{run['seed']:<6} {run['module']:<10} {run['loss']:<10.4f} {run['train_top1']:<10.1f} "
                    f"{run['val_top1']:<10.1f} {run['seconds']:<10.1f}\n"
                )

            f.write(f"\n{'-' * 120}\n")
            f.write(f"ACTION STAGE NESTING (seed {self.seeds[0]})\n")
            f.write("-" * 120 + "\n")
            for run in results["nested"]:
                f.write(f"  {','.join(run['stages']):<28} val={run['val_top1']:.1f}%\n")

            f.write(f"\n{'=' * 120}\n")
            f.write("BENCHMARK SUMMARY\n")
            f.write(f"{'=' * 120}\n")
            f.write(f"Duration: {results['duration']:.2f} seconds\n")
            f.write(f"CAM tracking rate: {100.0 * results['tracking_rate']:.1f}% of frames\n\n")
            for name, ok in results["checks"].items():
                f.write(f"  {name:<20} {'PASS' if ok else 'FAIL'}\n")
            f.write("=" * 120 + "\n")
        return path


def main():
    parser = argparse.ArgumentParser(description="Temporal separation benchmark.")
    parser.add_argument("--config", default=None, help="TOML/JSON file; its [train] and [net] tables set the budget.")
    parser.add_argument("--seeds", default="0,1,2", help="Comma-separated seeds.")
    parser.add_argument("--output-dir", default="BenchmarkResults", help="Output directory for reports.")
    parser.add_argument("--n-train", type=int, default=50, help="Training videos per class.")
    parser.add_argument("--n-val", type=int, default=20, help="Validation videos per class.")
    parser.add_argument("--concurrency", type=int, default=None, help="Training runs in parallel (default $ACTION_KIT_THREADS or CPU count).")
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    payload = load_config_file(args.config) if args.config else {}
    benchmark = SeparationBenchmark(
        seeds=[int(s) for s in args.seeds.split(",") if s.strip()],
        output_dir=args.output_dir,
        train_cfg=TrainConfig.from_dict(payload.get("train")),
        net_cfg=NetConfig.from_dict(payload.get("net")),
        n_train=args.n_train,
        n_val=args.n_val,
        concurrency=args.concurrency,
    )
    results = benchmark.run_benchmark()
    sys.exit(0 if all(results["checks"].values()) else 1)


if __name__ == "__main__":
    main()
