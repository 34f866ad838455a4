import logging
import threading
from collections import deque
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .backbones import build_backbone
from .cam import cam_export, cam_peaks, tracking_hits
from .config import NetConfig, RunConfig, SynthConfig, TrainConfig, parse_names
from .cost import CostConvention, count_cost, delta_report, table3_report, table4_report
from .dataset import ClipDataset, gen_direction_dataset, load_dataset, save_dataset, segment_indices
from .errors import ConfigError, DataError
from .gradcheck import run_gradcheck_suite, worst_by_op
from .metrics import TrainingMetrics
from .report import history_rows, write_history_csv, write_report
from .toynet import build_toynet, load_toynet, save_toynet
from .training import evaluate, train

logger = logging.getLogger(__name__)


class ExperimentRunner:
    """
    Runs one command end to end from a resolved RunConfig.
    Coordinates data, model, training and reporting, and keeps recent log lines.
    """

    def __init__(self, run: RunConfig):
        self._run = run
        self._metrics = TrainingMetrics()
        self._log_buffer = deque(maxlen=50)  # last 50 log lines
        self._log_lock = threading.Lock()

    @property
    def out_dir(self) -> Path:
        return Path(self._run.out)

    def _add_log(self, message: str) -> None:
        logger.info(message)
        with self._log_lock:
            self._log_buffer.append(message)

    def _get_recent_logs(self, max_lines: int = 10) -> List[str]:
        with self._log_lock:
            return list(self._log_buffer)[-max_lines:]

    def _option(self, key: str, default: Any = None) -> Any:
        return self._run.get(key, default)

    # -- gradcheck ----------------------------------------------------------

    def gradcheck(self) -> Dict[str, Any]:
        records = run_gradcheck_suite(seed=self._run.seed)
        worst = worst_by_op(records)
        passed = all(r.passed for r in records)
        self._add_log(f"[Runner] gradcheck: {len(records)} cases over {len(worst)} ops, passed={passed}")
        result = {"passed": passed, "worst_by_op": worst, "records": [r.to_dict() for r in records]}
        if self._option("write"):
            write_report(result, "json", self.out_dir / "gradcheck.json")
            self._run.write_snapshot()
        return result

    # -- cost ---------------------------------------------------------------

    def cost(self) -> Dict[str, Any]:
        convention = CostConvention(self._option("convention", "reported"))
        segments = int(self._option("segments", 8))
        num_classes = int(self._option("cls", 83))
        result: Dict[str, Any] = {}
        if self._option("table3"):
            result["table3"] = table3_report(segments, num_classes, convention)
        if self._option("table4"):
            result["table4"] = table4_report(segments, num_classes, convention)
        if result:
            self._add_log(f"[Runner] cost tables: {sorted(result)}")
            return result

        backbone = self._option("backbone", "resnet50")
        variant = self._option("variant", "tsm")
        stages = parse_names(self._option("stages"))
        graph = build_backbone(backbone, variant, segments=segments, num_classes=num_classes, stages=stages)
        report = count_cost(graph, convention)
        base = count_cost(build_backbone(backbone, "tsn", segments=segments, num_classes=num_classes), convention)
        deltas = delta_report(base, report, self._option("base_top1"), self._option("variant_top1"))
        self._add_log(f"[Runner] cost {backbone}/{variant} T={segments}: {report.macs_g:.3f} G, {report.params_m:.3f} M")
        return {
            "backbone": graph.backbone,
            "variant": graph.variant,
            "T": segments,
            "CLS": num_classes,
            "stages": list(graph.stages),
            "sites": len(graph.sites),
            "convention": convention.name,
            "macs": report.macs,
            "params": report.params,
            "macs_g": report.macs_g,
            "params_m": report.params_m,
            "per_stage": report.to_dict()["per_stage"],
            "deltas": deltas.to_dict(),
            "eta": deltas.eta,
        }

    # -- data ---------------------------------------------------------------

    def _synth_config(self, split: Optional[str] = None) -> SynthConfig:
        options = dict(self._run.options)
        if split is not None:
            options["split"] = split
        return SynthConfig.from_dict(options)

    def _generate(self, cfg: SynthConfig) -> ClipDataset:
        return gen_direction_dataset(
            cfg.n_per_class, cfg.frames, cfg.size, cfg.size, cfg.noise, self._run.seed, cfg.split, cfg.channels
        )

    def synth(self) -> Dict[str, Any]:
        cfg = self._synth_config()
        dataset = self._generate(cfg)
        save_dataset(dataset, self.out_dir)
        self._run.write_snapshot()
        self._add_log(f"[Runner] synthesized {len(dataset)} {cfg.split} videos into {self.out_dir}")
        return {"split": cfg.split, "videos": len(dataset), "class_counts": dataset.class_counts(), "out": str(self.out_dir)}

    def _dataset(self, key: str, split: str) -> ClipDataset:
        location = self._option(key)
        if location:
            return load_dataset(location)
        self._add_log(f"[Runner] no --{key.replace('_', '-')} given, synthesizing a {split} split")
        return self._generate(self._synth_config(split))

    # -- training -----------------------------------------------------------

    def train(self) -> Dict[str, Any]:
        cfg = TrainConfig.from_dict({**self._run.options, "seed": self._run.seed})
        net_cfg = NetConfig.from_dict(self._run.options)
        data = self._dataset("data", "train")
        val = self._dataset("val_data", "val") if self._option("val_data") or self._option("validate") else None
        frame_shape = data.videos[0].frames.shape
        net = build_toynet(
            net_cfg.module,
            net_cfg.widths,
            net_cfg.num_classes,
            net_cfg.stages,
            seed=self._run.seed,
            in_channels=frame_shape[1],
            input_size=frame_shape[2],
            reduce_ratio=net_cfg.reduce_ratio,
            zero_gates=net_cfg.zero_gates,
        )
        self._add_log(f"[Runner] training {net} on {len(data)} clips, {net.num_parameters()} parameters")
        history = train(net, data, cfg, val_data=val, metrics=self._metrics)

        write_history_csv(history, self.out_dir / "history.csv")
        save_toynet(net, self.out_dir / "weights")
        self._run.write_snapshot()
        summary = {
            "module": net.module,
            "parameters": net.num_parameters(),
            "history": history_rows(history),
            "final": history[-1].to_dict(),
            "metrics": self._metrics.snapshot(),
        }
        if val is not None:
            summary["val"] = evaluate(net, val, cfg.segments).to_dict()
        self._add_log(f"[Runner] finished: loss={history[-1].loss:.4f} top1={history[-1].top1:.1f}")
        summary["recent_logs"] = self._get_recent_logs()
        write_report(summary, "json", self.out_dir / "summary.json")
        return summary

    def _load_net(self):
        weights = self._option("weights")
        if not weights:
            raise ConfigError("--weights is required (a directory written by 'train')")
        return load_toynet(weights)

    def evaluate(self) -> Dict[str, Any]:
        net = self._load_net()
        data = self._dataset("data", "val")
        segments = int(self._option("segments", 8))
        result = evaluate(net, data, segments).to_dict()
        result.update({"module": net.module, "split": data.split})
        write_report(result, "json", self.out_dir / "eval.json")
        self._run.write_snapshot()
        self._add_log(f"[Runner] eval {net.module}: top1={result['top1']:.1f} top5={result['top5']:.1f}")
        return result

    def cam(self) -> Dict[str, Any]:
        net = self._load_net()
        data = self._dataset("data", "val")
        index = int(self._option("index", 0))
        if not 0 <= index < len(data):
            raise DataError(f"clip index {index} outside [0, {len(data)})")
        segments = int(self._option("segments", 8))
        video = data.videos[index]
        class_index = self._option("class_index")
        class_index = video.label if class_index is None else int(class_index)
        clip = data.clip(index, segments, mode="center")
        result = cam_export(net, clip, class_index, self.out_dir / "cam")
        self._run.write_snapshot()
        peaks = cam_peaks(result.raw)
        summary: Dict[str, Any] = {
            "index": index,
            "class": class_index,
            "label": video.label,
            "heatmap_shape": list(result.raw.shape),
            "peaks": peaks.tolist(),
            "files": [str(p) for p in result.files],
        }
        positions = video.meta.get("trajectory")
        if positions:
            frames = segment_indices(video.num_frames, segments, "center")
            hits = tracking_hits(peaks, np.asarray(positions)[frames], video.frames.shape[-1], result.raw.shape[-1])
            summary["tracking_rate"] = float(hits.mean())
        self._add_log(f"[Runner] cam clip {index} class {class_index}: peaks {peaks.tolist()}")
        return summary
