"""Command-line front end.

Subcommands (one task per invocation):

  generate     unconditional sampling
  continue     continuation of a prompt prefix
  infill       regenerate a masked middle section
  regen        infill with partially noised original
  transition   crossfade-regeneration between two tracks
  guide-embed  match a reference embedding
  guide-class  steer toy-classifier probabilities
  train-toy    train the small MLP denoiser
  eval         batched sampling + metrics against a reference dataset
  synth-data   generate a synthetic corpus

Configuration comes from an optional JSON file plus flag overrides (flags
win); the effective config is echoed into the output directory. Every run
is fully determined by (config, seed). Failures print a machine-readable
error JSON {stage, message, step?} on stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import metrics as metrics_mod
from .datasets import ar1_covariance, load_dataset, synth_dataset
from .denoise import GaussianPrior, gaussian_denoiser, gmm_denoiser
from .measure import toy_classifier, toy_embedder
from .mlp import MlpDenoiser, train_toy
from .sampler import GuidanceConfig, SamplingError, run_sampler
from .signals import Signal
from .tasks import (classifier_guidance_task, continuation_task,
                    embedder_guidance_task, infill_task, regenerate_task,
                    transition_task)
from .wavio import read_wav, write_wav

OUTPUT_ROOT_ENV = "GUIDEDWAVE_OUTPUT_ROOT"
METRICS_HEADER = "task,metric,value,n_samples,seed"
FULL_COV_LIMIT = 4096


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "task": "generate",
    "sample_rate": 16000.0,
    "total_seconds": 6.0,
    "prompt_seconds": 2.4,
    "hole_seconds": 2.0,
    "fade_seconds": 2.5,
    "context_seconds": 1.0,
    "noise_mix": 0.85,
    "input": None,
    "input_b": None,
    "embed_dim": 16,
    "classes": 4,
    "operator_seed": 0,
    "target_labels": None,
    "sampler": "ddpm",
    "steps": 50,
    "step_size": 0.03,
    "grad_target": "direct",
    "data_consistency": None,  # auto: on for selection tasks, off otherwise
    "seed": 0,
    "denoiser": {"type": "gaussian", "cov": "identity"},
    "out_dir": None,
}

_SELECTION_TASKS = ("continuation", "infill", "regenerate", "transition")


def resolve_out_dir(config: dict, subcommand: str) -> str:
    out = config.get("out_dir")
    if out:
        return out
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return os.path.join(root, subcommand)


def merged_config(path: str | None, overrides: dict) -> dict:
    config = dict(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    return config


def validate_config(config: dict) -> None:
    if config["sample_rate"] <= 0:
        raise ConfigError("sample_rate must be positive")
    if config["steps"] < 1:
        raise ConfigError("steps must be >= 1")
    if config["step_size"] < 0:
        raise ConfigError("step_size must be >= 0")
    if not 0.0 <= config["noise_mix"] <= 1.0:
        raise ConfigError("noise_mix must lie in [0, 1]")
    if config["sampler"] not in ("ddpm", "ddim"):
        raise ConfigError(f"unknown sampler {config['sampler']!r}")
    if config["grad_target"] not in ("direct", "denoised"):
        raise ConfigError(f"unknown grad_target {config['grad_target']!r}")
    task = config["task"]
    if task not in _SELECTION_TASKS and config["data_consistency"]:
        raise ConfigError(f"data consistency is not available for {task}")
    if task == "continuation" and config["prompt_seconds"] >= config["total_seconds"]:
        raise ConfigError("prompt_seconds must be shorter than total_seconds")
    if task in ("infill", "regenerate") and \
            config["hole_seconds"] >= config["total_seconds"]:
        raise ConfigError("hole_seconds must leave contexts inside total_seconds")
    den = config["denoiser"]
    if den.get("type") not in ("gaussian", "gmm", "mlp"):
        raise ConfigError(f"unknown denoiser type {den.get('type')!r}")
    labels = config.get("target_labels")
    if labels is not None:
        arr = np.asarray(labels, dtype=float)
        if np.any(arr < 0) or np.any(arr > 1):
            raise ConfigError("target_labels must lie in [0, 1]")


def _samples_for(config: dict, seconds_key: str) -> int:
    return int(round(config[seconds_key] * config["sample_rate"]))


def _load_or_synth(config: dict, path_key: str, n: int, tone: float) -> Signal:
    """Input signal from a WAV path, or a deterministic sine fallback."""
    path = config.get(path_key)
    if path:
        sig = read_wav(path)
        if len(sig) < n:
            raise ConfigError(f"{path} too short: {len(sig)} < {n} samples")
        return Signal(sig.samples[:n], sig.sample_rate)
    rate = config["sample_rate"]
    t = np.arange(n) / rate
    x = 0.5 * np.sin(2 * np.pi * tone * t) + 0.2 * np.sin(2 * np.pi * 2.5 * tone * t)
    return Signal(x, rate)


def build_denoiser(spec: dict, n: int):
    kind = spec["type"]
    if kind == "gaussian":
        cov_kind = spec.get("cov", "identity")
        mean = np.full(n, float(spec.get("mean", 0.0)))
        scale = float(spec.get("scale", 1.0))
        if cov_kind == "identity":
            cov = np.full(n, scale)
        elif cov_kind == "diag":
            cov = np.asarray(spec["values"], dtype=np.float64)
            if cov.size != n:
                raise ConfigError(f"diag covariance length {cov.size} != n {n}")
        elif cov_kind == "ar1":
            if n > FULL_COV_LIMIT:
                raise ConfigError(f"ar1 covariance needs n <= {FULL_COV_LIMIT}, "
                                  f"got {n} (use a diagonal prior or lower the "
                                  "sample rate)")
            cov = scale * ar1_covariance(n, float(spec.get("rho", 0.9)))
        else:
            raise ConfigError(f"unknown gaussian cov kind {cov_kind!r}")
        return gaussian_denoiser(GaussianPrior(mean=mean, cov=cov))
    if kind == "gmm":
        means = spec.get("means", "random")
        if means == "random":
            rng = np.random.default_rng(int(spec.get("means_seed", 0)))
            k = int(spec.get("components", 4))
            means = float(spec.get("spread", 1.0)) * rng.standard_normal((k, n))
            weights = np.full(k, 1.0 / k)
        else:
            means = np.atleast_2d(np.asarray(means, dtype=np.float64))
            if means.shape[1] != n:
                raise ConfigError(f"gmm means dimension {means.shape[1]} != n {n}")
            weights = np.asarray(spec.get("weights",
                                          [1.0 / means.shape[0]] * means.shape[0]),
                                 dtype=np.float64)
        return gmm_denoiser(weights, means, float(spec.get("var", 0.1)))
    model = MlpDenoiser.load(spec["path"])
    if model.dim != n:
        raise ConfigError(f"mlp weights are for dim {model.dim}, task needs {n}")
    return model


def build_task(config: dict):
    kind = config["task"]
    rate = config["sample_rate"]
    if kind == "generate":
        return None
    if kind == "continuation":
        n = _samples_for(config, "total_seconds")
        prompt_n = _samples_for(config, "prompt_seconds")
        source = _load_or_synth(config, "input", n, tone=220.0)
        return continuation_task(Signal(source.samples[:prompt_n], rate), n)
    if kind in ("infill", "regenerate"):
        n = _samples_for(config, "total_seconds")
        hole_n = _samples_for(config, "hole_seconds")
        source = _load_or_synth(config, "input", n, tone=220.0)
        start = (n - hole_n) // 2
        if kind == "infill":
            return infill_task(source, start, hole_n)
        return regenerate_task(source, start, hole_n, config["noise_mix"])
    if kind == "transition":
        c_n = _samples_for(config, "context_seconds")
        fade_n = _samples_for(config, "fade_seconds")
        n = 2 * c_n + fade_n
        a = _load_or_synth(config, "input", n, tone=220.0)
        b = _load_or_synth(config, "input_b", n, tone=330.0)
        return transition_task(a, b, c_n, c_n, fade_n, config["noise_mix"])
    n = _samples_for(config, "total_seconds")
    if kind == "embedder_guidance":
        embedder = toy_embedder(config["operator_seed"], n, config["embed_dim"])
        reference = _load_or_synth(config, "input", n, tone=220.0)
        return embedder_guidance_task(reference, embedder)
    if kind == "classifier_guidance":
        classifier = toy_classifier(config["operator_seed"], n, config["classes"])
        labels = config.get("target_labels")
        if labels is None:
            labels = [1.0] + [0.0] * (config["classes"] - 1)
        return classifier_guidance_task(np.asarray(labels, dtype=np.float64),
                                        classifier)
    raise ConfigError(f"unknown task {kind!r}")


def guidance_config(config: dict) -> GuidanceConfig:
    consistency = config["data_consistency"]
    if consistency is None:
        consistency = config["task"] in _SELECTION_TASKS
    return GuidanceConfig(
        step_size=float(config["step_size"]),
        grad_target=config["grad_target"],
        data_consistency=bool(consistency),
        steps=int(config["steps"]),
        sampler=config["sampler"],
        seed=int(config["seed"]),
    )


def _write_metrics(path, rows):
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for task, metric, value, n_samples, seed in rows:
            fh.write(f"{task},{metric},{value!r},{n_samples},{seed}\n")


def _echo_config(config: dict, out_dir: str) -> None:
    public = {k: v for k, v in config.items() if not k.startswith("_")}
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(public, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir_of(config: dict) -> str:
    return config.get("_out_dir") or resolve_out_dir(config, config["task"])


def run_task(config: dict) -> dict:
    """Execute one sampling task; returns the paths of the artifacts."""
    validate_config(config)
    task = build_task(config)
    n = task.n if task is not None else _samples_for(config, "total_seconds")
    denoiser = build_denoiser(config["denoiser"], n)
    cfg = guidance_config(config)
    rng = np.random.default_rng(cfg.seed)
    x, trace = run_sampler(denoiser, task, cfg, rng, n=n)

    out_dir = _out_dir_of(config)
    os.makedirs(out_dir, exist_ok=True)
    wav_path = os.path.join(out_dir, "generated.wav")
    write_wav(wav_path, Signal(x, config["sample_rate"]))
    trace_path = os.path.join(out_dir, "trace.csv")
    trace.to_csv(trace_path)

    rows = []
    label = config["task"]
    seed = config["seed"]
    if task is not None:
        rows.append((label, "final_measurement_loss", trace.steps[-1][2], 1, seed))
    if task is not None and task.xbar is not None:
        mel_cfg = metrics_mod.MelConfig(sample_rate=config["sample_rate"])
        if n >= mel_cfg.fft_size:
            value = metrics_mod.mel_reconstruction_distance(x, task.xbar, mel_cfg)
            rows.append((label, "mel_reconstruction", value, 1, seed))
    metrics_path = os.path.join(out_dir, "metrics.csv")
    _write_metrics(metrics_path, rows)
    _echo_config(config, out_dir)
    return {"wav": wav_path, "trace": trace_path, "metrics": metrics_path}


# ---- eval ---------------------------------------------------------------


_WORKER_CACHE: dict = {}


def _eval_one(payload):
    config_json, run_index, steps = payload
    key = (config_json, steps)
    if key not in _WORKER_CACHE:
        config = json.loads(config_json)
        config["steps"] = steps
        task = build_task(config)
        n = task.n if task is not None else _samples_for(config, "total_seconds")
        denoiser = build_denoiser(config["denoiser"], n)
        cfg = guidance_config(config)
        _WORKER_CACHE[key] = (task, denoiser, cfg, n)
    task, denoiser, cfg, n = _WORKER_CACHE[key]
    rng = np.random.default_rng([cfg.seed, run_index])
    x, _ = run_sampler(denoiser, task, cfg, rng, n=n)
    return x


def run_eval(config: dict, reference_dir: str, runs: int, workers: int,
             steps_list: list[int]) -> str:
    """Generate runs samples per steps setting and score them against the
    reference dataset; writes metrics.csv in the output directory."""
    validate_config(config)
    if runs < 2:
        raise ConfigError("eval needs at least 2 runs")
    ref_signals, manifest = load_dataset(reference_dir)
    task = build_task(config)
    n = task.n if task is not None else _samples_for(config, "total_seconds")
    ref = [sig.samples for sig in ref_signals]
    if any(r.size < n for r in ref):
        raise ConfigError(f"reference items shorter than task length {n}")
    ref = np.stack([r[:n] for r in ref])

    embedder = toy_embedder(config["operator_seed"], n,
                            min(config["embed_dim"], n))
    classifier = toy_classifier(config["operator_seed"] + 1, n,
                                config["classes"])
    ref_emb = embedder.apply(ref)
    ref_stats = metrics_mod.embedding_stats(ref_emb)
    ref_probs = classifier.apply(ref)

    config_json = json.dumps(config, sort_keys=True)
    rows = []
    for steps in steps_list:
        payloads = [(config_json, i, steps) for i in range(runs)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                samples = list(pool.map(_eval_one, payloads))
        else:
            samples = [_eval_one(p) for p in payloads]
        gen = np.stack(samples)
        gen_stats = metrics_mod.embedding_stats(embedder.apply(gen))
        fad = metrics_mod.frechet_distance(gen_stats, ref_stats)
        probs = classifier.apply(gen)
        paired_ref = ref_probs[np.arange(runs) % ref_probs.shape[0]]
        kld = metrics_mod.class_kld(probs, paired_ref)
        label = f"{config['task']}@{steps}"
        rows.append((label, "frechet_distance", fad, runs, config["seed"]))
        rows.append((label, "class_kld", kld, runs, config["seed"]))
        if task is not None and task.xbar is not None:
            mel_cfg = metrics_mod.MelConfig(sample_rate=config["sample_rate"])
            if n >= mel_cfg.fft_size:
                mel = float(np.mean([
                    metrics_mod.mel_reconstruction_distance(g, task.xbar, mel_cfg)
                    for g in gen]))
                rows.append((label, "mel_reconstruction", mel, runs,
                             config["seed"]))
    out_dir = _out_dir_of(config)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "metrics.csv")
    _write_metrics(path, rows)
    _echo_config(config, out_dir)
    return path


# ---- train-toy ----------------------------------------------------------


def run_train_toy(config: dict, data_dir: str, steps: int, lr: float,
                  batch_size: int) -> dict:
    signals, manifest = load_dataset(data_dir)
    data = np.stack([s.samples for s in signals])
    rng = np.random.default_rng(config["seed"])
    model = MlpDenoiser(data.shape[1], rng=rng)
    log = train_toy(model, data, steps, lr, rng, batch_size=batch_size)
    out_dir = _out_dir_of(config)
    os.makedirs(out_dir, exist_ok=True)
    weights_path = os.path.join(out_dir, "weights.bin")
    model.save(weights_path)
    log_path = os.path.join(out_dir, "loss_log.csv")
    with open(log_path, "w") as fh:
        fh.write("step,loss\n")
        for i, loss in enumerate(log):
            fh.write(f"{i},{loss!r}\n")
    _echo_config(config, out_dir)
    return {"weights": weights_path, "log": log_path}


# ---- argument parsing -----------------------------------------------------


_TASK_BY_COMMAND = {
    "generate": "generate",
    "continue": "continuation",
    "infill": "infill",
    "regen": "regenerate",
    "transition": "transition",
    "guide-embed": "embedder_guidance",
    "guide-class": "classifier_guidance",
}


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--step-size", dest="step_size", type=float,
                        help="guidance gradient step size (0 disables)")
    parser.add_argument("--sampler", choices=("ddpm", "ddim"))
    parser.add_argument("--grad-target", dest="grad_target",
                        choices=("direct", "denoised"))
    parser.add_argument("--sample-rate", dest="sample_rate", type=float)
    parser.add_argument("--total-seconds", dest="total_seconds", type=float)
    parser.add_argument("--noise-mix", dest="noise_mix", type=float)
    parser.add_argument("--no-consistency", dest="data_consistency",
                        action="store_false", default=None)
    parser.add_argument("--input")
    parser.add_argument("--input-b", dest="input_b")
    parser.add_argument("--denoiser", help="denoiser spec as JSON")
    parser.add_argument("--prompt-seconds", dest="prompt_seconds", type=float)
    parser.add_argument("--hole-seconds", dest="hole_seconds", type=float)
    parser.add_argument("--fade-seconds", dest="fade_seconds", type=float)
    parser.add_argument("--context-seconds", dest="context_seconds", type=float)
    parser.add_argument("--embed-dim", dest="embed_dim", type=int)
    parser.add_argument("--classes", type=int)
    parser.add_argument("--labels", dest="target_labels",
                        help="JSON list of target labels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidedwave",
        description="guidance-gradient diffusion sampling for audio editing")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in _TASK_BY_COMMAND:
        p = sub.add_parser(command)
        _add_common(p)

    p = sub.add_parser("train-toy")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--train-steps", dest="train_steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=128)

    p = sub.add_parser("eval")
    _add_common(p)
    p.add_argument("--task", dest="task",
                   choices=sorted(set(_TASK_BY_COMMAND.values())))
    p.add_argument("--reference", required=True, help="reference dataset dir")
    p.add_argument("--runs", type=int, default=16)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--steps-list", dest="steps_list",
                   help="comma-separated step counts (e.g. 50,500)")

    p = sub.add_parser("synth-data")
    p.add_argument("--kind", required=True,
                   choices=("sine_mix", "ar1_gaussian", "gmm"))
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--params", help="JSON parameter object")
    return parser


_CONFIG_KEYS = tuple(DEFAULT_CONFIG)


def _overrides_from_args(args) -> dict:
    over = {}
    for key in _CONFIG_KEYS:
        if hasattr(args, key):
            over[key] = getattr(args, key)
    if getattr(args, "denoiser", None) is not None:
        over["denoiser"] = json.loads(args.denoiser)
    if getattr(args, "target_labels", None) is not None:
        over["target_labels"] = json.loads(args.target_labels)
    return over


def _fail(stage: str, message: str, step=None) -> int:
    payload = {"stage": stage, "message": message}
    if step is not None:
        payload["step"] = step
    print(json.dumps(payload), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        if command == "synth-data":
            params = json.loads(args.params) if args.params else {}
            out = args.out_dir or resolve_out_dir({"out_dir": None}, "synth-data")
            manifest = synth_dataset(args.kind, params, args.count, out,
                                     args.seed)
            print(json.dumps({"out": out, "count": manifest["count"]}))
            return 0
        config = merged_config(args.config, _overrides_from_args(args))
        if command in _TASK_BY_COMMAND:
            config["task"] = _TASK_BY_COMMAND[command]
        config["_out_dir"] = resolve_out_dir(config, command)
        config.pop("out_dir", None)
        if command == "train-toy":
            paths = run_train_toy(config, args.data, args.train_steps,
                                  args.lr, args.batch)
        elif command == "eval":
            steps_list = ([int(s) for s in args.steps_list.split(",")]
                          if args.steps_list else [config["steps"]])
            paths = {"metrics": run_eval(config, args.reference, args.runs,
                                         args.workers, steps_list)}
        else:
            paths = run_task(config)
        print(json.dumps(paths))
        return 0
    except ConfigError as exc:
        return _fail("config", str(exc))
    except SamplingError as exc:
        return _fail("sample", str(exc), step=exc.step)
    except (OSError, ValueError, KeyError) as exc:
        return _fail("run", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
