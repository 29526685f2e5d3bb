"""Command-line entry point: ``wavespoof <command> ...``.

Exit codes: 0 success, 1 validation error (bad arguments or config),
2 runtime or data error.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import io
from ._validation import DataError, ValidationError
from .gmm import GmmLlrClassifier, gmm_fit, llr_score
from .handcrafted import MFCC, MWPC, MwpcConfig, mwpc, mwpc_mel_energies, pca_fit
from .metrics import FUSION_1, check_fusion_weights, eer, fuse, min_tdcf, read_scores, write_scores
from .synth import write_synth_corpus
from .wavedeconv import (
    BatchSpec,
    TrainingDivergedError,
    Utterance,
    WaveletDeconvClassifier,
    score_utterance,
    write_trajectory_csv,
)
from .wavelets import CWTFeatures, Scattering

logger = logging.getLogger("wavespoof")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

FRONT_ENDS = {"mfcc": MFCC, "mwpc": MWPC, "cwt": CWTFeatures, "scattering": Scattering}
BACK_ENDS = ("gmm", "wd-net")


def _coerce(value, default, key):
    try:
        if isinstance(default, bool):
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {value!r} as {type(default).__name__}") from None
    return value


def _section(raw, prefix, estimator_cls, skip=("sample_rate", "random_state")):
    defaults = estimator_cls().get_params()
    params = {}
    for key, value in raw.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in defaults or name in skip:
            raise ValidationError(f"unknown config key {key!r}")
        params[name] = _coerce(value, defaults[name], key)
    return params


@dataclass
class RunConfig:
    front_end: str = "mfcc"
    back_end: str = "gmm"
    seed: int = 0
    sample_rate: int = 16000
    front_params: dict = field(default_factory=dict)
    gmm_params: dict = field(default_factory=dict)
    wd_params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw, seed=None):
        known = {"front_end", "back_end", "seed", "sample_rate"}
        front_end = raw.get("front_end", "mfcc")
        if front_end not in FRONT_ENDS and front_end != "wd":
            raise ValidationError(f"front_end must be one of {sorted(FRONT_ENDS) + ['wd']}, got {front_end!r}")
        back_end = raw.get("back_end", "wd-net" if front_end == "wd" else "gmm")
        if back_end not in BACK_ENDS:
            raise ValidationError(f"back_end must be one of {BACK_ENDS}, got {back_end!r}")
        if (front_end == "wd") != (back_end == "wd-net"):
            raise ValidationError("front_end 'wd' goes with back_end 'wd-net' and vice versa")
        for key in raw:
            if key in known:
                continue
            prefix = key.split(".", 1)[0]
            if "." not in key or prefix not in set(FRONT_ENDS) | {"gmm", "wd"}:
                raise ValidationError(f"unknown config key {key!r}")
            if prefix in FRONT_ENDS and prefix != front_end:
                raise ValidationError(f"config key {key!r} does not apply to front_end {front_end!r}")
        cfg = cls(
            front_end=front_end,
            back_end=back_end,
            seed=_coerce(raw.get("seed", "0"), 0, "seed") if seed is None else seed,
            sample_rate=_coerce(raw.get("sample_rate", "16000"), 0, "sample_rate"),
            front_params=_section(raw, front_end, FRONT_ENDS[front_end]) if front_end in FRONT_ENDS else {},
            gmm_params=_section(raw, "gmm", GmmLlrClassifier),
            wd_params=_section(raw, "wd", WaveletDeconvClassifier),
            raw=dict(raw),
        )
        cfg.validate()
        return cfg

    def front_end_estimator(self):
        est = FRONT_ENDS[self.front_end]()
        params = dict(self.front_params)
        if "sample_rate" in est.get_params():
            params["sample_rate"] = self.sample_rate
        return est.set_params(**params)

    def gmm_estimator(self):
        return GmmLlrClassifier(random_state=self.seed).set_params(**self.gmm_params)

    def wd_estimator(self):
        return WaveletDeconvClassifier(sample_rate=self.sample_rate,
                                       random_state=self.seed).set_params(**self.wd_params)

    def validate(self):
        if self.sample_rate <= 0:
            raise ValidationError("sample_rate must be > 0")
        if self.front_end == "mfcc":
            est = self.front_end_estimator().fit()
            if est.n_ceps > est.n_filt:
                raise ValidationError("mfcc.n_ceps must not exceed mfcc.n_filt")
        elif self.front_end == "mwpc":
            est = self.front_end_estimator()
            if est.n_components > est.n_filt:
                raise ValidationError("mwpc.n_components must not exceed mwpc.n_filt")
            from .handcrafted import wavelet_filters
            wavelet_filters(est.wavelet)
        elif self.front_end == "cwt":
            self.front_end_estimator().fit()
        elif self.front_end == "scattering":
            from .wavelets import ScatteringConfig
            est = self.front_end_estimator()
            for name in ("n1", "n2", "q1", "q2", "avg_len"):
                if getattr(est, name) < 1:
                    raise ValidationError(f"scattering.{name} must be >= 1")
            if est.eps <= 0:
                raise ValidationError("scattering.eps must be > 0")
        g = self.gmm_estimator()
        if g.n_components < 1 or g.n_iter < 1:
            raise ValidationError("gmm.n_components and gmm.n_iter must be >= 1")
        if self.back_end == "wd-net":
            self.wd_estimator()._train_config().validate()

    def echo(self):
        out = {"front_end": self.front_end, "back_end": self.back_end,
               "seed": self.seed, "sample_rate": self.sample_rate}
        out.update({k: v for k, v in sorted(self.raw.items()) if k not in out})
        return {f"config.{k}": v for k, v in out.items()}


def load_config(path, seed=None):
    raw = io.read_config(path) if path else {}
    return RunConfig.from_dict(raw, seed)


def _load_audio(entry, sample_rate):
    x, fs = io.read_wav(entry.wav_path)
    if fs != sample_rate:
        raise DataError(f"{entry.wav_path}: sample rate {fs} Hz, config expects {sample_rate} Hz")
    if x.size == 0:
        raise DataError(f"{entry.wav_path}: empty audio")
    return x


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth_data(args):
    paths = write_synth_corpus(args.out, seed=args.seed, n_speakers=args.n_speakers,
                               n_train=args.n_train, n_dev=args.n_dev, duration=args.duration,
                               sample_rate=args.sample_rate)
    for split, path in paths.items():
        print(f"{split}: {path}")
    return EXIT_OK


def cmd_extract(args):
    cfg = load_config(args.config, args.seed)
    if cfg.front_end == "wd":
        raise ValidationError("front_end 'wd' works on raw audio; use train-wd / score instead")
    entries = io.read_manifest(args.manifest, check_files=False)
    os.makedirs(args.out, exist_ok=True)
    est = cfg.front_end_estimator()
    failures = 0

    audio = {}
    for e in entries:
        try:
            audio[e.utt_id] = _load_audio(e, cfg.sample_rate)
        except (DataError, OSError) as exc:
            failures += 1
            logger.error("%s: %s", e.utt_id, exc)

    if cfg.front_end == "mwpc":
        mcfg = est._config()
        if args.pca:
            pca, _ = io.load_pca(args.pca)
        else:
            if not audio:
                return EXIT_RUNTIME if failures else EXIT_OK
            mel = np.vstack([mwpc_mel_energies(x, cfg.sample_rate, mcfg) for x in audio.values()])
            pca = pca_fit(mel, mcfg.n_components)
            io.save_pca(os.path.join(args.out, "pca.model"), pca, cfg.echo())
        extract = lambda x: mwpc(x, pca, cfg.sample_rate, mcfg)  # noqa: E731
    else:
        est.fit()
        extract = lambda x: est.transform([x])[0]  # noqa: E731

    for e in entries:
        if e.utt_id not in audio:
            continue
        try:
            feats = extract(audio[e.utt_id])
        except ValidationError as exc:
            failures += 1
            logger.error("%s: %s", e.utt_id, exc)
            continue
        io.write_features(os.path.join(args.out, f"{e.utt_id}.feat"), feats)
    print(f"extracted {len(entries) - failures} of {len(entries)} utterances")
    return EXIT_RUNTIME if failures else EXIT_OK


def _read_feature_set(entries, feat_dir):
    feats = []
    for e in entries:
        path = os.path.join(feat_dir, f"{e.utt_id}.feat")
        if not os.path.isfile(path):
            raise DataError(f"missing feature file for {e.utt_id}: {path}")
        feats.append(io.read_features(path))
    return feats


def cmd_train_gmm(args):
    cfg = load_config(args.config, args.seed)
    if cfg.back_end != "gmm":
        raise ValidationError("train-gmm needs back_end = gmm")
    entries = io.read_manifest(args.manifest, check_files=False)
    feats = _read_feature_set(entries, args.features)
    params = cfg.gmm_estimator().get_params()
    kw = dict(n_components=params["n_components"], n_iter=params["n_iter"], seed=cfg.seed,
              tol=params["tol"], var_floor=params["var_floor"])
    os.makedirs(args.out, exist_ok=True)
    for key, name in (("bonafide", "human"), ("spoof", "spoof")):
        sel = [f for f, e in zip(feats, entries) if e.key == key]
        if not sel:
            raise DataError(f"no {key} utterances in {args.manifest}")
        model = gmm_fit(np.vstack(sel), **kw)
        meta = dict(cfg.echo(), **{"class": key})
        io.save_gmm(os.path.join(args.out, f"{name}.model"), model, meta)
    print(f"wrote {os.path.join(args.out, 'human.model')} and {os.path.join(args.out, 'spoof.model')}")
    return EXIT_OK


def _utterances(entries, sample_rate):
    return [Utterance(e.utt_id, e.speaker, e.label, _load_audio(e, sample_rate)) for e in entries]


def cmd_train_wd(args):
    cfg = load_config(args.config, args.seed)
    if cfg.back_end != "wd-net":
        raise ValidationError("train-wd needs front_end = wd and back_end = wd-net")
    est = cfg.wd_estimator()
    train = _utterances(io.read_manifest(args.manifest), cfg.sample_rate)
    dev = _utterances(io.read_manifest(args.dev), cfg.sample_rate) if args.dev else None
    fit_kw = {}
    if dev:
        fit_kw = dict(X_dev=[u.samples for u in dev], y_dev=[u.label for u in dev],
                      speakers_dev=[u.speaker for u in dev])
    est.fit([u.samples for u in train], [u.label for u in train],
            speakers=[u.speaker for u in train], **fit_kw)
    os.makedirs(args.out, exist_ok=True)
    meta = dict(cfg.echo(), kernel_size=est.kernel_size, chunk_ms=repr(float(est.chunk_ms)),
                best_epoch=est.best_epoch_)
    io.save_wd(os.path.join(args.out, "wd.model"), est.scales_, est.net_, meta)
    write_trajectory_csv(os.path.join(args.out, "trajectory.csv"), est.trajectory_)
    print("final scales: " + " ".join(f"{s:.4g}" for s in est.scales_))
    return EXIT_OK


def cmd_score(args):
    cfg = load_config(args.config, args.seed)
    entries = io.read_manifest(args.manifest, check_files=False)
    scores = []
    if cfg.back_end == "gmm":
        if not args.features:
            raise ValidationError("score with back_end = gmm needs --features")
        human, _ = io.load_gmm(os.path.join(args.models, "human.model"))
        spoof, _ = io.load_gmm(os.path.join(args.models, "spoof.model"))
        for e, f in zip(entries, _read_feature_set(entries, args.features)):
            scores.append(llr_score(f, human, spoof))
    else:
        scales, net, meta = io.load_wd(os.path.join(args.models, "wd.model"))
        K = int(meta.get("kernel_size", 251))
        chunk_ms = float(meta.get("chunk_ms", 200.0))
        chunk_len = BatchSpec(chunk_ms=chunk_ms).chunk_len(cfg.sample_rate)
        for e in entries:
            scores.append(score_utterance(_load_audio(e, cfg.sample_rate), scales, net, K, chunk_len))
    from .metrics import ScoreSet
    result = ScoreSet([e.utt_id for e in entries], [e.key for e in entries], scores)
    write_scores(args.out, result)
    print(f"wrote {len(entries)} scores to {args.out}")
    return EXIT_OK


def _parse_weights(args, n_files):
    if args.fusion_1:
        return np.array(FUSION_1)
    if args.weights:
        try:
            w = [float(v) for v in args.weights.split(",")]
        except ValueError:
            raise ValidationError(f"bad --weights {args.weights!r}") from None
        return check_fusion_weights(w, n_files)
    return None


def evaluate_report(score_sets, names, beta=1.0, weights=None):
    """Rows of (system, EER fraction, min t-DCF) for each set, plus the fusion if weighted."""
    rows = [(name, eer(s), min_tdcf(s, beta)) for name, s in zip(names, score_sets)]
    if weights is not None:
        fused = fuse(score_sets, weights)
        label = "fused[" + ";".join(repr(float(w)) for w in weights) + "]"
        rows.append((label, eer(fused), min_tdcf(fused, beta)))
    return rows


def cmd_eval(args):
    if args.beta <= 0:
        raise ValidationError("--beta must be > 0")
    sets = [read_scores(p) for p in args.scores]
    weights = _parse_weights(args, len(sets))
    if weights is not None:
        check_fusion_weights(weights, len(sets))
        print("fusion weights: " + ", ".join(repr(float(w)) for w in weights))
    rows = evaluate_report(sets, [os.path.basename(p) for p in args.scores], args.beta, weights)
    print(f"{'system':<40} {'EER[%]':>8} {'min-tDCF':>9}")
    for name, e, c in rows:
        print(f"{name:<40} {100 * e:8.2f} {c:9.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("system,eer_percent,min_tdcf,beta\n")
            for name, e, c in rows:
                fh.write(f"{name},{100 * e!r},{c!r},{float(args.beta)!r}\n")
    return EXIT_OK


def cmd_fuse(args):
    sets = [read_scores(p) for p in args.scores]
    weights = _parse_weights(args, len(sets))
    if weights is None:
        raise ValidationError("fuse needs --weights or --fusion-1")
    check_fusion_weights(weights, len(sets))
    write_scores(args.out, fuse(sets, weights))
    print(f"wrote fused scores to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="wavespoof", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="line-oriented 'key = value' run configuration")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")

    sp = sub.add_parser("synth-data", help="write a synthetic bonafide/spoof corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-speakers", type=int, default=4)
    sp.add_argument("--n-train", type=int, default=6, help="utterances per class and speaker")
    sp.add_argument("--n-dev", type=int, default=4)
    sp.add_argument("--duration", type=float, default=1.0, help="seconds")
    sp.add_argument("--sample-rate", type=int, default=16000)
    sp.set_defaults(func=cmd_synth_data)

    sp = sub.add_parser("extract", help="compute one feature file per utterance")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pca", help="existing PCA archive for mwpc (otherwise fitted and saved)")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train-gmm", help="fit bonafide and spoof GMMs")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_gmm)

    sp = sub.add_parser("train-wd", help="train the wavelet-deconvolution network")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--dev", help="held-out manifest for checkpoint selection")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_wd)

    sp = sub.add_parser("score", help="score utterances with trained models")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--models", required=True, help="directory holding the model archives")
    sp.add_argument("--features", help="feature directory (gmm back-end)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_score)

    for name, func, hlp in (("eval", cmd_eval, "EER and min t-DCF report"),
                            ("fuse", cmd_fuse, "weighted score fusion")):
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("--scores", nargs="+", required=True)
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--weights", help="comma-separated fusion weights summing to 1")
        g.add_argument("--fusion-1", action="store_true",
                       help=f"weights {FUSION_1} (first system dominant)")
        if name == "eval":
            sp.add_argument("--beta", type=float, default=1.0)
            sp.add_argument("--out", help="CSV report path")
        else:
            sp.add_argument("--out", required=True)
        sp.set_defaults(func=func)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, OSError, TrainingDivergedError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
