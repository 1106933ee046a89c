"""Command-line entry point.

Subcommands: ``synth`` (dataset synthesis), ``train``, ``infer``, ``eval``,
``verify`` (property suites), ``hmm-verify`` (decomposition check only).
Exit codes: 0 ok, 1 verification failure, 2 usage, 3 I/O, 4 numerical abort.

``RAWVSR_THREADS`` caps BLAS parallelism (default 1, for bitwise-reproducible
runs); it must be applied before numpy loads, so heavy imports stay inside
the command handlers.
"""

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _setup_threads():
    n = os.environ.get("RAWVSR_THREADS", "1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, n)


def _parser():
    p = argparse.ArgumentParser(prog="rawvsr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize a degraded raw video dataset")
    s.add_argument("--kind", default="moving_bars",
                   choices=("moving_bars", "drifting_texture", "rotating_disk"))
    s.add_argument("--frames", type=int, default=14)
    s.add_argument("--size", type=int, default=64, help="HR frame height and width")
    s.add_argument("--scale", type=int, default=4, choices=(2, 4))
    s.add_argument("--blur", type=int, default=None,
                   help="defocus kernel size; drawn from {3,5,7,9,11} per seed if omitted")
    s.add_argument("--sigma1", type=float, default=None,
                   help="signal-dependent noise variance; drawn from [0,0.1] if omitted")
    s.add_argument("--sigma2", type=float, default=None,
                   help="signal-independent noise variance; drawn from [0,0.02] if omitted")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sequences", type=int, default=1)
    s.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("config")
    t.add_argument("--skip-verify", action="store_true",
                   help="skip the quick property-suite gate before training")

    i = sub.add_parser("infer", help="run sliding-window inference")
    i.add_argument("checkpoint")
    i.add_argument("input_dir", help="directory with y_raw_*.pgm frames")
    i.add_argument("--isp", default=None,
                   choices=("neutral", "warm", "cold", "bright"),
                   help="synthesize the color reference with this preset")
    i.add_argument("--ref", default=None, help="directory with y_rgb_*.ppm references")
    i.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="PSNR/SSIM between two frame directories")
    e.add_argument("pred_dir")
    e.add_argument("gt_dir")
    e.add_argument("--profile", default=None, metavar="row:N|col:N",
                   help="also write temporal profiles along this line")

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("--suite", default="all", choices=("hmm", "grad", "pipeline", "all"))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=200)

    h = sub.add_parser("hmm-verify", help="fusion decomposition vs brute force")
    h.add_argument("--trials", type=int, default=200)
    h.add_argument("--max-states", type=int, default=6)
    h.add_argument("--seed", type=int, default=0)
    return p


# --------------------------------------------------------------------------


def cmd_synth(args):
    import numpy as np

    from .pipeline import DegradationConfig, make_dataset, preset, synth_video

    if args.size % (2 * args.scale):
        print(f"--size {args.size} must be divisible by 2*scale={2 * args.scale}",
              file=sys.stderr)
        return EXIT_USAGE
    rng = np.random.default_rng(args.seed)
    blur = args.blur if args.blur is not None else int(rng.choice((3, 5, 7, 9, 11)))
    sigma1 = args.sigma1 if args.sigma1 is not None else float(rng.uniform(0.0, 0.1))
    sigma2 = args.sigma2 if args.sigma2 is not None else float(rng.uniform(0.0, 0.02))
    manifest = None
    for s in range(args.sequences):
        frames = synth_video(args.kind, args.frames, args.size, args.size,
                             seed=args.seed + 1000 * s)
        cfg = DegradationConfig(scale=args.scale, blur_size=blur, sigma1_sq=sigma1,
                                sigma2_sq=sigma2, rng_seed=args.seed + 7919 * s)
        manifest = make_dataset(frames, cfg, preset("neutral"), args.out,
                                seq_id=f"seq{s:04d}", append=s > 0)
    print(manifest)
    return EXIT_OK


def cmd_train(args):
    from . import config as config_mod
    from . import verify
    from .train import train

    text = Path(args.config).read_text()
    run = config_mod.parse(text)
    cfg = run.vsr_config()
    if not args.skip_verify:
        results = verify.run_suites(["hmm", "grad", "pipeline"], seed=cfg.seed,
                                    quick=True)
        for r in results:
            print(r.line())
        if not all(r.passed for r in results):
            print("verification gate failed; fix or pass --skip-verify", file=sys.stderr)
            return EXIT_VERIFY
    ckpt, log = train(run.manifest, cfg, run.out_dir, config_text=config_mod.emit(run),
                      progress=_progress)
    print(ckpt)
    print(log)
    return EXIT_OK


def _progress(epoch, step, loss, elapsed):
    print(f"epoch {epoch} step {step} loss {loss:.6f} elapsed {elapsed:.0f}s",
          file=sys.stderr)


def _load_frames(directory, stem, reader, frame_cls):
    directory = Path(directory)
    paths = sorted(directory.glob(f"{stem}_*.*"))
    if not paths:
        raise FileNotFoundError(f"no {stem}_* frames in {directory}")
    return [frame_cls(reader(p)) for p in paths]


def cmd_infer(args):
    from . import config as config_mod
    from .pipeline import BayerFrame, RGBFrame, preset, read_pgm16, read_ppm16, write_ppm16
    from .pipeline.frames import clip01
    from .train import infer, load_model

    if (args.isp is None) == (args.ref is None):
        print("provide exactly one of --isp or --ref", file=sys.stderr)
        return EXIT_USAGE
    ckpt = Path(args.checkpoint)
    cfg_file = ckpt / "config.txt"
    if not ckpt.is_dir() or not cfg_file.is_file():
        print(f"checkpoint {ckpt} missing or incomplete (need config.txt)", file=sys.stderr)
        return EXIT_IO
    cfg = config_mod.parse(cfg_file.read_text()).vsr_config()
    model = load_model(ckpt, cfg)
    raws = _load_frames(args.input_dir, "y_raw", read_pgm16,
                        lambda a: BayerFrame(a[None]))
    refs = None
    params = None
    if args.ref is not None:
        refs = _load_frames(args.ref, "y_rgb", read_ppm16,
                            lambda a: RGBFrame(a, "display"))
    else:
        params = preset(args.isp)
    finals, provisionals = infer(model, raws, color_refs=refs, isp_params=params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, (f, p) in enumerate(zip(finals, provisionals)):
        write_ppm16(out / f"final_{k:04d}.ppm", clip01(f))
        write_ppm16(out / f"provisional_{k:04d}.ppm", clip01(p))
    print(out)
    return EXIT_OK


def cmd_eval(args):
    import numpy as np

    from .metrics import psnr, ssim
    from .pipeline import read_ppm16, write_ppm16
    from .train import temporal_profile

    def frame_files(directory):
        directory = Path(directory)
        for pattern in ("final_*.ppm", "x_rgb_*.ppm"):
            found = sorted(directory.glob(pattern))
            if found:
                return found
        skip = ("provisional_", "profile_", "x_lin_", "y_rgb_")
        return sorted(p for p in directory.glob("*.ppm")
                      if not p.name.startswith(skip))

    pred_paths = frame_files(args.pred_dir)
    gt_paths = frame_files(args.gt_dir)
    if len(pred_paths) != len(gt_paths):
        print(f"frame count mismatch: {len(pred_paths)} vs {len(gt_paths)}",
              file=sys.stderr)
        return EXIT_USAGE
    preds = [read_ppm16(p) for p in pred_paths]
    gts = [read_ppm16(p) for p in gt_paths]
    psnrs, ssims = [], []
    for k, (a, b) in enumerate(zip(preds, gts)):
        pv, sv = psnr(a, b), ssim(a, b)
        psnrs.append(pv)
        ssims.append(sv)
        print(f"{k} {pv:.6f} {sv:.6f}")
    print(f"mean {np.mean(psnrs):.6f} {np.mean(ssims):.6f}")
    if args.profile:
        axis, _, idx = args.profile.partition(":")
        if axis not in ("row", "col") or not idx.isdigit():
            print(f"bad --profile {args.profile!r}; expected row:N or col:N",
                  file=sys.stderr)
            return EXIT_USAGE
        out = Path(args.pred_dir)
        write_ppm16(out / "profile_pred.ppm", temporal_profile(preds, axis, int(idx)))
        write_ppm16(out / "profile_gt.ppm", temporal_profile(gts, axis, int(idx)))
    return EXIT_OK


def cmd_verify(args):
    from . import verify

    names = ["hmm", "grad", "pipeline"] if args.suite == "all" else [args.suite]
    results = verify.run_suites(names, seed=args.seed, trials=args.trials)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all checks passed" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_hmm_verify(args):
    from .hmm import decomposition_check

    rep = decomposition_check(trials=args.trials, max_states=args.max_states,
                              max_obs=args.max_states, seed=args.seed)
    print(f"trials {rep.trials} max_tv_deviation {rep.max_deviation:.3e}")
    print("pass" if rep.passed else "FAIL")
    return EXIT_OK if rep.passed else EXIT_VERIFY


_HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "hmm-verify": cmd_hmm_verify,
}


def main(argv=None):
    _setup_threads()
    args = _parser().parse_args(argv)
    from .errors import ContractViolation, NumericalAbort

    try:
        return _HANDLERS[args.command](args)
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
