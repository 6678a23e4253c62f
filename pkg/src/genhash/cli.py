"""Command-line workflows: train, encode, ground truth, eval, reconstruct,
gradcheck, baseline.

Every command is deterministic given its flags (all randomness flows from
--seed through splittable counter-based generators) and never mutates its
inputs. Exit codes: 0 ok, 2 input error, 3 file-format error, 4 training
abort.
"""

import argparse
import sys

import numpy as np

from . import data_io, evaluation, search, training
from .baselines import itq_encode_batch, itq_fit, pca_fit, PcaModel
from .codes import ZERO_ONE, PLUS_MINUS, HashCode, n_words
from .errors import FormatError, InputError, TrainingError
from .model import ModelParams, encode_map_batch
from .training import TrainConfig, exact_grad_check, train

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FORMAT = 3
EXIT_TRAINING = 4

_DOMAINS = {"zero-one": ZERO_ONE, "plus-minus": PLUS_MINUS}


def _parse_synth_spec(spec: str, default_seed: int):
    """Parse "n=2000,d=16,clusters=10,spread=1.0[,seed=S]" for --format synth."""
    fields = {"n": 2000, "d": 16, "clusters": 10, "spread": 1.0, "seed": None}
    if spec:
        for part in spec.split(","):
            if "=" not in part:
                raise InputError(f"bad synth spec entry {part!r}; use key=value")
            key, value = part.split("=", 1)
            key = key.strip()
            if key not in fields:
                raise InputError(f"unknown synth spec key {key!r}")
            fields[key] = float(value) if key == "spread" else int(value)
    if fields["seed"] is None:
        # derive a child stream so synth data and training draws stay independent
        fields["seed"] = int(np.random.SeedSequence(default_seed).spawn(1)[0].generate_state(1)[0])
    return fields


def _load_data(path: str, fmt: str, seed: int) -> data_io.Dataset:
    if fmt == "fvecs":
        return data_io.read_fvecs(path)
    if fmt == "bvecs":
        return data_io.read_bvecs(path)
    if fmt == "idx":
        return data_io.read_mnist_idx(path)
    if fmt == "synth":
        f = _parse_synth_spec(path, seed)
        return data_io.synth_mixture(f["n"], f["d"], f["clusters"], f["spread"], f["seed"])
    raise InputError(f"unknown data format {fmt!r}")


def _apply_center(rows: np.ndarray, mean) -> np.ndarray:
    return rows if mean is None else rows - mean


def cmd_train(args) -> int:
    dataset = _load_data(args.data, args.format, args.seed)
    mean = None
    if args.center == "on":
        dataset = dataset.centered()
        mean = dataset.mean
    config = TrainConfig(
        steps=args.steps,
        bits=args.bits,
        batch_size=args.batch,
        lr=args.lr,
        estimator={"approx": "approx", "unbiased": "unbiased"}[args.estimator],
        seed=args.seed,
        optimizer=args.optimizer,
        code_domain=_DOMAINS[args.domain],
    )
    params, log = train(dataset, config)
    data_io.save_checkpoint(args.out, params, center_mean=mean)
    if args.log:
        log.to_csv(args.log)
    return EXIT_OK


def _encode_with(model, mean, rows: np.ndarray) -> tuple[np.ndarray, int]:
    if isinstance(model, ModelParams):
        return encode_map_batch(model, _apply_center(rows, mean)), model.l
    if hasattr(model, "R"):
        return itq_encode_batch(model, rows), model.l
    raise InputError("checkpoint kind does not define an encoder")


def cmd_encode(args) -> int:
    model, mean = data_io.load_checkpoint(args.ckpt)
    dataset = _load_data(args.data, args.format, args.seed)
    if dataset.n == 0:
        bits = getattr(model, "l", None)
        if bits is None:
            raise InputError("checkpoint kind does not define an encoder")
        codes = np.empty((0, n_words(bits)), dtype=np.uint64)
    else:
        codes, bits = _encode_with(model, mean, dataset.rows)
    data_io.write_packed_codes(args.out, codes, bits)
    return EXIT_OK


def cmd_groundtruth(args) -> int:
    dataset = _load_data(args.data, args.format, args.seed)
    queries = _load_data(args.queries, args.queries_format, args.seed + 1)
    if queries.d != dataset.d:
        raise InputError(f"query dimension {queries.d} != dataset dimension {dataset.d}")
    knn = search.knn_exact_l2 if args.metric == "l2" else search.knn_exact_ip
    lists = np.stack([knn(dataset.rows, q, args.k) for q in queries.rows])
    data_io.write_ivecs(args.out, lists)
    return EXIT_OK


def cmd_eval(args) -> int:
    codes, bits = data_io.read_packed_codes(args.codes)
    index = search.BinaryIndex(codes, bits)
    truth = data_io.read_ivecs(args.truth)
    config = {"method": args.method, "bits": bits}

    if args.mode == "hamming":
        if not args.query_codes:
            raise InputError("--mode hamming requires --query-codes")
        qcodes, qbits = data_io.read_packed_codes(args.query_codes)
        if qbits != bits:
            raise InputError(f"query codes are {qbits}-bit but index is {bits}-bit")
        queries = list(qcodes)

        def searcher(q, n):
            return search.knn_hamming(index, HashCode(q, bits), n)

    else:
        if not (args.ckpt and args.queries):
            raise InputError("--mode asym requires --ckpt and --queries")
        model, mean = data_io.load_checkpoint(args.ckpt, expect_kind=data_io.KIND_SGH)
        if model.l != bits:
            raise InputError(f"checkpoint is {model.l}-bit but index is {bits}-bit")
        qdata = _load_data(args.queries, args.queries_format, args.seed)
        queries = list(_apply_center(qdata.rows, mean))

        def searcher(q, n):
            return search.asymmetric_ip_search(index, model, q, n)

    if len(truth) != len(queries):
        raise InputError(f"{len(truth)} truth lists for {len(queries)} queries")
    report = evaluation.recall_curve(queries, searcher, list(truth), args.k, config=config)
    report.write_csv(args.out)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    model, mean = data_io.load_checkpoint(args.ckpt)
    dataset = _load_data(args.data, args.format, args.seed)
    shape = tuple(int(v) for v in args.shape.split("x"))
    if len(shape) != 2:
        raise InputError("--shape must look like 28x28")
    rows = dataset.rows[: args.count]
    if isinstance(model, ModelParams):
        rows = _apply_center(rows, mean)
    grid = evaluation.reconstruction_grid(model, rows, shape)
    evaluation.write_pgm(args.out, grid)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed)))
    params = ModelParams(
        rng.normal(size=(args.dim, args.bits)),
        rng.normal(size=(args.dim, args.bits)),
        rng.normal(size=args.bits),
        float(rng.normal(scale=0.3)),
        _DOMAINS[args.domain],
    )
    x = rng.normal(size=args.dim)
    report = exact_grad_check(params, x)
    print(report.summary())
    if report.ok(w_tol=args.w_tol, decoder_tol=args.decoder_tol):
        print("gradcheck PASS")
        return EXIT_OK
    print("gradcheck FAIL")
    return 1


def cmd_baseline(args) -> int:
    dataset = _load_data(args.data, args.format, args.seed)
    if args.method == "itq":
        model = itq_fit(dataset, args.bits, iterations=args.iterations)
    else:
        mean, W = pca_fit(dataset, args.bits)
        model = PcaModel(mean, W)
    data_io.save_checkpoint(args.out, model)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
    p.add_argument("--threads", type=int, default=1, help="worker cap (single-process build)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genhash",
        description="Learn binary hash codes with a generative model; encode, search, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a hashing model")
    p.add_argument("--data", required=True, help="input path (or synth spec for --format synth)")
    p.add_argument("--format", required=True, choices=["fvecs", "bvecs", "idx", "synth"])
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--batch", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--estimator", choices=["approx", "unbiased"], default="unbiased")
    p.add_argument("--domain", choices=["zero-one", "plus-minus"], default="zero-one")
    p.add_argument("--optimizer", choices=["sgd", "adam"], default=training.OPTIMIZER_SGD)
    p.add_argument("--center", choices=["on", "off"], default="on")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", default=None, help="training log CSV path")
    _add_common(p)
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("encode", help="MAP-encode a dataset with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", required=True, choices=["fvecs", "bvecs", "idx", "synth"])
    p.add_argument("--out", required=True, help="packed-code output path")
    _add_common(p)
    p.set_defaults(run=cmd_encode)

    p = sub.add_parser("groundtruth", help="exact nearest-neighbor lists")
    p.add_argument("--data", required=True)
    p.add_argument("--format", required=True, choices=["fvecs", "bvecs", "idx", "synth"])
    p.add_argument("--queries", required=True)
    p.add_argument("--queries-format", required=True, choices=["fvecs", "bvecs", "idx", "synth"])
    p.add_argument("--metric", choices=["l2", "ip"], default="l2")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True, help="ivecs output path")
    _add_common(p)
    p.set_defaults(run=cmd_groundtruth)

    p = sub.add_parser("eval", help="recall curve from codes + ground truth")
    p.add_argument("--codes", required=True, help="database packed-code file")
    p.add_argument("--truth", required=True, help="ivecs ground-truth lists")
    p.add_argument("--mode", choices=["hamming", "asym"], default="hamming")
    p.add_argument("--query-codes", default=None, help="packed query codes (hamming mode)")
    p.add_argument("--ckpt", default=None, help="model checkpoint (asym mode)")
    p.add_argument("--queries", default=None, help="raw query vectors (asym mode)")
    p.add_argument("--queries-format", default="fvecs", choices=["fvecs", "bvecs", "idx", "synth"])
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--method", default="genhash", help="method label for the CSV")
    p.add_argument("--out", required=True, help="recall CSV output path")
    _add_common(p)
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("reconstruct", help="render originals/reconstructions/templates as PGM")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", required=True, choices=["fvecs", "bvecs", "idx", "synth"])
    p.add_argument("--shape", required=True, help="image shape, e.g. 28x28")
    p.add_argument("--count", type=int, default=8, help="number of sample columns")
    p.add_argument("--out", required=True, help="PGM output path")
    _add_common(p)
    p.set_defaults(run=cmd_reconstruct)

    p = sub.add_parser("gradcheck", help="verify estimator gradients against enumeration")
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--bits", type=int, default=3)
    p.add_argument("--domain", choices=["zero-one", "plus-minus"], default="zero-one")
    p.add_argument("--w-tol", type=float, default=1e-6)
    p.add_argument("--decoder-tol", type=float, default=1e-4)
    _add_common(p)
    p.set_defaults(run=cmd_gradcheck)

    p = sub.add_parser("baseline", help="fit an ITQ or PCA baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--format", required=True, choices=["fvecs", "bvecs", "idx", "synth"])
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--method", choices=["itq", "pca"], default="itq")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(run=cmd_baseline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except TrainingError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_TRAINING
    except FormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FORMAT
    except (InputError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
