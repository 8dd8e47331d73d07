"""Command-line driver for the single-process simulation.

State lives in a directory: the simulated entities (``system.pkl``) and,
separately, the plaintext reference pipeline used by ``oracle``
(``oracle.pkl``). Ranked results print as ``rank<TAB>owner/image<TAB>value``
with values as scaled integers (votes for the basic scheme).
"""
from __future__ import annotations

import argparse
import os
import pickle
import random
import sys
import time
from pathlib import Path

import numpy as np

from . import he
from .config import SystemConfig, load_config
from .descriptor import build_vocabulary, load_vectors, load_vocabulary, save_vocabulary
from .encvec import (PlainVector, convert_vector, decrypt_score, encrypt_vector, phi_distance,
                     serialize_vector, vector_payload)
from .errors import PicError
from .fixedpoint import encode_array
from .protocol import ALL_PREDICATES, PlainPipeline, System, audit_assert

SYSTEM_FILE = "system.pkl"
ORACLE_FILE = "oracle.pkl"


def _state_dir(args) -> Path:
    return Path(args.state or os.environ.get("PICSEARCH_STATE", "pic_state"))


def _load(args) -> tuple[System, PlainPipeline]:
    d = _state_dir(args)
    if not (d / SYSTEM_FILE).exists():
        raise PicError(f"no initialized system in {d}; run 'picsearch init' first")
    with open(d / SYSTEM_FILE, "rb") as f:
        system = pickle.load(f)
    with open(d / ORACLE_FILE, "rb") as f:
        oracle = pickle.load(f)
    return system, oracle


def _save(args, system: System, oracle: PlainPipeline) -> None:
    d = _state_dir(args)
    d.mkdir(parents=True, exist_ok=True)
    for name, obj in ((SYSTEM_FILE, system), (ORACLE_FILE, oracle)):
        tmp = d / (name + ".tmp")
        with open(tmp, "wb") as f:
            pickle.dump(obj, f)
        os.replace(tmp, d / name)


def _overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise PicError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_init(args) -> int:
    cfg = load_config(args.config) if args.config else SystemConfig()
    cfg = cfg.with_overrides(**_overrides(args.set))
    if args.state is None:
        args.state = os.environ.get("PICSEARCH_STATE", cfg.state_dir)
    if (_state_dir(args) / SYSTEM_FILE).exists() and not args.force:
        raise PicError(f"{_state_dir(args)} already holds a system (use --force to replace)")
    system = System(cfg)
    params = system.tp_init()
    _save(args, system, PlainPipeline(cfg))
    print(f"initialized\tlambda={cfg.lambda_}\td={params.d}\tn_bits={params.n.bit_length()}")
    return 0


def cmd_register(args) -> int:
    system, oracle = _load(args)
    system.register(args.user, args.policy)
    oracle.register(args.user, args.policy)
    _save(args, system, oracle)
    print(f"registered\t{args.user}")
    return 0


def cmd_build_vocab(args) -> int:
    images = load_vectors(args.vectors, args.format, args.manifest)
    vecs = np.vstack([img.vectors for img in images])
    vocab = build_vocabulary(vecs, v=args.v, max_iters=args.iters, seed=args.seed)
    save_vocabulary(args.out, vocab)
    print(f"vocabulary\t{args.out}\tv={vocab.v}\tdim={vocab.dim}\tinertia={vocab.inertia_history[-1]:.6g}")
    return 0


def cmd_upload(args) -> int:
    system, oracle = _load(args)
    images = load_vectors(args.vectors, args.format, args.manifest)
    if system.config.scheme == "basic":
        system.upload_basic(args.user, images, args.seed)
        oracle.upload_basic(args.user, images, args.seed)
    else:
        vocab = load_vocabulary(args.vocab) if args.vocab else None
        system.upload_advanced(args.user, images, args.seed, vocab)
        oracle.upload_advanced(args.user, images, args.seed, vocab)
    _save(args, system, oracle)
    print(f"uploaded\t{args.user}\t{len(images)} images")
    return 0


def _query(args) -> np.ndarray:
    images = load_vectors(args.query, args.format, args.manifest)
    if not images:
        raise PicError("query file holds no vectors")
    return np.vstack([img.vectors for img in images])


def _search_kwargs(args) -> dict:
    kw = {"k_nn": args.k, "beta": args.beta}
    if args.theta is not None:
        kw["theta"] = args.theta
    if args.theta_prime is not None:
        kw["theta_prime"] = args.theta_prime
    return kw


def _print_ranked(ranked, top) -> None:
    for rank, (owner, image, value) in enumerate(ranked[:top] if top else ranked, 1):
        print(f"{rank}\t{owner}/{image}\t{value}")


def cmd_search(args) -> int:
    system, oracle = _load(args)
    if args.workers:
        system.set_workers(args.workers)
    attrs = [a for a in (args.attrs or "").split(",") if a.strip()]
    res = system.search(args.user, _query(args), attrs, **_search_kwargs(args))
    print(f"access: {res.permitted_owners} owners", file=sys.stderr)
    _print_ranked(res.ranked, args.top)
    # the audit trail grew; keep it
    _save(args, system, oracle)
    return 0


def cmd_oracle(args) -> int:
    _, oracle = _load(args)
    attrs = [a for a in (args.attrs or "").split(",") if a.strip()]
    ranked = oracle.search(_query(args), attrs, **_search_kwargs(args))
    _print_ranked(ranked, args.top)
    return 0


def cmd_audit(args) -> int:
    system, _ = _load(args)
    ok = True
    for name, pred in ALL_PREDICATES.items():
        passed = audit_assert(system.log, pred)
        ok &= passed
        print(f"{name}\t{'pass' if passed else 'FAIL'}")
    return 0 if ok else 1


def bench(sizes, lambda_: int = 128, m_lvl: int = 2, reps: int = 1, seed: int = 0) -> list[tuple]:
    """Timings of the per-vector operations and the actual serialized sizes."""
    rng = random.Random(seed)
    params = he.gen_params(lambda_, m_lvl, rng)
    cfg = SystemConfig(lambda_=lambda_, m_lvl=m_lvl).fxp
    k, f = he.gen_key(params, rng), he.gen_key(params, rng)
    nprng = np.random.default_rng(seed)
    rows = []
    for dim in sizes:
        x = PlainVector.from_raw(encode_array(nprng.uniform(0, 255, dim), cfg), cfg)
        y = PlainVector.from_raw(encode_array(nprng.uniform(0, 255, dim), cfg), cfg)
        timings = {}
        t = time.perf_counter()
        for _ in range(reps):
            ex = encrypt_vector(x, k, rng)
        timings["encrypt_vector"] = (time.perf_counter() - t) / reps
        ey = encrypt_vector(y, k, rng)
        t = time.perf_counter()
        for _ in range(reps):
            conv = convert_vector(ex, f, "append")
        timings["convert_vector"] = (time.perf_counter() - t) / reps
        t = time.perf_counter()
        for _ in range(reps):
            c = phi_distance(ex, ey)
        timings["phi_distance"] = (time.perf_counter() - t) / reps
        t = time.perf_counter()
        for _ in range(reps):
            decrypt_score(c, k, cfg)
        timings["decrypt_score"] = (time.perf_counter() - t) / reps
        for op, sec in timings.items():
            rows.append(("time", op, dim, sec))
        rows.append(("size", "encvector_payload", dim, len(vector_payload(conv))))
        rows.append(("size", "encvector_serialized", dim, len(serialize_vector(conv))))
        rows.append(("size", "ciphertext_serialized", dim, len(he.serialize_ciphertext(c))))
    return rows


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    for kind, op, dim, val in bench(sizes, args.lambda_, args.m_lvl, args.reps, args.seed):
        shown = f"{val:.6f}" if kind == "time" else str(val)
        print(f"{kind}\t{op}\tdim={dim}\t{shown}")
    return 0


def _add_query_args(p) -> None:
    p.add_argument("user")
    p.add_argument("query", help="query vectors (all records form one image)")
    p.add_argument("--attrs", default="", help="comma-separated raw attributes")
    p.add_argument("--format", default="fvecs", choices=["fvecs", "tsv"])
    p.add_argument("--manifest")
    p.add_argument("--k", type=int, default=None, help="nearest neighbours per query vector")
    p.add_argument("--beta", type=int, default=None, help="clusters probed per query vector")
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--theta-prime", dest="theta_prime", type=float, default=None)
    p.add_argument("--top", type=int, default=0, help="print at most this many results")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="picsearch", description=__doc__.splitlines()[0])
    ap.add_argument("--state", default=None, help="state directory (default: $PICSEARCH_STATE or pic_state)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("init", help="initialize a system from a key=value config")
    p.add_argument("config", nargs="?")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("register", help="register a user and announce their policy")
    p.add_argument("user")
    p.add_argument("--policy", default=None, help='s-expression, e.g. (or "friend" "family")')
    p.set_defaults(fn=cmd_register)

    p = sub.add_parser("build-vocab", help="k-means visual vocabulary from vectors")
    p.add_argument("vectors")
    p.add_argument("--v", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.add_argument("--format", default="fvecs", choices=["fvecs", "tsv"])
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_build_vocab)

    p = sub.add_parser("upload", help="encrypt and upload a user's images")
    p.add_argument("user")
    p.add_argument("vectors")
    p.add_argument("--manifest")
    p.add_argument("--format", default="fvecs", choices=["fvecs", "tsv"])
    p.add_argument("--vocab", help="prebuilt vocabulary (advanced scheme)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_upload)

    p = sub.add_parser("search", help="privacy-preserving search")
    _add_query_args(p)
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("oracle", help="same search on plaintext")
    _add_query_args(p)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("audit", help="check information-flow predicates on the log")
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("bench", help="per-operation timings and ciphertext sizes")
    p.add_argument("--sizes", default="128")
    p.add_argument("--lambda", dest="lambda_", type=int, default=128)
    p.add_argument("--m-lvl", dest="m_lvl", type=int, default=2)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PicError as exc:
        print(f"error\t{exc.kind}\t{exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error\tIO\t{exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
