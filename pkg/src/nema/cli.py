"""Command-line entry point: ``nema run|describe|generate|resume``.

Exit status is 0 only when the command fully succeeded; diagnostics go to
standard error.
"""

from __future__ import annotations

import argparse
import sys

from .connectome import ConnectomeError, generate_locomotion_circuit, load_connectome, save_connectome, stats
from .evolution import CheckpointError
from .experiments import ConfigError, load_config, preset_names, resume, run_experiment


def format_stats(st) -> str:
    rows = [
        ("neurons", st.neuron_count),
        ("synapses", st.synapse_count),
        ("excitatory synapses", st.excitatory_count),
        ("inhibitory synapses", st.inhibitory_count),
        ("excitatory neurons", st.excitatory_neurons),
        ("inhibitory neurons", st.inhibitory_neurons),
    ]
    rows += [(f"class {name}", n) for name, n in sorted(st.class_counts.items())]
    rows.append(("sparsity", f"{st.sparsity:.6g}"))
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _overrides(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args.set))
    summary = run_experiment(cfg, log=None if args.quiet else _log)
    print(summary.table())
    for r in summary.results:
        if r.error is not None:
            print(f"error: {r.arm} seed {r.seed}: {r.error}", file=sys.stderr)
    return 0 if summary.ok else 1


def cmd_describe(args) -> int:
    print(format_stats(stats(load_connectome(args.connectome))))
    return 0


def cmd_generate(args) -> int:
    if args.segments < 1:
        raise ConnectomeError("segments must be >= 1")
    c = generate_locomotion_circuit(args.segments)
    save_connectome(c, args.out)
    print(f"wrote {c.n_neurons} neurons and {c.n_synapses} synapses to {args.out}")
    return 0


def cmd_resume(args) -> int:
    _, result = resume(args.checkpoint, log=None if args.quiet else _log, generations=args.generations)
    print(f"{result.arm} seed {result.seed}: {result.generations} generations, best {result.final_best!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nema", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config file or preset")
    r.add_argument("config", help=f"INI file or preset name ({', '.join(preset_names())})")
    r.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value")
    r.add_argument("-q", "--quiet", action="store_true", help="no per-generation progress")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("describe", help="print statistics of a connectome file")
    d.add_argument("connectome")
    d.set_defaults(func=cmd_describe)

    g = sub.add_parser("generate", help="write a generated locomotion circuit")
    g.add_argument("segments", type=int)
    g.add_argument("out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("resume", help="continue a run from checkpoint_<seed>.bin")
    s.add_argument("checkpoint")
    s.add_argument("--generations", type=int, default=None, help="train to this many generations instead")
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=cmd_resume)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConnectomeError, CheckpointError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
