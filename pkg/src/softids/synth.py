"""Synthetic connection records in KDD Cup 1999 file format.

The generator mimics the per-attack-type signatures of the 10% training file
(protocol/service/flag mix, byte counts, traffic-window rates) with jitter,
and reproduces its class mix at a chosen fraction. It exists so the pipeline
can be exercised end to end without the real data; accuracy figures obtained
on it say nothing about real traffic.
"""

from __future__ import annotations

import argparse
import gzip
from pathlib import Path

import numpy as np

from .kdd import ATTRIBUTE_NAMES

# attack-type counts in kddcup.data_10_percent
TYPE_COUNTS = {
    "normal": 97278, "smurf": 280790, "neptune": 107201, "back": 2203, "teardrop": 979,
    "pod": 264, "land": 21, "satan": 1589, "ipsweep": 1247, "portsweep": 1040, "nmap": 231,
    "warezclient": 1020, "guess_passwd": 53, "warezmaster": 20, "imap": 12, "ftp_write": 8,
    "multihop": 7, "phf": 4, "spy": 2, "buffer_overflow": 30, "rootkit": 10,
    "loadmodule": 9, "perl": 3,
}

_COL = {name: i for i, name in enumerate(ATTRIBUTE_NAMES)}
_NORMAL_SERVICES = ["http", "smtp", "ftp_data", "domain_u", "private", "ftp", "telnet",
                    "urp_i", "ecr_i", "finger", "auth", "pop_3", "other"]
_NORMAL_WEIGHTS = np.array([60, 10, 8, 6, 3, 2, 1.5, 1, 1, 1, 1, 1, 4.5])
_ANY_SERVICES = ["private", "http", "telnet", "ftp", "smtp", "finger", "other", "domain",
                 "auth", "pop_3", "imap4", "sunrpc", "link", "whois", "netbios_ns"]


def _rate(rng, lo, hi):
    return float(np.round(rng.uniform(lo, hi), 2))


def _record(kind: str, rng: np.random.Generator) -> list:
    v: list = [0] * 41
    c = _COL

    def put(name, value):
        v[c[name]] = value

    put("protocol_type", "tcp")
    put("service", "http")
    put("flag", "SF")
    for name in ("land", "logged_in", "is_host_login", "is_guest_login"):
        put(name, 0)
    put("count", int(rng.integers(1, 10)))
    put("srv_count", int(rng.integers(1, 12)))
    put("same_srv_rate", 1.0)
    put("dst_host_count", int(rng.integers(1, 256)))
    put("dst_host_srv_count", int(rng.integers(1, 256)))
    put("dst_host_same_srv_rate", _rate(rng, 0.5, 1.0))
    put("dst_host_diff_srv_rate", _rate(rng, 0.0, 0.05))
    put("dst_host_same_src_port_rate", _rate(rng, 0.0, 0.1))

    if kind == "normal":
        svc = rng.choice(_NORMAL_SERVICES, p=_NORMAL_WEIGHTS / _NORMAL_WEIGHTS.sum())
        proto = {"domain_u": "udp", "private": rng.choice(["udp", "tcp"]), "urp_i": "icmp",
                 "ecr_i": "icmp"}.get(svc, "tcp")
        put("protocol_type", str(proto))
        put("service", str(svc))
        put("flag", str(rng.choice(["SF", "S1", "REJ", "RSTO"], p=[0.95, 0.02, 0.02, 0.01])))
        put("duration", int(rng.exponential(2.0)) if rng.random() < 0.2 else 0)
        put("src_bytes", int(rng.lognormal(5.5, 1.0)))
        put("dst_bytes", int(rng.lognormal(7.5, 1.3)) if proto == "tcp" else int(rng.lognormal(4, 1)))
        put("logged_in", int(proto == "tcp" and rng.random() < 0.9))
        put("hot", int(rng.random() < 0.05) * int(rng.integers(1, 4)))
        put("count", int(rng.integers(1, 30)))
        put("srv_count", int(rng.integers(1, 40)))
        put("srv_diff_host_rate", _rate(rng, 0.0, 0.3))
        put("dst_host_srv_count", int(rng.integers(50, 256)))
        put("dst_host_srv_diff_host_rate", _rate(rng, 0.0, 0.1))
        if rng.random() < 0.03:
            put("rerror_rate", _rate(rng, 0.3, 1.0))
    elif kind == "smurf":
        put("protocol_type", "icmp")
        put("service", "ecr_i")
        put("src_bytes", int(rng.choice([1032, 520])))
        put("count", int(rng.integers(300, 512)))
        put("srv_count", int(rng.integers(300, 512)))
        put("dst_host_count", 255)
        put("dst_host_srv_count", 255)
        put("dst_host_same_srv_rate", 1.0)
        put("dst_host_same_src_port_rate", _rate(rng, 0.9, 1.0))
    elif kind == "neptune":
        put("service", str(rng.choice(_ANY_SERVICES)))
        put("flag", str(rng.choice(["S0", "REJ"], p=[0.9, 0.1])))
        put("count", int(rng.integers(80, 300)))
        put("srv_count", int(rng.integers(1, 25)))
        rej = v[c["flag"]] == "REJ"
        put("serror_rate", 0.0 if rej else _rate(rng, 0.9, 1.0))
        put("srv_serror_rate", 0.0 if rej else _rate(rng, 0.9, 1.0))
        put("rerror_rate", _rate(rng, 0.9, 1.0) if rej else 0.0)
        put("same_srv_rate", _rate(rng, 0.0, 0.1))
        put("diff_srv_rate", _rate(rng, 0.04, 0.08))
        put("dst_host_count", 255)
        put("dst_host_srv_count", int(rng.integers(1, 25)))
        put("dst_host_same_srv_rate", _rate(rng, 0.0, 0.1))
        put("dst_host_diff_srv_rate", _rate(rng, 0.04, 0.08))
        put("dst_host_serror_rate", 0.0 if rej else 1.0)
        put("dst_host_srv_serror_rate", 0.0 if rej else 1.0)
    elif kind == "back":
        put("src_bytes", int(rng.normal(54540, 200)))
        put("dst_bytes", int(rng.normal(8314, 500)))
        put("hot", 2)
        put("logged_in", 1)
        put("num_compromised", 1)
    elif kind == "teardrop":
        put("protocol_type", "udp")
        put("service", "private")
        put("src_bytes", 28)
        put("wrong_fragment", 3)
        put("count", int(rng.integers(1, 120)))
    elif kind == "pod":
        put("protocol_type", "icmp")
        put("service", str(rng.choice(["ecr_i", "tim_i"])))
        put("src_bytes", 1480)
        put("wrong_fragment", 1)
    elif kind == "land":
        put("service", str(rng.choice(["finger", "telnet", "http"])))
        put("flag", "S0")
        put("land", 1)
        put("serror_rate", 1.0)
        put("srv_serror_rate", 1.0)
    elif kind in ("satan", "portsweep", "nmap"):
        put("service", str(rng.choice(_ANY_SERVICES)))
        put("flag", str(rng.choice(["REJ", "RSTO", "RSTR", "S0", "SF"], p=[0.4, 0.2, 0.2, 0.1, 0.1])))
        put("duration", int(rng.integers(0, 3)) if kind == "portsweep" else 0)
        put("count", int(rng.integers(1, 20)) if kind != "satan" else int(rng.integers(1, 200)))
        put("rerror_rate", _rate(rng, 0.5, 1.0))
        put("srv_rerror_rate", _rate(rng, 0.5, 1.0))
        put("same_srv_rate", _rate(rng, 0.0, 0.5))
        put("diff_srv_rate", _rate(rng, 0.3, 1.0))
        put("dst_host_count", int(rng.integers(1, 256)))
        put("dst_host_srv_count", int(rng.integers(1, 20)))
        put("dst_host_same_srv_rate", _rate(rng, 0.0, 0.2))
        put("dst_host_diff_srv_rate", _rate(rng, 0.3, 1.0))
        put("dst_host_same_src_port_rate", _rate(rng, 0.5, 1.0) if kind == "portsweep" else _rate(rng, 0, 0.2))
        put("dst_host_rerror_rate", _rate(rng, 0.5, 1.0))
        put("dst_host_srv_rerror_rate", _rate(rng, 0.5, 1.0))
    elif kind == "ipsweep":
        put("protocol_type", "icmp")
        put("service", str(rng.choice(["eco_i", "ecr_i"], p=[0.9, 0.1])))
        put("src_bytes", int(rng.choice([8, 18])))
        put("srv_count", int(rng.integers(1, 60)))
        put("srv_diff_host_rate", 1.0)
        put("dst_host_count", int(rng.integers(1, 100)))
        put("dst_host_srv_count", int(rng.integers(1, 100)))
        put("dst_host_same_src_port_rate", 1.0)
        put("dst_host_srv_diff_host_rate", _rate(rng, 0.3, 1.0))
    elif kind in ("warezclient", "warezmaster", "ftp_write"):
        put("service", str(rng.choice(["ftp_data", "ftp"])))
        put("duration", int(rng.integers(0, 300)))
        put("src_bytes", int(rng.lognormal(9, 1.5)))
        put("dst_bytes", int(rng.lognormal(6, 2)) if kind != "warezmaster" else int(rng.lognormal(13, 1)))
        put("logged_in", 1)
        put("hot", int(rng.integers(0, 30)))
        put("is_guest_login", int(rng.random() < 0.7))
        put("num_file_creations", int(kind == "ftp_write") * int(rng.integers(1, 3)))
        put("dst_host_count", int(rng.integers(1, 60)))
        put("dst_host_srv_count", int(rng.integers(1, 60)))
    elif kind in ("guess_passwd", "imap", "phf", "multihop", "spy"):
        svc = {"guess_passwd": "telnet", "imap": "imap4", "phf": "http", "multihop": "ftp_data",
               "spy": "telnet"}[kind]
        put("service", svc)
        put("flag", str(rng.choice(["SF", "RSTO", "SH", "S3"])))
        put("duration", int(rng.integers(0, 20)) if kind != "spy" else int(rng.integers(10000, 30000)))
        put("src_bytes", int(rng.lognormal(5, 1)))
        put("dst_bytes", int(rng.lognormal(5, 1.5)))
        put("num_failed_logins", int(kind == "guess_passwd"))
        put("hot", int(rng.integers(0, 3)))
        put("logged_in", int(kind != "guess_passwd"))
        put("dst_host_count", int(rng.integers(1, 30)))
        put("dst_host_srv_count", int(rng.integers(1, 30)))
    else:  # u2r: buffer_overflow, rootkit, loadmodule, perl
        put("service", str(rng.choice(["telnet", "ftp_data", "login"], p=[0.7, 0.2, 0.1])))
        put("duration", int(rng.integers(20, 800)))
        put("src_bytes", int(rng.lognormal(7, 1.2)))
        put("dst_bytes", int(rng.lognormal(8, 1.2)))
        put("logged_in", 1)
        put("hot", int(rng.integers(1, 5)))
        put("num_compromised", int(rng.integers(0, 3)))
        put("root_shell", int(rng.random() < 0.8))
        put("num_root", int(rng.integers(0, 3)))
        put("num_file_creations", int(rng.integers(0, 3)))
        put("num_shells", int(rng.random() < 0.3))
        put("dst_host_count", int(rng.integers(1, 20)))
        put("dst_host_srv_count", int(rng.integers(1, 20)))
    return v


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def type_counts(fraction: float) -> dict[str, int]:
    """Per-type counts at ``fraction`` of the 10% file; types under 100 records are kept whole."""
    return {k: (n if n < 100 else max(1, int(round(n * fraction)))) for k, n in TYPE_COUNTS.items()}


def generate_lines(fraction: float = 0.1, seed: int = 0) -> list[str]:
    rng = np.random.default_rng(seed)
    kinds = [k for k, n in type_counts(fraction).items() for _ in range(n)]
    order = rng.permutation(len(kinds))
    lines = []
    for i in order:
        kind = kinds[i]
        lines.append(",".join(_fmt(x) for x in _record(kind, rng)) + f",{kind}.")
    return lines


def write(path: str | Path, fraction: float = 0.1, seed: int = 0) -> Path:
    path = Path(path)
    text = "\n".join(generate_lines(fraction, seed)) + "\n"
    if path.suffix == ".gz":
        with gzip.GzipFile(path, "wb", mtime=0) as fh:
            fh.write(text.encode("ascii"))
    else:
        path.write_text(text)
    return path


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Write synthetic KDD-format connection records.")
    ap.add_argument("out")
    ap.add_argument("--fraction", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    write(args.out, args.fraction, args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
