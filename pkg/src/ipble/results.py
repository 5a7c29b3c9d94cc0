"""Result files: puts.csv, nodes.csv, summary.json, sweep.csv and cdf.csv.

CSV files use ',' separators, '.' decimals and a header row; all times are
integer microseconds so the files are bit-identical across platforms.
"""
from __future__ import annotations

import csv
import json
import math
import os
import shutil
import tempfile
from pathlib import Path

from . import metrics as M

PUTS_HEADER = ["id", "producer", "send_us", "ack_us", "hops"]
NODES_HEADER = ["node", "tx_us", "rx_us", "frames_tx", "frames_rx", "dropped_adv_events",
                "queue_drops", "duplicates"]
EXTRA_COUNTERS = ["missed_pointers", "aux_losses", "ip_duplicates", "put_duplicates", "no_route",
                  "noise_rx", "adv_events", "conn_events", "conn_events_skipped",
                  "buffer_high_watermark", "dedup_evictions"]


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_puts(log: M.MetricsLog, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(PUTS_HEADER)
        for r in log.records():
            w.writerow([r.id, r.producer, r.send_us, "LOST" if r.ack_us is None else r.ack_us, r.hops])


def write_nodes(log: M.MetricsLog, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(NODES_HEADER)
        for st in log.nodes:
            w.writerow([getattr(st, k) for k in NODES_HEADER])


def build_summary(log: M.MetricsLog) -> dict:
    out = M.summary(log)
    out["counters"] = {str(st.node): {"role": st.role, **{k: getattr(st, k) for k in EXTRA_COUNTERS}}
                       for st in log.nodes}
    out["frame_totals"] = M.frame_totals(log)
    return out


def write_run(log: M.MetricsLog, out_dir, scenario: dict | None = None) -> Path:
    """Write one run's files into ``out_dir`` atomically (temp dir, then rename)."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=out_dir.parent))
    try:
        write_puts(log, tmp / "puts.csv")
        write_nodes(log, tmp / "nodes.csv")
        summary = build_summary(log)
        if scenario is not None:
            summary["scenario"] = scenario
        with open(tmp / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out_dir


def load_run(run_dir) -> tuple:
    """Rebuild a :class:`MetricsLog` from a run directory; returns ``(log, stored_summary)``."""
    run_dir = Path(run_dir)
    with open(run_dir / "summary.json") as fh:
        stored = json.load(fh)
    log = M.MetricsLog(0, stored.get("mode", "adv"), stored.get("topology", "star"))
    log.duration_us = int(stored["duration_us"])
    log.frames = dict(stored.get("frames", {}))
    with open(run_dir / "puts.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PUTS_HEADER:
            raise ValueError(f"{run_dir / 'puts.csv'}: unexpected header {reader.fieldnames}")
        for row in reader:
            rec = M.PutRecord(int(row["id"]), int(row["producer"]), int(row["send_us"]), int(row["hops"]))
            rec.ack_us = None if row["ack_us"] == "LOST" else int(row["ack_us"])
            log.puts[rec.id] = rec
    with open(run_dir / "nodes.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != NODES_HEADER:
            raise ValueError(f"{run_dir / 'nodes.csv'}: unexpected header {reader.fieldnames}")
        for row in reader:
            st = M.NodeStats(int(row["node"]))
            for k in NODES_HEADER[1:]:
                setattr(st, k, int(row[k]))
            log.nodes.append(st)
    return log, stored


def recompute_summary(log: M.MetricsLog) -> dict:
    """The summary fields derivable from puts.csv and nodes.csv alone."""
    s = M.summary(log)
    return {k: s[k] for k in ("sent", "acked", "pdr", "rtt_p50_us", "rtt_p90_us", "rtt_p99_us",
                              "utilization")}


def find_runs(results_dir) -> list:
    root = Path(results_dir)
    if (root / "summary.json").is_file():
        return [root]
    return sorted(p.parent for p in root.glob("*/summary.json"))


def write_sweep_csv(rows: list, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["value", "pdr", "p50", "p90"])
        for value, log in rows:
            s = M.summary(log)
            w.writerow([value, _fmt(s["pdr"]), _fmt(s["rtt_p50_us"]), _fmt(s["rtt_p90_us"])])


def write_cdf_csv(runs: list, path: Path, resolution: int = 1000) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["run", "t_us", "fraction"])
        for name, log in runs:
            if not log.puts:
                continue
            for t, frac in M.rtt_cdf(log, resolution):
                w.writerow([name, t, repr(frac)])


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def format_table(rows: list) -> str:
    """Plain-text comparison table; ``rows`` are ``(name, log)`` pairs."""
    head = ["run", "mode", "topo", "sent", "PDR", "p50 ms", "p90 ms", "p99 ms", "frames",
            "max tx", "min rx"]
    body = []
    for name, log in rows:
        s = M.summary(log)
        util = s["utilization"].values()
        body.append([
            name, s["mode"], s["topology"], str(s["sent"]),
            "-" if s["pdr"] is None else f"{s['pdr'] * 100:.2f}%",
            _ms(s["rtt_p50_us"]), _ms(s["rtt_p90_us"]), _ms(s["rtt_p99_us"]),
            str(sum(st.frames_tx for st in log.nodes)),
            f"{max((u['tx'] for u in util), default=0) * 100:.2f}%",
            f"{min((u['rx'] for u in s['utilization'].values()), default=0) * 100:.2f}%",
        ])
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(head, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines)


def _ms(v) -> str:
    return "inf" if v is None else f"{v / 1000:.1f}"
