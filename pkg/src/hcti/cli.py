"""Command-line entry points for the platform.

    hcti serve       --config platform.json
    hcti ingest      --manifest feeds.manifest [--once] --config ...
    hcti extract     --in brief.txt [--link] [--html] --config ...
    hcti scan-ingest --export scan.jsonl --orgs orgs.map [--policy DIR] ...
    hcti assess      --org st-vincent --as-of 2026-03-11T00:00:00Z ...
    hcti evaluate    --windows w.jsonl --train-end ... --test-end ... ...
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .errors import HctiError
from .ingest import fetch_feed_entry, load_feed_manifest
from .risk.evaluate import time_split_evaluate
from .risk.windows import LabeledWindow
from .scenarios import ScenarioClass
from .service.app import serve
from .service.config import load_config
from .service.state import PlatformState
from .util import canonical_json, parse_ts


def _state(args) -> PlatformState:
    config = load_config(Path(args.config) if args.config else None)
    state = PlatformState(config)
    state.replay()
    return state


def _cmd_serve(args):
    serve(Path(args.config) if args.config else None)


def _cmd_ingest(args):
    state = _state(args)
    manifest_path = Path(args.manifest)
    entries = load_feed_manifest(manifest_path)
    base_dir = manifest_path.parent
    while True:
        for entry in entries:
            doc = fetch_feed_entry(entry, base_dir=base_dir)
            summary = state.ingest_cti(doc)
            print(f"{entry.location}: {canonical_json(summary)}")
        if args.once:
            break
        time.sleep(min(entry.poll_seconds for entry in entries))


def _cmd_extract(args):
    state = _state(args)
    text = Path(args.infile).read_text(encoding="utf-8")
    summary = state.ingest_brief(
        text, source_id=args.source_id, link=args.link, html=args.html)
    print(canonical_json(summary))


def _cmd_scan_ingest(args):
    config = load_config(Path(args.config) if args.config else None)
    if args.orgs:
        config.org_mapping = Path(args.orgs)
    if args.policy:
        config.policy_dir = Path(args.policy)
    config.validate()
    state = PlatformState(config)
    state.replay()
    text = Path(args.export).read_text(encoding="utf-8")
    summary = state.ingest_scan(text, interactive=args.interactive)
    print(canonical_json(summary))
    if args.incidents:
        incidents = state.ingest_incidents(
            Path(args.incidents).read_text(encoding="utf-8"))
        print(canonical_json(incidents))


def _cmd_assess(args):
    state = _state(args)
    as_of = parse_ts(args.as_of) if args.as_of else None
    result = state.run_assessment(args.org, as_of=as_of)
    print(canonical_json(result.to_dict()))


def _cmd_evaluate(args):
    state = _state(args)
    windows = []
    for line in Path(args.windows).read_text().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        windows.append(LabeledWindow(
            org_id=row["org_id"],
            scenario=ScenarioClass(row["scenario"]),
            window_end=parse_ts(row["window_end"]),
            outcome=bool(row["outcome"]),
        ))
    report = time_split_evaluate(
        windows, parse_ts(args.train_end), parse_ts(args.test_end),
        hyperparams=state.config.hyperparams, stores=state)
    state.record_metrics(report.to_dict())
    print(report.to_text())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hcti")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="replay state and serve the HTTP API")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("ingest", help="ingest CTI documents from a feed manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--once", action="store_true")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("extract", help="extract IOCs/entities from a brief")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--link", action="store_true",
                   help="link mentions into the knowledge graph")
    p.add_argument("--html", action="store_true")
    p.add_argument("--source-id", default="cli")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("scan-ingest", help="ingest a scan-export document")
    p.add_argument("--export", required=True)
    p.add_argument("--orgs", help="org mapping file (cidr-or-suffix org_id)")
    p.add_argument("--policy", help="compliance policy directory")
    p.add_argument("--interactive", action="store_true",
                   help="export came from a consented interactive scan")
    p.add_argument("--incidents",
                   help="JSONL of {year, month, sector, count} statistics")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_scan_ingest)

    p = sub.add_parser("assess", help="assess an organization and persist")
    p.add_argument("--org", required=True)
    p.add_argument("--as-of")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_assess)

    p = sub.add_parser("evaluate", help="time-split train/evaluate")
    p.add_argument("--windows", required=True,
                   help="JSONL of {org_id, scenario, window_end, outcome}")
    p.add_argument("--train-end", required=True)
    p.add_argument("--test-end", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_evaluate)

    args = parser.parse_args(argv)
    try:
        args.func(args)
    except HctiError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
