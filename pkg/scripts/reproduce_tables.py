#!/usr/bin/env python3
"""
Batch runner for the experiment configurations in config/.

Runs every matching INI file through the experiment runner, one output
directory per configuration, and collects the solve summaries into a single
table plus a JSON report.

Usage:
    python scripts/reproduce_tables.py [options]

Options:
    --config-dir PATH   Directory with *.ini run configurations (default: ./config)
    --pattern GLOB      Configuration file pattern (default: example*.ini)
    --out PATH          Output root (default: ./runs)
    --dry-run           List the configurations without running them
    --verbose           Enable debug logging
"""

import argparse
import io
import json
import sys
import time
from pathlib import Path
from typing import Dict, List

import pandas as pd
from loguru import logger

# Add project root to path for imports
current_dir = Path(__file__).parent
project_root = current_dir.parent
sys.path.insert(0, str(project_root))

from hdgml.cli import load_config, run  # noqa: E402
from hdgml.core.exceptions import ConfigurationError  # noqa: E402
from hdgml.core.logging import setup_logging  # noqa: E402


class TableReproducer:
    """Runs a set of configurations and gathers their summary tables"""

    def __init__(self, config_dir: Path, pattern: str, out_dir: Path, dry_run: bool = False):
        self.config_dir = config_dir
        self.pattern = pattern
        self.out_dir = out_dir
        self.dry_run = dry_run
        self.stats = {"total_found": 0, "succeeded": 0, "not_converged": 0, "failed": 0, "total_time": 0.0}

    def find_configs(self) -> List[Path]:
        configs = sorted(self.config_dir.glob(self.pattern))
        self.stats["total_found"] = len(configs)
        logger.info(f"Found {len(configs)} configurations matching {self.pattern} in {self.config_dir}")
        return configs

    def run_one(self, path: Path) -> Dict:
        target = self.out_dir / path.stem
        try:
            config, text = load_config(path)
        except ConfigurationError as e:
            logger.error(f"{path}: {e}")
            self.stats["failed"] += 1
            return {"config": path.name, "status": 1, "message": str(e)}
        start = time.time()
        status = run(config, target, config_text=text)
        elapsed = time.time() - start
        key = {0: "succeeded", 2: "not_converged"}.get(status, "failed")
        self.stats[key] += 1
        logger.info(f"{path.name}: status {status} in {elapsed:.1f}s")
        return {"config": path.name, "mode": config.mode, "status": status, "output": str(target)}

    def collect(self, details: List[Dict]) -> pd.DataFrame:
        frames = []
        for entry in details:
            summary = Path(entry.get("output", "")) / "summary.csv"
            if entry.get("mode") == "solve" and summary.exists():
                frame = pd.read_csv(io.StringIO(summary.read_text()))
                frame.insert(0, "config", entry["config"])
                frames.append(frame)
        if not frames:
            return pd.DataFrame(columns=["config", "level", "dofs", "iter", "seconds"])
        return pd.concat(frames, ignore_index=True)

    def run_all(self) -> int:
        configs = self.find_configs()
        if self.dry_run:
            for path in configs:
                logger.info(f"Would run {path}")
            return 0
        start = time.time()
        details = [self.run_one(path) for path in configs]
        self.stats["total_time"] = time.time() - start

        self.out_dir.mkdir(parents=True, exist_ok=True)
        table = self.collect(details)
        table.to_csv(self.out_dir / "tables.csv", index=False, lineterminator="\n")
        report = {"summary": self.stats, "details": details}
        with open(self.out_dir / "report.json", "w") as f:
            json.dump(report, f, indent=2, default=str)

        logger.info("=" * 60)
        logger.info("RUN SUMMARY")
        logger.info("=" * 60)
        logger.info(f"Configurations: {self.stats['total_found']}")
        logger.info(f"Succeeded: {self.stats['succeeded']}")
        logger.info(f"Not converged: {self.stats['not_converged']}")
        logger.info(f"Failed: {self.stats['failed']}")
        logger.info(f"Total time: {self.stats['total_time']:.2f} seconds")
        logger.info("=" * 60)
        return 1 if self.stats["failed"] else 0


def parse_arguments():
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description="Run experiment configurations and collect iteration tables",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s                                  # All example*.ini files
  %(prog)s --pattern 'example1_p2_k100_*'   # Smoothing-step comparison
  %(prog)s --pattern 'lfa_*.ini' --out runs/lfa
        """,
    )
    parser.add_argument("--config-dir", type=Path, default=project_root / "config", help="Configuration directory")
    parser.add_argument("--pattern", default="example*.ini", help="Configuration file pattern")
    parser.add_argument("--out", type=Path, default=Path("runs"), help="Output root")
    parser.add_argument("--dry-run", action="store_true", help="List configurations without running them")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")
    return parser.parse_args()


def main():
    args = parse_arguments()
    setup_logging(args.out / "reproduce.log", level="DEBUG" if args.verbose else None)
    if not args.config_dir.exists():
        logger.error(f"Configuration directory {args.config_dir} does not exist")
        sys.exit(1)
    reproducer = TableReproducer(args.config_dir, args.pattern, args.out, args.dry_run)
    sys.exit(reproducer.run_all())


if __name__ == "__main__":
    main()
