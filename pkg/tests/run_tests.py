#!/usr/bin/env python3
"""
Script to run selected test suites, e.g. ``python tests/run_tests.py --test embedder``.
"""

import os
import sys
import argparse
import unittest

SUITES = {
    "grid": ["test_grid"],
    "requests": ["test_vrr"],
    "embedder": ["test_embedder"],
    "traffic": ["test_traffic"],
    "hypervisor": ["test_hypervisor"],
    "metrics": ["test_metrics", "test_plotting"],
    "config": ["test_models"],
    "cli": ["test_cli", "test_database", "test_tracking"],
    "acceptance": ["test_replication"],
}


def main():
    """Run tests based on the command line arguments."""
    parser = argparse.ArgumentParser(description="Run simulator tests.")
    parser.add_argument("--test", choices=sorted(SUITES), help="Which suite to run (default: all but acceptance)")
    parser.add_argument("--acceptance", action="store_true",
                        help="Also run the 20-seed replication (sets HYPERVISOR_ACCEPTANCE=1)")
    args = parser.parse_args()

    tests_dir = os.path.dirname(os.path.abspath(__file__))
    sys.path.insert(0, tests_dir)
    if args.acceptance or args.test == "acceptance":
        os.environ["HYPERVISOR_ACCEPTANCE"] = "1"

    if args.test:
        names = SUITES[args.test]
    else:
        names = [n for key, group in SUITES.items() if key != "acceptance" or args.acceptance for n in group]
    print(f"Running {', '.join(names)}...")
    suite = unittest.TestLoader().loadTestsFromNames(names)
    result = unittest.TextTestRunner(verbosity=2).run(suite)
    sys.exit(0 if result.wasSuccessful() else 1)


if __name__ == "__main__":
    main()
