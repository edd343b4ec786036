#!/usr/bin/env python3
"""
riskflow - Main Entry Point
Risk contributions and risk budgeting for single-period and continuous-time portfolios
"""

import sys
import os
import logging

# Add src directory to Python path
current_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, current_dir)

from core.riskflow_manager import RiskFlowManager
from exceptions.riskflow_exceptions import RiskFlowException
from infrastructure.logging import LoggingManager


def main():
    """Main entry point for the riskflow command line"""
    try:
        # Setup logging (defaults)
        LoggingManager.setup_logging({})
        logger = logging.getLogger(__name__)

        logger.debug("Starting riskflow")

        manager = RiskFlowManager()
        code = manager.run_from_command_line()

    except KeyboardInterrupt:
        print("\nInterrupted by user.", file=sys.stderr)
        sys.exit(130)
    except RiskFlowException as e:
        print(f"\nError: {e}", file=sys.stderr)
        sys.exit(e.exit_code)
    except Exception as e:
        print(f"\nUnexpected error: {e}", file=sys.stderr)
        print("Please check your configuration and try again.", file=sys.stderr)
        sys.exit(2)
    sys.exit(code)


if __name__ == "__main__":
    main()
