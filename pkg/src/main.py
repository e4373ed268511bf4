"""
Main entry point for the sediment replenishment control toolkit.

    python -m src.main identify --config C --data D
    python -m src.main solve    --config C --out DIR
    python -m src.main verify   --config C --out DIR
    python -m src.main simulate --config C --policy DIR --out DIR
    python -m src.main moments  --config C
"""
import argparse
import sys
import traceback
from dataclasses import replace
from typing import Optional, Sequence

from dotenv import load_dotenv

from src.config import RunConfig
from src.domain.errors import ConvergenceError, SedimentControlError
from src.infrastructure.artifact_store import CsvArtifactStore
from src.infrastructure.store_factory import create_store
from src.services.calibration_service import CalibrationService
from src.services.simulation_service import SimulationService
from src.services.solver_service import SolverService
from src.services.verification_service import VerificationService


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='sedctrl',
        description='Sediment replenishment under costly observation and model uncertainty',
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON configuration file (defaults when omitted)')
    common.add_argument('--seed', type=int, help='overrides the configured RNG seed')

    sub = parser.add_subparsers(dest='command', required=True)
    identify = sub.add_parser('identify', parents=[common], help='calibrate the streamflow model')
    identify.add_argument('--data', required=True, help='CSV of (timestamp, discharge m3/s)')
    identify.add_argument('--out', help='artifact directory')
    solve = sub.add_parser('solve', parents=[common], help='solve the HJBI equation')
    solve.add_argument('--out', help='artifact directory')
    verify = sub.add_parser('verify', parents=[common], help='manufactured-solution tables')
    verify.add_argument('--out', help='artifact directory')
    simulate = sub.add_parser('simulate', parents=[common], help='Monte Carlo cost of a policy')
    simulate.add_argument('--policy', required=True, help='artifact directory of a solve run')
    simulate.add_argument('--out', help='artifact directory')
    sub.add_parser('moments', parents=[common], help='stationary statistics of the model')
    return parser


def load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    config = config.with_env()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def run(args) -> dict:
    config = load_config(args)
    if args.command == 'moments':
        return CalibrationService(config, create_store(config, 'moments', ':memory:')).moments()
    store = create_store(config, args.command, args.out)
    if args.command == 'identify':
        return CalibrationService(config, store).identify(args.data)
    if args.command == 'solve':
        return SolverService(config, store).solve()
    if args.command == 'verify':
        return VerificationService(config, store).verify()
    return SimulationService(config, CsvArtifactStore(args.policy), store).simulate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main execution function."""
    load_dotenv()
    args = build_parser().parse_args(argv)

    print("\n" + "🌊"*30)
    print("   Sediment Replenishment Control")
    print("🌊"*30 + "\n")

    try:
        result = run(args)
        if result['success']:
            print(f"✅ {args.command} completed successfully!")
            return 0
        print(f"❌ {args.command} finished with failures")
        return ConvergenceError.exit_code
    except KeyboardInterrupt:
        print("\n\n⚠️  Interrupted by user")
        return 130
    except SedimentControlError as e:
        print(f"\n❌ {type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        print(f"\n❌ Fatal error: {e}")
        traceback.print_exc()
        return 1
    finally:
        print("👋 Goodbye!\n")


if __name__ == "__main__":
    sys.exit(main())
