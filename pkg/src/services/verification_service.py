"""
Verification Service - manufactured-solution convergence tables.
"""
import time

from src.config import RunConfig
from src.domain.manufactured import CONVERGENCE_COLUMNS, ManufacturedCase, convergence_study
from src.infrastructure.artifact_store import ArtifactStore


def table_name(beta: float, q_bar: float) -> str:
    return f"convergence_beta{beta:g}_qbar{q_bar:g}.csv"


class VerificationService:
    """Runs the `verify` command: one table per (beta, Qbar)."""

    def __init__(self, config: RunConfig, store: ArtifactStore):
        self.config = config
        self.store = store

    def verify(self) -> dict:
        cfg = self.config.verify
        model = self.config.streamflow.model()
        s_bar = self.config.sediment.s_bar_m3
        started = time.perf_counter()

        print("\n" + "="*60)
        print("🚀 Manufactured-solution verification")
        print("="*60)
        print(f"📊 beta: {', '.join(f'{b:g}' for b in cfg.betas)}")
        print(f"📊 Qbar: {', '.join(f'{q:g}' for q in cfg.q_bars_m3s)} m3/s")
        print(f"📊 N: {', '.join(str(n) for n in cfg.ns)} (tol {cfg.tol:g}, w {cfg.w})")
        print("="*60 + "\n")

        self.store.setup()
        tables = {}
        failures = 0
        for q_bar in cfg.q_bars_m3s:
            transport = self.config.sediment.transport(q_bar)
            for beta in cfg.betas:
                case = ManufacturedCase(beta=beta, q_bar=q_bar, s_bar=s_bar, amp=cfg.amp)
                rows = convergence_study(
                    case, model, transport, cfg.ns, tol=cfg.tol, w=cfg.w,
                    threads=self.config.threads,
                )
                name = table_name(beta, q_bar)
                self.store.write_table(name, CONVERGENCE_COLUMNS, [row.as_row() for row in rows])
                tables[name] = rows
                for row in rows:
                    if row.failure:
                        failures += 1
                        print(f"⚠️  beta={beta:g} Qbar={q_bar:g} N={row.n}: {row.failure}")
                finest = [r for r in rows if r.norms is not None]
                if finest:
                    last = finest[-1]
                    print(f"💾 {name}: N={last.n} l1={last.norms.l1:.3e} "
                          f"linf={last.norms.linf:.3e} |h-1|={abs(last.norms.h_error):.2e}")

        self.store.write_metadata({
            'command': 'verify',
            'config': self.config.to_dict(),
            'config_hash': self.config.content_hash(),
            'tables': sorted(tables),
            'failures': failures,
            'wall_time_s': time.perf_counter() - started,
        })

        print("\n" + "="*60)
        print("✅ VERIFICATION COMPLETE" if not failures else f"⚠️  VERIFICATION FINISHED WITH {failures} FAILED RUNS")
        print("="*60 + "\n")
        return {
            'success': failures == 0,
            'tables': tables,
            'failures': failures,
        }
