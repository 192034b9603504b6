"""Plant traps in a table, let each cloud profile anonymize it, then audit."""

from verixanon.config import RunConfig
from verixanon.experiments import audit_summary, derive_salt, prepare, run_cloud, verify
from verixanon.synthetic import strong_signal


def main() -> None:
    cfg = RunConfig()
    table = strong_signal(cfg.dataset_rows, cfg.seed)
    client = prepare(table, cfg, derive_salt(cfg.seed, "demo"))
    s = client.summary
    print(f"{s['genuine_rows']} genuine rows, {s['sentinels']} sentinels, {s['twins']} twins, "
          f"epsilon {s['epsilon']:.3f}")

    published = client.outsourced.published()
    for kind in ("honest", "lazy", "dumb", "approximate"):
        report = verify(run_cloud(published, cfg, kind), client.manifest, cfg)
        summary = audit_summary(report)
        layers = ", ".join(summary["triggered_layers"]) or "none"
        print(f"{kind:<12} {summary['verdict']:<20} triggered: {layers}")


if __name__ == "__main__":
    main()
