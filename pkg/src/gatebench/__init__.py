"""Evidence-gated benchmark harness for closed-loop tool-using agent evaluation.

The package runs simulated workload families under declared drivers and
operating settings, emits typed event logs, admits or rejects runs against an
explicit evidence contract, replays runs under family-specific replay classes,
and produces claim-scoped reports including a two-variant controller decision
study with reward-AUC selection.
"""

__version__ = "0.1.0"
