"""labflow: a checkpointable multi-agent research workflow engine.

Five agent pipelines (supervisor, literature reviewer, data analyzer,
coder, manuscript writer) execute on a directed-graph engine with strict
router protocols, bounded retries, append-only event logs, and
checkpoint/resume. All model and tool calls go through pluggable gateways,
so the whole pipeline runs deterministically against scripted mocks.
"""

__version__ = "0.1.0"
