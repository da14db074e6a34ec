"""fedtab: federated averaging for tabular risk classifiers.

Core pieces: from-scratch differentiable classifiers (models), exact
rank-based AUC (metrics), a cohort pipeline with imputation (data,
synthetic), the pure federated-averaging state machine (fedcore), a FastAPI
coordinator (coordinator), a hospital client daemon (client), and the
experiment harness (experiment).
"""

__version__ = "0.1.0"
